#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "csl/lattice.hpp"

namespace csl {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using SparseH = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

/// Number of particles of one species sitting in one cell.
struct Occupation {
  std::size_t cell = 0;
  double count = 1.0;
  int species = 0;
};

/// A number-density eigenstate: n(z) = count / dV on the listed cells.
struct Configuration {
  std::vector<Occupation> sites;
};

/// A(x) on every lattice cell for one configuration.
struct MassDensityProfile {
  std::vector<double> values;
};

/// Gaussian smearing kernel K_z(x) = (pi a^2)^(-d/4) exp(-(x-z)^2 / 2a^2), sampled at
/// cell centres and rescaled per source cell so that dV * sum_x K_z(x)^2 = 1.
/// The kernel factorises over axes, so only per-axis tables are stored.
class SmearingKernel {
 public:
  SmearingKernel(const LatticeSpec& lattice, double a);

  const LatticeSpec& lattice() const { return lattice_; }
  double a() const { return a_; }

  /// K_z(x) for every x.
  std::vector<double> column(std::size_t z) const;
  double value(std::size_t z, std::size_t x) const;
  /// dV * sum_x K_z(x) K_z'(x); approximates exp(-(z-z')^2 / 4a^2).
  double overlap(std::size_t z, std::size_t zp) const;

 private:
  LatticeSpec lattice_;
  double a_;
  // axis_[zi * n + xi]: normalised one-dimensional factor.
  std::vector<double> axis_;
};

MassDensityProfile build_mass_density(const SmearingKernel& kernel, const CollapseParams& params,
                                      const Configuration& config);

/// Collapse channels c with diagonal values v(c, b) on basis state b and measure weight
/// weight(c). For lattice channels the weight is dV and v is A(x); a Fock site uses
/// v = n and weight 1. The collapse rate between basis states r, s is
/// (lambda/2) sum_c weight(c) (v(c,r) - v(c,s))^2.
struct CollapseChannels {
  Eigen::MatrixXd values;
  Eigen::VectorXd weights;

  std::size_t n_channels() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t basis_size() const { return static_cast<std::size_t>(values.cols()); }
  void validate() const;
};

/// One basis state per branch configuration; channels are lattice cells.
CollapseChannels branch_channels(const SmearingKernel& kernel, const CollapseParams& params,
                                 const std::vector<Configuration>& branches);
/// One particle of the given species; basis states are lattice cells.
CollapseChannels single_particle_channels(const SmearingKernel& kernel, const CollapseParams& params,
                                          int species = 0);
/// Two particles of one species on a 1-D lattice; basis index z1 * n + z2.
CollapseChannels pair_channels(const SmearingKernel& kernel, const CollapseParams& params, int species = 0);
/// A single oscillator site truncated at n_max quanta.
CollapseChannels fock_site_channel(int n_max);

/// D(r, s) = (lambda/2) sum_c weight(c) (v(c,r) - v(c,s))^2.
Eigen::MatrixXd dephasing_matrix(const CollapseChannels& channels, double lambda);

struct ZeroHamiltonian {
  std::size_t dim = 1;
};
/// Single particle, H = -laplacian / 2m with the second-order stencil.
struct FreeLattice {
  double m = 1.0;
};
/// Two distinguishable particles on a 1-D lattice with pair potential V(x1 - x2).
struct PairPotential {
  double m = 1.0;
  std::function<double(double)> V;
};
/// One site of m a^dag a + g (a + a^dag), truncated at n_max.
struct DisplacedOscillators {
  double m = 1.0;
  double g = 0.0;
  int n_max = 8;
};
/// Static branches with diagonal energies (mass plus Newtonian self-energy).
struct GravityBranches {
  std::vector<double> energies;
};
struct ExplicitMatrix {
  CMatrix H;
};

using HamiltonianSpec =
    std::variant<ZeroHamiltonian, FreeLattice, PairPotential, DisplacedOscillators, GravityBranches, ExplicitMatrix>;

SparseH build_hamiltonian(const HamiltonianSpec& spec, const LatticeSpec& lattice);

/// Basis amplitudes (sum |c|^2 = 1) of a Gaussian packet exp(-(x-x0)^2/4s^2 + i k.x) on the lattice.
CVector gaussian_packet(const LatticeSpec& lattice, const std::array<double, 3>& centre, double width,
                        const std::array<double, 3>& k0 = {0.0, 0.0, 0.0});

struct DensityMatrixTolerances {
  double hermitian = 1e-12;
  double trace = 1e-10;
  double min_eigenvalue = -1e-8;
};

/// Throws InvariantViolation when rho is not Hermitian, unit trace and positive.
void check_density_matrix(const CMatrix& rho, const DensityMatrixTolerances& tol = {}, bool eigenvalues = true);

}  // namespace csl
