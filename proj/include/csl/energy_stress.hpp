#pragma once

#include <array>
#include <functional>
#include <vector>

#include "csl/hilbert.hpp"
#include "csl/master_equation.hpp"

namespace csl {

/// Components of a symmetric tensor field on the lattice. Entries are meaningful only where
/// `valid` is set (cells whose difference stencil stays inside an open box).
struct TensorField {
  std::vector<double> t00;
  std::vector<std::array<double, 3>> t0i;
  std::vector<std::array<double, 9>> tij;  // row-major i*3+j
  std::vector<char> valid;
};

struct ParticleTensors {
  TensorField mass;    // T_m: mass density, momentum density, momentum flux
  TensorField energy;  // T_e: kinetic-energy density and its flux
};

/// One-particle tensors from the wavefunction psi(x) (dV sum |psi|^2 = 1), central differences:
///   T_m^00 = m|psi|^2, T_m^0i = Im(psi* d_i psi),
///   T_m^ij = (1/4m)(d_i psi* d_j psi + d_j psi* d_i psi - psi* d_i d_j psi - d_i d_j psi* psi),
///   T_e^00 = |grad psi|^2 / 2m, T_e^0i = (i/4m^2)(d_k d_i psi* d_k psi - d_k psi* d_k d_i psi),
///   T_e^ij = (1/8m^3)(2 Re[d_i d_k psi* d_j d_k psi] - 2 Re[d_k psi* d_k d_i d_j psi]).
ParticleTensors particle_tensor_components(const CVector& psi, const LatticeSpec& lattice, double m);

/// d_t T_m^00 + d_i T_m^0i with d_t psi = -i H psi.
std::vector<double> mass_continuity_residual(const CVector& psi, const SparseH& H, const LatticeSpec& lattice, double m);
/// d_t T_e^00 + d_i T_e^0i with d_t psi = -i H psi.
std::vector<double> energy_continuity_residual(const CVector& psi, const SparseH& H, const LatticeSpec& lattice,
                                               double m);

/// Marginal momentum balance of particle 1 in a two-particle 1-D state psi(x1, x2)
/// (index x1 * n + x2, dx^2 sum |psi|^2 = 1):
///   momentum_rate(x) = d_t T_m^01(x) + d_x T_m^11(x),   force(x) = -sum_x2 dx |psi|^2 V'(x - x2).
struct PairMomentumBalance {
  std::vector<double> momentum_rate;
  std::vector<double> force;
  std::vector<double> residual;  // momentum_rate - force
};
PairMomentumBalance pair_momentum_balance(const CVector& psi, const SparseH& H, const LatticeSpec& lattice, double m,
                                          const std::function<double(double)>& dV);

/// dim * lambda (M/M0)^2 N / (4 m a^2).
double energy_gain_analytic(int dim, double lambda, double mass_ratio, double n_particles, double m, double a);
/// lambda (M/M0)^2 (1 - exp(-dx^2/4a^2)) / (m dx^2) per axis, summed over axes: the rate the lattice
/// reaches for a smooth one-particle state.
double energy_gain_lattice(const LatticeSpec& lattice, double lambda, double mass_ratio, double m, double a);

struct EnergySeries {
  std::vector<double> t;
  std::vector<double> e_particle;
  std::vector<double> e_wfield;
};

struct EnergyGainResult {
  double measured_slope = 0.0;
  double analytic = 0.0;
  double lattice = 0.0;
  EnergySeries series;
  bool interacting = false;
};

struct EnergyGainScenario {
  LatticeSpec lattice;  // dt and n_steps set the time grid
  double m = 1.0;
  double packet_width = 1.0;
  std::array<double, 3> k0{0.0, 0.0, 0.0};
  int species = 0;
  int record_every = 1;
};

/// Full density-matrix run for one free particle: E_p = Tr(H rho), E_w = int Tr(H (D o rho)) dt
/// (trapezoid), slope by least squares.
EnergyGainResult energy_gain_full(const EnergyGainScenario& sc, const CollapseParams& params);

/// Translation-reduced run on a periodic lattice: f(r) = sum_z rho(z + r, z) obeys df/dt = -D(r) f exactly
/// because [H, rho] drops out of this sector; the kinetic energy only needs f(0) and f(+-e_i).
EnergyGainResult energy_gain_reduced(const EnergyGainScenario& sc, const CollapseParams& params);

/// Per-cell collapse contribution to the kinetic-energy density rate, from the forward-difference
/// density (1/2m) sum_i |d_i psi|^2 evaluated on -D o rho. Single-particle basis.
std::vector<double> collapse_energy_density_rate(const CMatrix& rho, const Eigen::MatrixXd& D, const LatticeSpec& lattice,
                                                 double m);

/// W-field energy density at every record time:
///   T_w(x, t) = -lambda/(2 m pi^(d/2) a^(d+4)) sum_z dV (z-x)^2 exp(-(z-x)^2/a^2) int_0^t nbar(z, t1) dt1
/// with the time integral by trapezoid. nbar[k][z] is the number density at times[k].
std::vector<std::vector<double>> wfield_energy_density(const LatticeSpec& lattice, const CollapseParams& params, double m,
                                                       const std::vector<double>& times,
                                                       const std::vector<std::vector<double>>& nbar);

/// Momentum components -(i lambda/2) int dt1 Tr([A(x), d_i A(x)] rho(t1)) in a basis where every A(x)
/// is diagonal. values(x, b) = A(x) on basis state b; rho_diag[k][b] = rho_bb at times[k].
std::vector<std::vector<std::array<double, 3>>> wfield_momentum_density(const LatticeSpec& lattice,
                                                                       const CollapseChannels& channels, double lambda,
                                                                       const std::vector<double>& times,
                                                                       const std::vector<CMatrix>& rho);

struct LedgerDrift {
  double max_drift = 0.0;
  std::size_t at = 0;
};
/// max_k |E_p(k) + E_w(k) - E_p(0) - E_w(0)|.
LedgerDrift ledger_check(const std::vector<double>& e_particle, const std::vector<double>& e_wfield);

/// Least-squares slope of y against t.
double fit_slope(const std::vector<double>& t, const std::vector<double>& y);

}  // namespace csl
