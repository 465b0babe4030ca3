#pragma once

#include <cstdint>
#include <vector>

#include "csl/hilbert.hpp"

namespace csl {

enum class PotentialVariant { point, smeared };
enum class GravityMode { rescaled, smeared_clock };

struct GravityScenario {
  LatticeSpec lattice;
  CollapseParams params;
  std::vector<Configuration> branches;
  std::vector<cplx> amplitudes;
  /// G times the reference mass; potentials are -GM sum (mass/m0) count / |x - z|.
  double gm = 0.0;
  PotentialVariant variant = PotentialVariant::point;
  void validate() const;
};

/// 1/r averaged over a unit cube centred on the origin.
inline constexpr double kCubeSelfPotential = 2.3800772;

/// phi(x) for one configuration. The point variant uses the cube average of 1/r on the
/// source cell; the smeared variant spreads each particle as a Gaussian of width a,
/// -GM erf(r / (sqrt2 a)) / r, centre value -GM sqrt(2/pi) / a.
/// Throws ConfigError where |phi| >= 1.
std::vector<double> gravitational_potential(const LatticeSpec& lattice, const CollapseParams& params,
                                            const Configuration& config, double gm, PotentialVariant variant);

/// Per branch r and cell x: A_r(x), phi_r(x), the drift u_r(x) and the proper-time factor
/// s_r(x) = tau_r(x) / t.
struct GravityBranchData {
  std::vector<std::vector<double>> A, phi, u, stretch;
  double lambda = 0.0;
  double dV = 1.0;
  std::size_t n_branches() const { return A.size(); }
};

/// rescaled: u = 2 lambda A / (1 + phi), stretch 1 + phi with the scenario's potential.
/// smeared_clock: u = 2 lambda A, stretch 1 + phi~ with the smeared potential.
GravityBranchData gravity_branch_data(const GravityScenario& scenario, GravityMode mode);

/// Exact log |rho_rs(t) / (c_r c_s*)| from Gaussian integration over w cell by cell:
///   -(dV / 8 lambda) sum_x [min(tau_r, tau_s) (u_r - u_s)^2 + |tau_r - tau_s| u_later^2].
double gravity_log_coherence(const GravityBranchData& data, double t, std::size_t r, std::size_t s);

/// Collapse channels for the slab [0, t]: each cell is cut at {0, tau_r(x)} and every piece
/// becomes a channel of weight dV * length with value u_r / 2 lambda on the branches still active.
CollapseChannels gravity_segment_channels(const GravityBranchData& data, double t);

struct GravityRunResult {
  GravityMode mode = GravityMode::rescaled;
  std::size_t n_traj = 0;
  std::uint64_t seed = 0;
  std::vector<double> times;
  std::vector<CMatrix> mean_rho;
  std::vector<Eigen::MatrixXd> stderr_rho_re, stderr_rho_im;
  /// Per time: measured and oracle log |rho_rs|, and the standard error of the measured value.
  std::vector<Eigen::MatrixXd> log_coherence, log_coherence_oracle, log_coherence_stderr;
  /// Outcome histogram at the last time; last slot counts undecided trajectories.
  std::vector<std::size_t> outcome_counts;
  std::vector<double> outcome_frequency, outcome_stderr;
};

/// Physical-measure ensemble. Every record time gets its own ensemble (seeded from
/// stream_seed(seed, time index)), and the collapse over [0, t] is applied in one exact step.
/// Branch phases come from the diagonal energies of gravity_branch_energies.
GravityRunResult gravity_collapse_run(const GravityScenario& scenario, const std::vector<double>& times,
                                      GravityMode mode, std::uint64_t seed, std::size_t n_traj, int threads = 1,
                                      double collapse_threshold = 0.99);

/// Branch energies M sum count (1 + phi_r / 2): rest mass plus Newtonian self-energy.
std::vector<double> gravity_branch_energies(const GravityScenario& scenario);

struct GravityRates {
  double oracle = 0.0;              // exact -d/dt log|rho_rs|
  double flat = 0.0;                // phi = 0 value, (lambda/2) dV sum (A_r - A_s)^2
  double asymmetric_reading = 0.0;  // (lambda/2) dV sum (A_r - A_s)^2 / (1 + phi_r)^2
  double symmetric_reading = 0.0;   // (lambda/2) dV sum (A_r/(1+phi_r) - A_s/(1+phi_s))^2
  double simulated = 0.0;           // slope fitted to a run, NaN when none given
  double simulated_stderr = 0.0;
  double relative_difference = 0.0; // (simulated - oracle) / oracle
};

GravityRates gravity_decay_rate(const GravityScenario& scenario, GravityMode mode, std::size_t r, std::size_t s,
                                const GravityRunResult* run = nullptr);

}  // namespace csl
