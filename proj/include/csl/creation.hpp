#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "csl/lattice.hpp"

namespace csl {

/// Per-site displaced oscillator: H = m a^dag a + g (a + a^dag), collapse rate kappa = lambda/2 on <a>.
struct CreationSite {
  double m = 1.0;
  double lambda = 0.0;
  double g = 0.0;
};

struct CreationState {
  double t = 0.0;
  std::complex<double> xi;  // <a>
  double n = 0.0;           // <a^dag a>
  double h = 0.0;           // m n + 2 g Re xi
  double n_rate = 0.0;
  double h_rate = 0.0;
};

/// Closed forms from vacuum at t = 0:
///   xi = -i g/(i m + kappa) (1 - exp(-(i m + kappa) t)),
///   n = (2 g^2 / D)(kappa t - kappa C + m S),  h = m n + 2 g Re xi,
/// with D = m^2 + kappa^2, C = int_0^t e^{-kappa s} cos(ms) ds, S = int_0^t e^{-kappa s} sin(ms) ds.
CreationState creation_mean_fields(double t, const CreationSite& site);

/// int_0^t {m [1 - e^{-kappa s} cos ms] - kappa e^{-kappa s} sin ms} ds = m t - m C - kappa S.
double creation_energy_bracket_integral(double t, double m, double kappa);

/// RK4 on d xi/dt = -(i m + kappa) xi - i g, dn/dt = -2 g Im xi from vacuum.
std::vector<CreationState> creation_ode_integrate(const CreationSite& site, double t_max, double dt, int record_every = 1);

/// W-field energy density at cell x:
///   -lambda / ((pi a^2)^(d/2) D) sum_z dV exp(-(x-z)^2/a^2) g(z)^2 (m t - m C - kappa S).
double creation_wfield_energy(const LatticeSpec& lattice, std::size_t x, double t, double m, double lambda, double a,
                              const std::vector<double>& g);

/// Particle energy gained by time t summed over the lattice, dV sum_z [h(z, t) - h(z, 0)].
double creation_particle_energy(const LatticeSpec& lattice, double t, double m, double lambda, const std::vector<double>& g);

struct CreationTrajectorySummary {
  std::vector<double> times;
  std::vector<std::complex<double>> mean_xi;
  std::vector<double> stderr_xi_re, stderr_xi_im;
  std::vector<double> mean_n, stderr_n;
  /// Largest top-Fock-level occupation seen in any trajectory.
  double max_top_occupation = 0.0;
  bool truncation_warning = false;
};

/// Trajectory ensemble for one site in the Fock basis 0..n_max, one collapse channel with values n
/// and unit weight, Strang-split as elsewhere.
CreationTrajectorySummary creation_trajectory_mode(const CreationSite& site, int n_max, double t_max, double dt,
                                                   std::size_t n_traj, std::uint64_t seed, int threads = 1,
                                                   int record_every = 1);

}  // namespace csl
