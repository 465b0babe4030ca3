#include "csl/creation.hpp"

#include <cmath>
#include <numbers>

#include "csl/errors.hpp"
#include "csl/hilbert.hpp"
#include "csl/trajectories.hpp"

namespace csl {

namespace {

using cd = std::complex<double>;

void check(const CreationSite& s) {
  if (!(s.m > 0.0) || !std::isfinite(s.m)) throw ConfigError("creation m must be > 0");
  if (!(s.lambda >= 0.0) || !std::isfinite(s.lambda)) throw ConfigError("creation lambda must be >= 0");
  if (!std::isfinite(s.g)) throw ConfigError("creation g must be finite");
}

// C and S integrals of e^{-kappa s} cos/sin(m s) over [0, t].
void cs_integrals(double t, double m, double kappa, double& C, double& S) {
  const double D = m * m + kappa * kappa;
  const double e = std::exp(-kappa * t), c = std::cos(m * t), s = std::sin(m * t);
  C = (kappa - e * (kappa * c - m * s)) / D;
  S = (m - e * (kappa * s + m * c)) / D;
}

}  // namespace

double creation_energy_bracket_integral(double t, double m, double kappa) {
  double C, S;
  cs_integrals(t, m, kappa, C, S);
  return m * t - m * C - kappa * S;
}

CreationState creation_mean_fields(double t, const CreationSite& site) {
  check(site);
  const double m = site.m, g = site.g, kappa = 0.5 * site.lambda;
  const double D = m * m + kappa * kappa;
  const cd z(kappa, m);  // i m + kappa
  CreationState st;
  st.t = t;
  st.xi = cd(0.0, -g) / z * (1.0 - std::exp(-z * t));
  double C, S;
  cs_integrals(t, m, kappa, C, S);
  st.n = 2.0 * g * g / D * (kappa * t - kappa * C + m * S);
  st.h = m * st.n + 2.0 * g * st.xi.real();
  const double e = std::exp(-kappa * t), c = std::cos(m * t), s = std::sin(m * t);
  st.n_rate = 2.0 * g * g / D * (kappa * (1.0 - e * c) + m * e * s);
  st.h_rate = g * g * site.lambda / D * (m * (1.0 - e * c) - kappa * e * s);
  return st;
}

std::vector<CreationState> creation_ode_integrate(const CreationSite& site, double t_max, double dt, int record_every) {
  check(site);
  if (!(dt > 0.0) || !(t_max >= 0.0)) throw ConfigError("creation ODE needs dt > 0 and t_max >= 0");
  if (record_every < 1) throw ConfigError("record_every must be >= 1");
  const double m = site.m, g = site.g, kappa = 0.5 * site.lambda;
  const cd z(kappa, m);
  struct Y {
    cd xi;
    double n;
  };
  auto f = [&](const Y& y) { return Y{-z * y.xi - cd(0.0, g), -2.0 * g * y.xi.imag()}; };
  auto axpy = [](const Y& y, double h, const Y& k) { return Y{y.xi + h * k.xi, y.n + h * k.n}; };
  auto emit = [&](double t, const Y& y) {
    CreationState st;
    st.t = t;
    st.xi = y.xi;
    st.n = y.n;
    st.h = m * y.n + 2.0 * g * y.xi.real();
    Y d = f(y);
    st.n_rate = d.n;
    st.h_rate = m * d.n + 2.0 * g * d.xi.real();
    return st;
  };
  const long steps = std::lround(t_max / dt);
  std::vector<CreationState> out;
  Y y{cd(0.0), 0.0};
  out.push_back(emit(0.0, y));
  for (long s = 1; s <= steps; ++s) {
    Y k1 = f(y), k2 = f(axpy(y, 0.5 * dt, k1)), k3 = f(axpy(y, 0.5 * dt, k2)), k4 = f(axpy(y, dt, k3));
    y.xi += dt / 6.0 * (k1.xi + 2.0 * k2.xi + 2.0 * k3.xi + k4.xi);
    y.n += dt / 6.0 * (k1.n + 2.0 * k2.n + 2.0 * k3.n + k4.n);
    if (s % record_every == 0 || s == steps) out.push_back(emit(s * dt, y));
  }
  return out;
}

double creation_wfield_energy(const LatticeSpec& l, std::size_t x, double t, double m, double lambda, double a,
                              const std::vector<double>& g) {
  l.validate();
  if (g.size() != l.n_cells()) throw ConfigError("g profile does not match the lattice");
  if (x >= l.n_cells()) throw ConfigError("cell is off-lattice");
  check(CreationSite{m, lambda, 0.0});
  const double kappa = 0.5 * lambda, D = m * m + kappa * kappa;
  const double bracket = creation_energy_bracket_integral(t, m, kappa);
  const double pref = -lambda / (std::pow(std::numbers::pi * a * a, l.dim / 2.0) * D);
  double s = 0.0;
  for (std::size_t z = 0; z < g.size(); ++z) {
    if (g[z] == 0.0) continue;
    s += std::exp(-l.distance_squared(x, z) / (a * a)) * g[z] * g[z];
  }
  return pref * l.cell_volume() * s * bracket;
}

double creation_particle_energy(const LatticeSpec& l, double t, double m, double lambda, const std::vector<double>& g) {
  if (g.size() != l.n_cells()) throw ConfigError("g profile does not match the lattice");
  double s = 0.0;
  for (double gz : g) {
    if (gz == 0.0) continue;
    s += creation_mean_fields(t, CreationSite{m, lambda, gz}).h;
  }
  return l.cell_volume() * s;
}

CreationTrajectorySummary creation_trajectory_mode(const CreationSite& site, int n_max, double t_max, double dt,
                                                   std::size_t n_traj, std::uint64_t seed, int threads, int record_every) {
  check(site);
  TrajectoryConfig cfg;
  cfg.channels = fock_site_channel(n_max);
  cfg.H = build_hamiltonian(DisplacedOscillators{site.m, site.g, n_max}, LatticeSpec{});
  cfg.lambda = site.lambda;
  cfg.dt = dt;
  cfg.n_steps = static_cast<int>(std::lround(t_max / dt));
  cfg.record_every = record_every;
  cfg.store_states = true;
  cfg.psi0 = CVector::Zero(n_max + 1);
  cfg.psi0[0] = 1.0;
  auto ens = run_ensemble(cfg, n_traj, seed, threads);

  CreationTrajectorySummary out;
  out.times = ens.times;
  const Eigen::Index N = n_max + 1;
  for (std::size_t k = 0; k < ens.times.size(); ++k) {
    const CMatrix& rho = ens.mean_rho[k];
    // <a> = sum_n sqrt(n+1) rho(n+1, n)
    cd xi = 0.0;
    double vr = 0.0, vi = 0.0;
    for (Eigen::Index n = 0; n + 1 < N; ++n) {
      double c = std::sqrt(n + 1.0);
      xi += c * rho(n + 1, n);
      vr += c * c * ens.stderr_rho_re[k](n + 1, n) * ens.stderr_rho_re[k](n + 1, n);
      vi += c * c * ens.stderr_rho_im[k](n + 1, n) * ens.stderr_rho_im[k](n + 1, n);
    }
    double nm = 0.0;
    for (Eigen::Index n = 0; n < N; ++n) nm += static_cast<double>(n) * ens.mean_weights[k][static_cast<std::size_t>(n)];
    out.mean_xi.push_back(xi);
    out.stderr_xi_re.push_back(std::sqrt(vr));
    out.stderr_xi_im.push_back(std::sqrt(vi));
    out.mean_n.push_back(nm);
    out.max_top_occupation = std::max(out.max_top_occupation, ens.mean_weights[k].back());
  }
  out.stderr_n.assign(out.times.size(), 0.0);
  for (std::size_t k = 0; k < out.times.size(); ++k) {
    // error of the mean occupation from per-level errors, treated as independent (upper bound)
    double v = 0.0;
    for (Eigen::Index n = 0; n < N; ++n) {
      double e = static_cast<double>(n) * ens.stderr_weights[k][static_cast<std::size_t>(n)];
      v += e * e;
    }
    out.stderr_n[k] = std::sqrt(v);
  }
  out.truncation_warning = out.max_top_occupation > 1e-6;
  return out;
}

}  // namespace csl
