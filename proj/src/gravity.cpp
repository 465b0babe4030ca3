#include "csl/gravity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "csl/errors.hpp"
#include "csl/noise.hpp"
#include "csl/parallel.hpp"
#include "csl/trajectories.hpp"

namespace csl {

namespace {

double mass_ratio(const CollapseParams& p, int species) {
  if (p.masses.empty()) return 1.0;
  if (species < 0 || static_cast<std::size_t>(species) >= p.masses.size())
    throw ConfigError("species index has no mass");
  return p.masses[static_cast<std::size_t>(species)] / p.m0;
}

}  // namespace

void GravityScenario::validate() const {
  lattice.validate();
  params.validate();
  if (branches.size() < 1) throw ConfigError("gravity scenario needs at least one branch");
  if (amplitudes.size() != branches.size()) throw ConfigError("one amplitude per branch required");
  double norm = 0.0;
  for (auto c : amplitudes) norm += std::norm(c);
  if (std::abs(norm - 1.0) > 1e-10) throw ConfigError("branch amplitudes must satisfy sum |c|^2 = 1");
  if (!std::isfinite(gm) || gm < 0.0) throw ConfigError("gm must be finite and >= 0");
  for (const auto& b : branches)
    for (const auto& o : b.sites)
      if (o.cell >= lattice.n_cells()) throw ConfigError("branch occupies an off-lattice cell");
}

std::vector<double> gravitational_potential(const LatticeSpec& l, const CollapseParams& p, const Configuration& config,
                                            double gm, PotentialVariant variant) {
  l.validate();
  const std::size_t N = l.n_cells();
  std::vector<double> phi(N, 0.0);
  if (gm == 0.0) return phi;
  const double a = p.a;
  for (const auto& o : config.sites) {
    if (o.cell >= N) throw ConfigError("configuration occupies an off-lattice cell");
    const double q = gm * o.count * mass_ratio(p, o.species);
    for (std::size_t x = 0; x < N; ++x) {
      double r = std::sqrt(l.distance_squared(x, o.cell));
      double v;
      if (variant == PotentialVariant::point) {
        v = x == o.cell ? kCubeSelfPotential / l.dx : 1.0 / r;
      } else {
        v = r == 0.0 ? std::sqrt(2.0 / std::numbers::pi) / a : std::erf(r / (std::numbers::sqrt2 * a)) / r;
      }
      phi[x] -= q * v;
    }
  }
  for (std::size_t x = 0; x < N; ++x)
    if (!(std::abs(phi[x]) < 1.0)) throw ConfigError("weak-field violation: |phi| >= 1 at cell " + std::to_string(x));
  return phi;
}

GravityBranchData gravity_branch_data(const GravityScenario& sc, GravityMode mode) {
  sc.validate();
  SmearingKernel kernel(sc.lattice, sc.params.a);
  GravityBranchData d;
  d.lambda = sc.params.lambda;
  d.dV = sc.lattice.cell_volume();
  const std::size_t N = sc.lattice.n_cells();
  for (const auto& b : sc.branches) {
    auto A = build_mass_density(kernel, sc.params, b).values;
    auto phi = gravitational_potential(sc.lattice, sc.params, b, sc.gm, sc.variant);
    std::vector<double> u(N), st(N);
    if (mode == GravityMode::rescaled) {
      for (std::size_t x = 0; x < N; ++x) {
        u[x] = 2.0 * d.lambda * A[x] / (1.0 + phi[x]);
        st[x] = 1.0 + phi[x];
      }
    } else {
      auto ps = gravitational_potential(sc.lattice, sc.params, b, sc.gm, PotentialVariant::smeared);
      for (std::size_t x = 0; x < N; ++x) {
        u[x] = 2.0 * d.lambda * A[x];
        st[x] = 1.0 + ps[x];
      }
    }
    d.A.push_back(std::move(A));
    d.phi.push_back(std::move(phi));
    d.u.push_back(std::move(u));
    d.stretch.push_back(std::move(st));
  }
  return d;
}

double gravity_log_coherence(const GravityBranchData& d, double t, std::size_t r, std::size_t s) {
  if (r >= d.n_branches() || s >= d.n_branches()) throw ConfigError("branch index out of range");
  if (t < 0.0) throw ConfigError("time must be >= 0");
  if (r == s || d.lambda == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t x = 0; x < d.A[r].size(); ++x) {
    double tr = t * d.stretch[r][x], ts = t * d.stretch[s][x];
    double du = d.u[r][x] - d.u[s][x];
    double later = tr > ts ? d.u[r][x] : d.u[s][x];
    sum += std::min(tr, ts) * du * du + std::abs(tr - ts) * later * later;
  }
  return -d.dV / (8.0 * d.lambda) * sum;
}

CollapseChannels gravity_segment_channels(const GravityBranchData& d, double t) {
  if (t < 0.0) throw ConfigError("time must be >= 0");
  const std::size_t B = d.n_branches(), N = B ? d.A[0].size() : 0;
  std::vector<std::vector<double>> cols;
  std::vector<double> weights;
  std::vector<double> cuts;
  for (std::size_t x = 0; x < N; ++x) {
    cuts.assign(1, 0.0);
    for (std::size_t r = 0; r < B; ++r) cuts.push_back(t * d.stretch[r][x]);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      double len = cuts[k + 1] - cuts[k];
      if (!(len > 0.0)) continue;
      std::vector<double> v(B, 0.0);
      bool any = false;
      for (std::size_t r = 0; r < B; ++r)
        if (t * d.stretch[r][x] >= cuts[k + 1]) {
          v[r] = d.u[r][x] / (2.0 * d.lambda);
          any = any || v[r] != 0.0;
        }
      if (!any) continue;
      cols.push_back(std::move(v));
      weights.push_back(d.dV * len);
    }
  }
  CollapseChannels ch;
  ch.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cols.size()), static_cast<Eigen::Index>(B));
  ch.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    ch.weights[static_cast<Eigen::Index>(c)] = weights[c];
    for (std::size_t r = 0; r < B; ++r) ch.values(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = cols[c][r];
  }
  return ch;
}

std::vector<double> gravity_branch_energies(const GravityScenario& sc) {
  std::vector<double> e;
  for (const auto& b : sc.branches) {
    auto phi = gravitational_potential(sc.lattice, sc.params, b, sc.gm, sc.variant);
    double E = 0.0;
    for (const auto& o : b.sites) E += sc.params.m0 * mass_ratio(sc.params, o.species) * o.count * (1.0 + 0.5 * phi[o.cell]);
    e.push_back(E);
  }
  return e;
}

GravityRunResult gravity_collapse_run(const GravityScenario& sc, const std::vector<double>& times, GravityMode mode,
                                      std::uint64_t seed, std::size_t n_traj, int threads, double threshold) {
  sc.validate();
  if (n_traj < 1) throw ConfigError("n_traj must be >= 1");
  if (times.empty()) throw ConfigError("gravity run needs at least one time");
  for (std::size_t k = 0; k < times.size(); ++k)
    if (!(times[k] >= 0.0) || (k && times[k] < times[k - 1])) throw ConfigError("times must be >= 0 and sorted");
  const auto data = gravity_branch_data(sc, mode);
  const auto energies = gravity_branch_energies(sc);
  const Eigen::Index B = static_cast<Eigen::Index>(sc.branches.size());
  CVector psi0(B);
  for (Eigen::Index r = 0; r < B; ++r) psi0[r] = sc.amplitudes[static_cast<std::size_t>(r)];

  GravityRunResult out;
  out.mode = mode;
  out.n_traj = n_traj;
  out.seed = seed;
  out.times = times;
  const double N = static_cast<double>(n_traj);
  auto sem = [N](double s1, double s2) {
    if (N < 2) return 0.0;
    double m = s1 / N;
    return std::sqrt(std::max(0.0, (s2 / N - m * m) / (N - 1.0)));
  };

  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    CollapseKernel kernel(gravity_segment_channels(data, t), data.lambda);
    CVector phase(B);
    for (Eigen::Index r = 0; r < B; ++r) phase[r] = std::polar(1.0, -energies[static_cast<std::size_t>(r)] * t);
    const std::uint64_t tseed = stream_seed(seed, k);
    const bool last = k + 1 == times.size();

    CMatrix s1 = CMatrix::Zero(B, B);
    Eigen::MatrixXd re2 = Eigen::MatrixXd::Zero(B, B), im2 = re2;
    std::vector<std::size_t> counts(static_cast<std::size_t>(B) + 1, 0);
    const std::size_t block = 4096;
    std::vector<CVector> states;
    for (std::size_t first = 0; first < n_traj; first += block) {
      std::size_t cnt = std::min(block, n_traj - first);
      states.assign(cnt, CVector());
      parallel_for(cnt, threads, [&](std::size_t i) {
        NoiseStream rng(stream_seed(tseed, first + i));
        CVector psi = psi0;
        if (kernel.n_channels() > 0) {
          std::vector<double> w;
          kernel.draw(w, psi, 1.0, NoiseMeasure::physical, PhysicalScheme::exact_mixture, rng);
          kernel.apply(psi, w, 1.0);
        }
        states[i] = psi.cwiseProduct(phase);
      });
      for (const auto& psi : states) {
        CMatrix m = psi * psi.adjoint();
        s1 += m;
        re2 += m.real().cwiseAbs2();
        im2 += m.imag().cwiseAbs2();
        if (last) {
          std::size_t slot = static_cast<std::size_t>(B);
          for (Eigen::Index r = 0; r < B; ++r)
            if (std::norm(psi[r]) > threshold) slot = static_cast<std::size_t>(r);
          counts[slot] += 1;
        }
      }
    }
    CMatrix rho = s1 / N;
    Eigen::MatrixXd er(B, B), ei(B, B), lc(B, B), lo(B, B), le(B, B);
    for (Eigen::Index r = 0; r < B; ++r)
      for (Eigen::Index s = 0; s < B; ++s) {
        er(r, s) = sem(s1(r, s).real(), re2(r, s));
        ei(r, s) = sem(s1(r, s).imag(), im2(r, s));
        double mod = std::abs(rho(r, s));
        double cc = std::abs(psi0[r] * std::conj(psi0[s]));
        lc(r, s) = cc > 0.0 && mod > 0.0 ? std::log(mod / cc) : -std::numeric_limits<double>::infinity();
        lo(r, s) = gravity_log_coherence(data, t, static_cast<std::size_t>(r), static_cast<std::size_t>(s));
        // error of log|rho| projected on the direction of rho
        double proj = mod > 0.0 ? std::hypot(er(r, s) * rho(r, s).real(), ei(r, s) * rho(r, s).imag()) / mod : 0.0;
        le(r, s) = mod > 0.0 ? proj / mod : std::numeric_limits<double>::infinity();
      }
    out.mean_rho.push_back(rho);
    out.stderr_rho_re.push_back(er);
    out.stderr_rho_im.push_back(ei);
    out.log_coherence.push_back(lc);
    out.log_coherence_oracle.push_back(lo);
    out.log_coherence_stderr.push_back(le);
    if (last) {
      out.outcome_counts = counts;
      for (std::size_t c = 0; c < counts.size(); ++c) {
        double p = counts[c] / N;
        out.outcome_frequency.push_back(p);
        out.outcome_stderr.push_back(std::sqrt(std::max(p * (1.0 - p), 0.0) / N));
      }
    }
  }
  return out;
}

GravityRates gravity_decay_rate(const GravityScenario& sc, GravityMode mode, std::size_t r, std::size_t s,
                                const GravityRunResult* run) {
  const auto d = gravity_branch_data(sc, mode);
  if (r >= d.n_branches() || s >= d.n_branches()) throw ConfigError("branch index out of range");
  GravityRates g;
  g.oracle = -gravity_log_coherence(d, 1.0, r, s);
  const double half = 0.5 * d.lambda * d.dV;
  for (std::size_t x = 0; x < d.A[r].size(); ++x) {
    double dA = d.A[r][x] - d.A[s][x];
    double pr = 1.0 + d.phi[r][x], ps = 1.0 + d.phi[s][x];
    g.flat += half * dA * dA;
    g.asymmetric_reading += half * dA * dA / (pr * pr);
    double q = d.A[r][x] / pr - d.A[s][x] / ps;
    g.symmetric_reading += half * q * q;
  }
  g.simulated = std::numeric_limits<double>::quiet_NaN();
  if (run) {
    // weighted least squares through the origin: log|rho| = -Gamma t
    double num = 0.0, den = 0.0;
    const auto rr = static_cast<Eigen::Index>(r), ss = static_cast<Eigen::Index>(s);
    for (std::size_t k = 0; k < run->times.size(); ++k) {
      double t = run->times[k], y = run->log_coherence[k](rr, ss), e = run->log_coherence_stderr[k](rr, ss);
      if (t <= 0.0 || !std::isfinite(y) || !(e > 0.0) || !std::isfinite(e)) continue;
      double wgt = 1.0 / (e * e);
      num += wgt * t * y;
      den += wgt * t * t;
    }
    if (den > 0.0) {
      g.simulated = -num / den;
      g.simulated_stderr = 1.0 / std::sqrt(den);
      g.relative_difference = g.oracle != 0.0 ? (g.simulated - g.oracle) / g.oracle : 0.0;
    }
  }
  return g;
}

}  // namespace csl
