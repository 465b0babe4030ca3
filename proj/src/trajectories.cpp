#include "csl/trajectories.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "csl/errors.hpp"
#include "csl/parallel.hpp"

namespace csl {

CollapseKernel::CollapseKernel(CollapseChannels channels, double lambda)
    : channels_(std::move(channels)), lambda_(lambda) {
  channels_.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  q_ = (channels_.values.array().square().colwise() * channels_.weights.array()).colwise().sum().transpose();
}

double CollapseKernel::variance(std::size_t c, double h) const {
  return lambda_ / (channels_.weights[static_cast<Eigen::Index>(c)] * h);
}

double CollapseKernel::apply(CVector& psi, std::span<const double> w, double h) const {
  const Eigen::Index B = channels_.values.cols();
  if (psi.size() != B) throw ConfigError("state dimension does not match collapse channels");
  if (w.size() != n_channels()) throw ConfigError("noise slice does not cover every channel");
  if (lambda_ == 0.0) {
    for (double x : w)
      if (x != 0.0) throw ConfigError("nonzero noise with lambda = 0");
    return 0.0;
  }
  Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
  Eigen::VectorXd ww = wv.cwiseProduct(channels_.weights);
  Eigen::VectorXd logf = h * (channels_.values.transpose() * ww - lambda_ * q_);
  // work in log space: subtract the max before exponentiating
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index b = 0; b < B; ++b)
    if (psi[b] != cplx(0.0)) mx = std::max(mx, logf[b]);
  if (!std::isfinite(mx)) throw InvariantViolation("collapse step produced a non-finite state");
  double norm2 = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    if (psi[b] == cplx(0.0)) continue;
    psi[b] *= std::exp(logf[b] - mx);
    norm2 += std::norm(psi[b]);
  }
  if (!(norm2 > 0.0) || !std::isfinite(norm2)) throw InvariantViolation("collapse step produced a non-finite state");
  psi /= std::sqrt(norm2);
  return 2.0 * mx + std::log(norm2);
}

void CollapseKernel::draw(std::vector<double>& w, const CVector& psi, double h, NoiseMeasure measure,
                          PhysicalScheme scheme, NoiseStream& rng) const {
  const std::size_t C = n_channels();
  w.assign(C, 0.0);
  if (lambda_ == 0.0) return;
  if (measure == NoiseMeasure::physical) {
    const Eigen::Index B = psi.size();
    if (scheme == PhysicalScheme::exact_mixture) {
      double u = rng.uniform();
      double tot = psi.squaredNorm(), acc = 0.0;
      Eigen::Index pick = B - 1;
      for (Eigen::Index b = 0; b < B; ++b) {
        acc += std::norm(psi[b]) / tot;
        if (u < acc) {
          pick = b;
          break;
        }
      }
      for (std::size_t c = 0; c < C; ++c) w[c] = 2.0 * lambda_ * channels_.values(static_cast<Eigen::Index>(c), pick);
    } else {
      Eigen::VectorXd p = psi.cwiseAbs2() / psi.squaredNorm();
      Eigen::VectorXd mean = channels_.values * p;
      for (std::size_t c = 0; c < C; ++c) w[c] = 2.0 * lambda_ * mean[static_cast<Eigen::Index>(c)];
    }
  }
  for (std::size_t c = 0; c < C; ++c) w[c] += std::sqrt(variance(c, h)) * rng.gaussian();
}

Propagator::Propagator(const SparseH& H, double dt) {
  if (H.nonZeros() == 0) return;
  bool any = false;
  for (Eigen::Index k = 0; k < H.outerSize(); ++k)
    for (SparseH::InnerIterator it(H, k); it; ++it)
      if (it.value() != cplx(0.0)) any = true;
  if (!any) return;
  identity_ = false;
  CMatrix Hd = CMatrix(H);
  Eigen::SelfAdjointEigenSolver<CMatrix> es(Hd);
  if (es.info() != Eigen::Success) throw InvariantViolation("Hamiltonian diagonalisation failed");
  Eigen::VectorXcd phase(Hd.rows());
  for (Eigen::Index k = 0; k < Hd.rows(); ++k) phase[k] = std::polar(1.0, -es.eigenvalues()[k] * dt);
  U_ = es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
}

void Propagator::apply(CVector& psi) const {
  if (identity_) return;
  psi = U_ * psi;
}

double step_trajectory(CVector& psi, std::span<const double> w_first, std::span<const double> w_second,
                       const Propagator& U, const CollapseKernel& kernel, double dt) {
  double lw = kernel.apply(psi, w_first, 0.5 * dt);
  U.apply(psi);
  lw += kernel.apply(psi, w_second, 0.5 * dt);
  return lw;
}

void TrajectoryConfig::validate() const {
  channels.validate();
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
  if (record_every < 1) throw ConfigError("record_every must be >= 1");
  if (static_cast<std::size_t>(psi0.size()) != channels.basis_size())
    throw ConfigError("initial state dimension does not match the collapse basis");
  if (H.rows() != psi0.size() || H.cols() != psi0.size())
    throw ConfigError("Hamiltonian dimension does not match the initial state");
  if (!(psi0.squaredNorm() > 0.0) || !psi0.allFinite()) throw ConfigError("initial state must be finite and nonzero");
  if (!(collapse_threshold > 0.5 && collapse_threshold < 1.0)) throw ConfigError("collapse threshold must lie in (0.5, 1)");
}

namespace {

void record(TrajectoryRecord& rec, const TrajectoryConfig& cfg, const CVector& psi, double t, double logw) {
  rec.times.push_back(t);
  std::vector<double> p(static_cast<std::size_t>(psi.size()));
  for (Eigen::Index b = 0; b < psi.size(); ++b) p[static_cast<std::size_t>(b)] = std::norm(psi[b]);
  rec.weights.push_back(std::move(p));
  rec.log_weight.push_back(logw);
  if (cfg.store_states) rec.states.push_back(psi);
}

}  // namespace

TrajectoryRecord run_trajectory(const TrajectoryConfig& cfg, const CollapseKernel& kernel, const Propagator& U,
                                std::uint64_t seed) {
  TrajectoryRecord rec;
  rec.seed = seed;
  NoiseStream rng(seed);
  CVector psi = cfg.psi0 / cfg.psi0.norm();
  double logw = 0.0;
  record(rec, cfg, psi, 0.0, logw);
  std::vector<double> w1, w2;
  for (int s = 1; s <= cfg.n_steps; ++s) {
    if (U.identity()) {
      kernel.draw(w1, psi, cfg.dt, cfg.measure, cfg.scheme, rng);
      logw += kernel.apply(psi, w1, cfg.dt);
    } else {
      kernel.draw(w1, psi, 0.5 * cfg.dt, cfg.measure, cfg.scheme, rng);
      logw += kernel.apply(psi, w1, 0.5 * cfg.dt);
      U.apply(psi);
      kernel.draw(w2, psi, 0.5 * cfg.dt, cfg.measure, cfg.scheme, rng);
      logw += kernel.apply(psi, w2, 0.5 * cfg.dt);
    }
    if (!psi.allFinite()) throw InvariantViolation("non-finite amplitudes at step " + std::to_string(s));
    if (s % cfg.record_every == 0 || s == cfg.n_steps) record(rec, cfg, psi, s * cfg.dt, logw);
  }
  rec.outcome = detect_collapse(rec, cfg.collapse_threshold);
  return rec;
}

TrajectoryRecord evolve_realization(const TrajectoryConfig& cfg, const NoiseRealization& noise) {
  cfg.validate();
  CollapseKernel kernel(cfg.channels, noise.zero_variance ? 0.0 : cfg.lambda);
  if (noise.n_cells != kernel.n_channels()) throw ConfigError("noise realization does not cover the collapse channels");
  if (noise.n_steps < static_cast<std::size_t>(cfg.n_steps)) throw ConfigError("noise realization is shorter than the run");
  Propagator U(cfg.H, cfg.dt);
  TrajectoryRecord rec;
  rec.seed = noise.seed;
  CVector psi = cfg.psi0 / cfg.psi0.norm();
  double logw = 0.0;
  record(rec, cfg, psi, 0.0, logw);
  for (int s = 1; s <= cfg.n_steps; ++s) {
    auto w = noise.slice(static_cast<std::size_t>(s - 1));
    if (U.identity())
      logw += kernel.apply(psi, w, cfg.dt);
    else
      logw += step_trajectory(psi, w, w, U, kernel, cfg.dt);
    if (s % cfg.record_every == 0 || s == cfg.n_steps) record(rec, cfg, psi, s * cfg.dt, logw);
  }
  rec.outcome = detect_collapse(rec, cfg.collapse_threshold);
  return rec;
}

int detect_collapse(const TrajectoryRecord& rec, double threshold) {
  if (rec.weights.empty()) return -1;
  const std::size_t B = rec.weights.front().size();
  int best = -1;
  std::size_t best_at = rec.weights.size();
  for (std::size_t r = 0; r < B; ++r) {
    // first crossing after the last drop below 1 - threshold
    std::size_t start = 0;
    for (std::size_t k = 0; k < rec.weights.size(); ++k)
      if (rec.weights[k][r] < 1.0 - threshold) start = k + 1;
    for (std::size_t k = start; k < rec.weights.size(); ++k)
      if (rec.weights[k][r] > threshold) {
        if (k < best_at) {
          best = static_cast<int>(r);
          best_at = k;
        }
        break;
      }
  }
  return best;
}

namespace {

struct Accumulator {
  std::vector<std::vector<double>> s1, s2;
  std::vector<CMatrix> rho;
  std::vector<Eigen::MatrixXd> re2, im2;
  std::vector<double> out1, out2;
  std::vector<std::size_t> counts;
  double pw1 = 0.0, pw2 = 0.0;
};

}  // namespace

EnsembleSummary run_ensemble(const TrajectoryConfig& cfg, std::size_t n_traj, std::uint64_t master_seed, int threads) {
  cfg.validate();
  if (n_traj < 1) throw ConfigError("n_traj must be >= 1");
  CollapseKernel kernel(cfg.channels, cfg.lambda);
  Propagator U(cfg.H, cfg.dt);
  const std::size_t B = cfg.channels.basis_size();

  EnsembleSummary out;
  out.n_traj = n_traj;
  out.master_seed = master_seed;
  out.measure = cfg.measure;
  out.threshold = cfg.collapse_threshold;

  Accumulator acc;
  acc.out1.assign(B + 1, 0.0);
  acc.out2.assign(B + 1, 0.0);
  acc.counts.assign(B + 1, 0);
  bool init = false;

  const std::size_t block = 512;
  std::vector<TrajectoryRecord> recs;
  for (std::size_t first = 0; first < n_traj; first += block) {
    std::size_t cnt = std::min(block, n_traj - first);
    recs.assign(cnt, {});
    parallel_for(cnt, threads, [&](std::size_t i) {
      recs[i] = run_trajectory(cfg, kernel, U, stream_seed(master_seed, first + i));
    });
    for (const auto& rec : recs) {
      const std::size_t R = rec.times.size();
      if (!init) {
        out.times = rec.times;
        acc.s1.assign(R, std::vector<double>(B, 0.0));
        acc.s2.assign(R, std::vector<double>(B, 0.0));
        if (cfg.store_states) {
          acc.rho.assign(R, CMatrix::Zero(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(B)));
          acc.re2.assign(R, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(B)));
          acc.im2 = acc.re2;
        }
        init = true;
      }
      for (std::size_t k = 0; k < R; ++k) {
        double pw = cfg.measure == NoiseMeasure::vacuum ? std::exp(rec.log_weight[k]) : 1.0;
        for (std::size_t b = 0; b < B; ++b) {
          double x = pw * rec.weights[k][b];
          acc.s1[k][b] += x;
          acc.s2[k][b] += x * x;
        }
        if (cfg.store_states) {
          CMatrix m = pw * rec.states[k] * rec.states[k].adjoint();
          acc.rho[k] += m;
          acc.re2[k] += m.real().cwiseAbs2();
          acc.im2[k] += m.imag().cwiseAbs2();
        }
      }
      double pw = cfg.measure == NoiseMeasure::vacuum ? std::exp(rec.log_weight.back()) : 1.0;
      std::size_t slot = rec.outcome < 0 ? B : static_cast<std::size_t>(rec.outcome);
      acc.counts[slot] += 1;
      acc.out1[slot] += pw;
      acc.out2[slot] += pw * pw;
      acc.pw1 += pw;
      acc.pw2 += pw * pw;
    }
  }

  const double N = static_cast<double>(n_traj);
  auto sem = [N](double s1, double s2) {
    if (N < 2) return 0.0;
    double m = s1 / N;
    double var = std::max(0.0, (s2 / N - m * m) * N / (N - 1.0));
    return std::sqrt(var / N);
  };
  const std::size_t R = out.times.size();
  out.mean_weights.assign(R, std::vector<double>(B));
  out.stderr_weights.assign(R, std::vector<double>(B));
  for (std::size_t k = 0; k < R; ++k)
    for (std::size_t b = 0; b < B; ++b) {
      out.mean_weights[k][b] = acc.s1[k][b] / N;
      out.stderr_weights[k][b] = sem(acc.s1[k][b], acc.s2[k][b]);
    }
  if (cfg.store_states) {
    for (std::size_t k = 0; k < R; ++k) {
      CMatrix m = acc.rho[k] / N;
      Eigen::MatrixXd er(m.rows(), m.cols()), ei(m.rows(), m.cols());
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          er(i, j) = sem(acc.rho[k](i, j).real(), acc.re2[k](i, j));
          ei(i, j) = sem(acc.rho[k](i, j).imag(), acc.im2[k](i, j));
        }
      out.mean_rho.push_back(m);
      out.stderr_rho_re.push_back(er);
      out.stderr_rho_im.push_back(ei);
    }
  }
  out.outcome_counts = acc.counts;
  out.outcome_frequency.resize(B + 1);
  out.outcome_stderr.resize(B + 1);
  for (std::size_t b = 0; b <= B; ++b) {
    if (cfg.measure == NoiseMeasure::physical) {
      double f = static_cast<double>(acc.counts[b]) / N;
      out.outcome_frequency[b] = f;
      out.outcome_stderr[b] = std::sqrt(f * (1.0 - f) / N);
    } else {
      out.outcome_frequency[b] = acc.out1[b] / N;
      out.outcome_stderr[b] = sem(acc.out1[b], acc.out2[b]);
    }
  }
  out.mean_pw = acc.pw1 / N;
  out.stderr_pw = sem(acc.pw1, acc.pw2);
  return out;
}

}  // namespace csl
