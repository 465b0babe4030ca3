#include <doctest.h>

#include <cmath>

#include "csl/errors.hpp"
#include "csl/trajectories.hpp"

using namespace csl;

namespace {

// Two static branches whose A profiles differ in a single channel by dv.
TrajectoryConfig two_level(double lambda, double p0, double dv, double dt, int steps) {
  TrajectoryConfig c;
  c.channels.values = Eigen::MatrixXd(1, 2);
  c.channels.values << 0.0, dv;
  c.channels.weights = Eigen::VectorXd::Ones(1);
  c.H = build_hamiltonian(ZeroHamiltonian{2}, LatticeSpec{});
  c.lambda = lambda;
  c.dt = dt;
  c.n_steps = steps;
  c.psi0 = CVector(2);
  c.psi0 << std::sqrt(p0), std::sqrt(1.0 - p0);
  return c;
}

}  // namespace

TEST_CASE("collapse kernel reweights amplitudes by exp(h (w v - lambda v^2))") {
  CollapseChannels ch;
  ch.values = Eigen::MatrixXd(2, 3);
  ch.values << 0.0, 1.0, 2.0, 0.5, 0.0, 1.0;
  ch.weights = Eigen::VectorXd(2);
  ch.weights << 0.5, 2.0;
  const double lambda = 0.7, h = 0.3;
  CollapseKernel k(ch, lambda);
  CVector psi = CVector::Constant(3, cplx(1.0 / std::sqrt(3.0), 0.0));
  std::vector<double> w{0.4, -1.1};
  CVector ref = psi;
  for (int b = 0; b < 3; ++b) {
    double e = 0.0;
    for (int c = 0; c < 2; ++c) e += ch.weights[c] * (w[c] * ch.values(c, b) - lambda * ch.values(c, b) * ch.values(c, b));
    ref[b] *= std::exp(h * e);
  }
  double log_norm2 = std::log(ref.squaredNorm());
  ref /= ref.norm();
  double lw = k.apply(psi, w, h);
  CHECK(lw == doctest::Approx(log_norm2).epsilon(1e-13));
  CHECK((psi - ref).norm() < 1e-14);
  CHECK(k.variance(1, h) == doctest::Approx(lambda / (2.0 * h)));
}

TEST_CASE("propagator reproduces exp(-i H t) for a two-level system") {
  CMatrix M(2, 2);
  M << 0.0, 1.0, 1.0, 0.0;
  auto H = build_hamiltonian(ExplicitMatrix{M}, LatticeSpec{});
  const double t = 0.37;
  Propagator U(H, t);
  CHECK_FALSE(U.identity());
  CMatrix ref(2, 2);
  ref << std::cos(t), cplx(0.0, -std::sin(t)), cplx(0.0, -std::sin(t)), std::cos(t);
  CHECK((U.matrix() - ref).cwiseAbs().maxCoeff() < 1e-14);
  Propagator Z(build_hamiltonian(ZeroHamiltonian{2}, LatticeSpec{}), t);
  CHECK(Z.identity());
}

TEST_CASE("vacuum-measure weights average to one") {
  auto cfg = two_level(1.0, 0.5, 1.0, 0.05, 40);
  cfg.measure = NoiseMeasure::vacuum;
  auto s = run_ensemble(cfg, 4000, 3, 2);
  CHECK(std::abs(s.mean_pw - 1.0) < 3.0 * s.stderr_pw);
  // and the weighted branch probabilities stay at |c|^2
  CHECK(std::abs(s.mean_weights.back()[0] - 0.5) < 4.0 * s.stderr_weights.back()[0]);
}

TEST_CASE("physical measure: Born weights are a martingale and outcomes follow |c|^2") {
  auto cfg = two_level(1.0, 0.36, 1.0, 0.1, 300);
  auto s = run_ensemble(cfg, 3000, 77, 4);
  for (std::size_t k = 0; k < s.times.size(); ++k)
    CHECK(std::abs(s.mean_weights[k][0] - 0.36) < 4.0 * std::max(s.stderr_weights[k][0], 1e-12));
  CHECK(s.outcome_counts[2] == 0);
  CHECK(std::abs(s.outcome_frequency[0] - 0.36) < 3.0 * s.outcome_stderr[0]);
}

TEST_CASE("mean-drift scheme also reproduces the Born rule") {
  auto cfg = two_level(1.0, 0.36, 1.0, 0.02, 500);
  cfg.scheme = PhysicalScheme::mean_drift;
  auto s = run_ensemble(cfg, 2000, 5, 4);
  CHECK(std::abs(s.outcome_frequency[0] - 0.36) < 3.5 * s.outcome_stderr[0]);
}

TEST_CASE("ensemble coherence decays as exp(-(lambda/2) dv^2 t)") {
  auto cfg = two_level(2.0, 0.5, 0.5, 0.1, 20);
  cfg.store_states = true;
  auto s = run_ensemble(cfg, 20000, 9, 4);
  for (std::size_t k = 0; k < s.times.size(); k += 5) {
    double expect = 0.5 * std::exp(-0.5 * 2.0 * 0.25 * s.times[k]);
    CHECK(std::abs(s.mean_rho[k](0, 1).real() - expect) < 4.0 * s.stderr_rho_re[k](0, 1) + 1e-12);
  }
}

TEST_CASE("ensemble summaries do not depend on the thread count") {
  auto cfg = two_level(1.0, 0.3, 1.0, 0.1, 30);
  cfg.store_states = true;
  auto a = run_ensemble(cfg, 1500, 21, 1);
  auto b = run_ensemble(cfg, 1500, 21, 7);
  CHECK(a.outcome_counts == b.outcome_counts);
  CHECK(a.mean_weights == b.mean_weights);
  CHECK((a.mean_rho.back() - b.mean_rho.back()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero-variance realization leaves the state untouched") {
  LatticeSpec l;
  l.n = 2;
  l.dx = 1.0;
  l.dt = 0.1;
  l.n_steps = 10;
  CollapseParams p;
  p.lambda = 0.0;
  auto noise = sample_noise_vacuum(l, p, 1);
  auto cfg = two_level(0.0, 0.25, 1.0, 0.1, 10);
  cfg.channels.values = Eigen::MatrixXd(2, 2);
  cfg.channels.values << 1.0, 0.0, 0.0, 1.0;
  cfg.channels.weights = Eigen::VectorXd::Ones(2);
  auto rec = evolve_realization(cfg, noise);
  CHECK(rec.weights.back()[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(rec.log_weight.back() == 0.0);
}

TEST_CASE("collapse detection is sticky") {
  TrajectoryRecord rec;
  rec.weights = {{0.5, 0.5}, {0.995, 0.005}, {0.3, 0.7}, {0.001, 0.999}};
  CHECK(detect_collapse(rec, 0.99) == 1);
  rec.weights = {{0.5, 0.5}, {0.6, 0.4}};
  CHECK(detect_collapse(rec, 0.99) == -1);
}

TEST_CASE("config validation") {
  auto cfg = two_level(1.0, 0.5, 1.0, 0.1, 10);
  cfg.psi0 = CVector::Zero(3);
  CHECK_THROWS_AS(run_ensemble(cfg, 10, 1), ConfigError);
  cfg = two_level(1.0, 0.5, 1.0, 0.1, 10);
  cfg.collapse_threshold = 0.4;
  CHECK_THROWS_AS(run_ensemble(cfg, 10, 1), ConfigError);
}
