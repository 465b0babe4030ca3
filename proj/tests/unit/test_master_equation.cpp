#include <doctest.h>

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "csl/errors.hpp"
#include "csl/master_equation.hpp"

using namespace csl;

namespace {

// Liouvillian on column-stacked rho with the double-commutator form written out directly.
CMatrix liouvillian(const CMatrix& H, const std::vector<Eigen::MatrixXd>& A, const std::vector<double>& w, double lambda) {
  const Eigen::Index n = H.rows();
  CMatrix L = CMatrix::Zero(n * n, n * n);
  for (Eigen::Index k = 0; k < n * n; ++k) {
    CMatrix E = CMatrix::Zero(n, n);
    E(k % n, k / n) = 1.0;
    CMatrix out = cplx(0.0, -1.0) * (H * E - E * H);
    for (std::size_t c = 0; c < A.size(); ++c) {
      CMatrix a = A[c].cast<cplx>();
      CMatrix inner = a * E - E * a;
      out -= 0.5 * lambda * w[c] * (a * inner - inner * a);
    }
    for (Eigen::Index j = 0; j < n * n; ++j) L(j, k) = out(j % n, j / n);
  }
  return L;
}

}  // namespace

TEST_CASE("pure dephasing integrates to exp(-D t)") {
  CollapseChannels ch;
  ch.values = Eigen::MatrixXd(2, 3);
  ch.values << 0.0, 1.0, 0.5, 1.0, 0.0, 0.2;
  ch.weights = Eigen::VectorXd::Constant(2, 0.5);
  auto H = build_hamiltonian(ZeroHamiltonian{3}, LatticeSpec{});
  auto model = lindblad_model(H, ch, 1.3);
  CMatrix rho = CMatrix::Constant(3, 3, cplx(1.0 / 3.0, 0.0));
  MasterOptions opt;
  opt.dt = 0.01;
  opt.t_max = 2.0;
  opt.record_every = 50;
  auto sol = integrate_master(rho, model, opt);
  for (std::size_t k = 0; k < sol.times.size(); ++k)
    for (int r = 0; r < 3; ++r)
      for (int s = 0; s < 3; ++s)
        CHECK(std::abs(sol.rho[k](r, s) - rho(r, s) * std::exp(-model.D(r, s) * sol.times[k])) < 1e-9);
}

TEST_CASE("Hadamard generator equals the double commutator with a Hamiltonian") {
  CMatrix Hm(3, 3);
  Hm << 0.2, cplx(0.3, 0.1), 0.0, cplx(0.3, -0.1), -0.4, 0.5, 0.0, 0.5, 0.1;
  auto H = build_hamiltonian(ExplicitMatrix{Hm}, LatticeSpec{});
  CollapseChannels ch;
  ch.values = Eigen::MatrixXd(2, 3);
  ch.values << 0.0, 1.0, 0.3, 0.7, 0.2, 0.0;
  ch.weights = Eigen::VectorXd(2);
  ch.weights << 0.4, 1.5;
  const double lambda = 0.9;
  auto model = lindblad_model(H, ch, lambda);
  std::vector<Eigen::MatrixXd> A;
  for (int c = 0; c < 2; ++c) A.push_back(ch.values.row(c).transpose().asDiagonal());
  CMatrix L = liouvillian(Hm, A, {0.4, 1.5}, lambda);

  CVector psi(3);
  psi << 0.6, cplx(0.0, 0.48), 0.64;
  CMatrix rho0 = psi * psi.adjoint();
  MasterOptions opt;
  opt.dt = 0.005;
  opt.t_max = 1.5;
  opt.record_every = 100;
  auto sol = integrate_master(rho0, model, opt);
  Eigen::Map<const CVector> v0(rho0.data(), 9);
  for (std::size_t k = 0; k < sol.times.size(); ++k) {
    CMatrix P = (L * sol.times[k]).exp();
    CVector v = P * v0;
    Eigen::Map<const CMatrix> exact(v.data(), 3, 3);
    CHECK((sol.rho[k] - exact).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("integrator keeps trace and hermiticity and flags large steps") {
  CMatrix Hm(2, 2);
  Hm << 0.0, 5.0, 5.0, 0.0;
  auto H = build_hamiltonian(ExplicitMatrix{Hm}, LatticeSpec{});
  CollapseChannels ch;
  ch.values = Eigen::MatrixXd(1, 2);
  ch.values << 0.0, 1.0;
  ch.weights = Eigen::VectorXd::Ones(1);
  auto model = lindblad_model(H, ch, 1.0);
  CMatrix rho = CMatrix::Zero(2, 2);
  rho(0, 0) = 1.0;
  MasterOptions opt;
  opt.dt = 0.001;
  opt.t_max = 1.0;
  auto sol = integrate_master(rho, model, opt);
  for (const auto& r : sol.rho) {
    CHECK(std::abs(r.trace() - cplx(1.0)) < 1e-12);
    CHECK((r - r.adjoint()).cwiseAbs().maxCoeff() == 0.0);
  }
  opt.dt = 0.2;
  CHECK_THROWS_AS(integrate_master(rho, model, opt), InvariantViolation);
  opt.dt = 0.3;
  CHECK_THROWS_AS(integrate_master(rho, model, opt), ConfigError);
}

TEST_CASE("decoherence rate of two point masses 2a apart") {
  LatticeSpec l;
  l.n = 96;
  l.dx = 0.125;
  SmearingKernel k(l, 1.0);
  CollapseParams p;
  p.lambda = 1.0;
  auto A = build_mass_density(k, p, Configuration{{{40, 1.0, 0}}});
  auto B = build_mass_density(k, p, Configuration{{{56, 1.0, 0}}});
  CHECK(decoherence_rate(A, B, 1.0, l.dx) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-6));
  CHECK(decoherence_rate(A, A, 1.0, l.dx) == 0.0);
}
