#include <doctest.h>

#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "csl/creation.hpp"
#include "csl/errors.hpp"

using namespace csl;

TEST_CASE("closed forms match RK4 to 1e-8 over ten collapse times") {
  for (CreationSite s : {CreationSite{1.0, 0.2, 0.3}, CreationSite{2.5, 1.0, -0.7}, CreationSite{0.5, 0.05, 1.2}}) {
    const double tmax = 10.0 / s.lambda;
    auto ode = creation_ode_integrate(s, tmax, 1e-3, 100);
    double err = 0.0;
    for (const auto& st : ode) {
      auto cf = creation_mean_fields(st.t, s);
      err = std::max({err, std::abs(st.xi - cf.xi), std::abs(st.n - cf.n), std::abs(st.h - cf.h)});
    }
    CHECK(err < 1e-8);
  }
}

TEST_CASE("lambda = 0 reduces to the coherent displaced oscillator") {
  CreationSite s{1.3, 0.0, 0.4};
  for (double t : {0.1, 1.0, 3.7}) {
    auto st = creation_mean_fields(t, s);
    CHECK(st.n == doctest::Approx(2.0 * 0.16 * (1.0 - std::cos(1.3 * t)) / (1.3 * 1.3)).epsilon(1e-12));
    CHECK(st.n == doctest::Approx(std::norm(st.xi)).epsilon(1e-12));
    CHECK(std::abs(st.h) < 1e-12);  // energy conserved: starts at 0
  }
}

TEST_CASE("closed-form rates are derivatives of the closed forms") {
  CreationSite s{1.1, 0.6, 0.5};
  const double h = 1e-5;
  for (double t : {0.3, 2.0, 9.0}) {
    auto st = creation_mean_fields(t, s);
    auto a = creation_mean_fields(t + h, s), b = creation_mean_fields(t - h, s);
    CHECK(st.n_rate == doctest::Approx((a.n - b.n) / (2.0 * h)).epsilon(1e-7));
    CHECK(st.h_rate == doctest::Approx((a.h - b.h) / (2.0 * h)).epsilon(1e-7));
    CHECK(st.n_rate == doctest::Approx(-2.0 * s.g * st.xi.imag()).epsilon(1e-12));
  }
}

TEST_CASE("bracket antiderivative against quadrature") {
  const double m = 1.7, kappa = 0.3;
  auto f = [&](double s) { return m * (1.0 - std::exp(-kappa * s) * std::cos(m * s)) - kappa * std::exp(-kappa * s) * std::sin(m * s); };
  for (double t : {0.5, 4.0, 20.0}) {
    double q = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, t, 20, 1e-14);
    CHECK(creation_energy_bracket_integral(t, m, kappa) == doctest::Approx(q).epsilon(1e-11));
  }
}

TEST_CASE("asymptotic heating slope g^2 lambda m / (m^2 + lambda^2/4)") {
  CreationSite s{1.0, 0.5, 0.4};
  const double t = 30.0 / s.lambda;
  auto st = creation_mean_fields(t, s);
  const double slope = s.g * s.g * s.lambda * s.m / (s.m * s.m + 0.25 * s.lambda * s.lambda);
  CHECK(st.h_rate == doctest::Approx(slope).epsilon(1e-3));
}

TEST_CASE("particle and W-field energies cancel on the lattice") {
  LatticeSpec l;
  l.dim = 1;
  l.n = 64;
  l.dx = 0.25;
  const double m = 1.0, lambda = 0.4, a = 1.0;
  std::vector<double> g(l.n_cells(), 0.0);
  for (std::size_t z = 0; z < g.size(); ++z) g[z] = 0.3 * std::exp(-std::pow(l.position(z)[0], 2) / 2.0);
  for (double t : {1.0, 10.0, 40.0}) {
    double ew = 0.0;
    for (std::size_t x = 0; x < l.n_cells(); ++x) ew += l.dx * creation_wfield_energy(l, x, t, m, lambda, a, g);
    double ep = creation_particle_energy(l, t, m, lambda, g);
    CHECK(std::abs(ep + ew) < 1e-8 * std::abs(ep));
  }
}

TEST_CASE("trajectory mode reproduces the mean fields") {
  CreationSite s{1.0, 0.6, 0.3};
  auto tr = creation_trajectory_mode(s, 10, 3.0, 0.01, 4000, 12, 4, 50);
  CHECK_FALSE(tr.truncation_warning);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    auto cf = creation_mean_fields(tr.times[k], s);
    CHECK(std::abs(tr.mean_xi[k].real() - cf.xi.real()) < 4.0 * tr.stderr_xi_re[k] + 2e-3);
    CHECK(std::abs(tr.mean_xi[k].imag() - cf.xi.imag()) < 4.0 * tr.stderr_xi_im[k] + 2e-3);
    CHECK(std::abs(tr.mean_n[k] - cf.n) < 4.0 * tr.stderr_n[k] + 2e-3);
  }
}

TEST_CASE("creation input validation") {
  CHECK_THROWS_AS(creation_mean_fields(1.0, CreationSite{0.0, 1.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(creation_mean_fields(1.0, CreationSite{1.0, -1.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(creation_ode_integrate(CreationSite{1.0, 1.0, 1.0}, 1.0, 0.0), ConfigError);
}
