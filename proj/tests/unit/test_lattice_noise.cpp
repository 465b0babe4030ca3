#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "csl/errors.hpp"
#include "csl/lattice.hpp"
#include "csl/noise.hpp"

using namespace csl;

namespace {

struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

LatticeSpec line(int n, double dx, double dt, int steps) {
  LatticeSpec l;
  l.dim = 1;
  l.n = n;
  l.dx = dx;
  l.dt = dt;
  l.n_steps = steps;
  return l;
}

}  // namespace

TEST_CASE("lattice spec invariants") {
  LatticeSpec l;
  l.dim = 3;
  l.n = 4;
  l.dx = 0.3;
  CHECK(l.cell_volume() == 0.3 * 0.3 * 0.3);
  CHECK(l.n_cells() == 64);
  l.dim = 2;
  CHECK_THROWS_AS(l.validate(), ConfigError);
  l.dim = 1;
  l.dx = 0.0;
  CHECK_THROWS_AS(l.validate(), ConfigError);
  l.dx = 1.0;
  l.dt = -1.0;
  CHECK_THROWS_AS(l.validate(), ConfigError);
  l.dt = 1.0;
  l.n_steps = 0;
  CHECK_THROWS_AS(l.validate(), ConfigError);
}

TEST_CASE("lattice geometry round trips and minimum image") {
  LatticeSpec l;
  l.dim = 3;
  l.n = 6;
  l.dx = 0.5;
  for (std::size_t c = 0; c < l.n_cells(); ++c) {
    CHECK(l.cell(l.coords(c)) == c);
    CHECK(l.cell_at(l.position(c)) == c);
  }
  const std::size_t origin = l.cell({3, 3, 3});
  CHECK(l.position(origin)[0] == 0.0);
  // cells 0 and 5 along x are neighbours through the boundary
  CHECK(l.distance_squared(l.cell({0, 0, 0}), l.cell({5, 0, 0})) == doctest::Approx(0.25));
  l.periodic = false;
  CHECK(l.distance_squared(l.cell({0, 0, 0}), l.cell({5, 0, 0})) == doctest::Approx(6.25));
  CHECK(l.neighbour(l.cell({0, 0, 0}), 0, -1) == l.n_cells());
}

TEST_CASE("collapse params validation") {
  CollapseParams p;
  p.lambda = -1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.lambda = 1.0;
  p.a = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.a = 1.0;
  p.m0 = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("vacuum variance lambda/(dV dt) with a million cells") {
  CollapseParams p;
  p.lambda = 1.0;
  auto r = sample_noise_vacuum(line(1000, 1.0, 1.0, 1000), p, 7);
  REQUIRE(r.w.size() == 1000000);
  auto m = moments(r.w);
  CHECK(std::abs(m.var - 1.0) < 0.005);
  CHECK(std::abs(m.mean) < 5.0 / 1000.0);
}

TEST_CASE("vacuum variance with lambda 4, dV 2, dt 0.5") {
  CollapseParams p;
  p.lambda = 4.0;
  auto r = sample_noise_vacuum(line(500, 2.0, 0.5, 400), p, 11);
  auto m = moments(r.w);
  const double expect = 4.0 / (2.0 * 0.5);
  CHECK(vacuum_cell_variance(4.0, 2.0, 0.5) == expect);
  const double sd_var = expect * std::sqrt(2.0 / static_cast<double>(r.w.size()));
  CHECK(std::abs(m.var - expect) < 5.0 * sd_var);
}

TEST_CASE("same seed reproduces the realization bit for bit") {
  CollapseParams p;
  auto spec = line(64, 0.25, 0.01, 50);
  auto a = sample_noise_vacuum(spec, p, 123);
  auto b = sample_noise_vacuum(spec, p, 123);
  auto c = sample_noise_vacuum(spec, p, 124);
  CHECK(a.w == b.w);
  CHECK(a.w != c.w);
}

TEST_CASE("lambda zero gives the zero-variance flag, not an error") {
  CollapseParams p;
  p.lambda = 0.0;
  auto r = sample_noise_vacuum(line(8, 1.0, 1.0, 4), p, 1);
  CHECK(r.zero_variance);
  for (double x : r.w) CHECK(x == 0.0);
  p.lambda = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(sample_noise_vacuum(line(8, 1.0, 1.0, 4), p, 1), ConfigError);
}

TEST_CASE("vacuum cells are uncorrelated") {
  CollapseParams p;
  auto r = sample_noise_vacuum(line(200, 1.0, 1.0, 500), p, 99);
  auto m = moments(r.w);
  double num = 0.0;
  for (std::size_t i = 0; i + 1 < r.w.size(); ++i) num += (r.w[i] - m.mean) * (r.w[i + 1] - m.mean);
  double rho1 = num / (static_cast<double>(r.w.size() - 1) * m.var);
  CHECK(std::abs(rho1) < 3.0 / std::sqrt(static_cast<double>(r.w.size())));
}

TEST_CASE("physical measure with zero drift matches the vacuum moments") {
  CollapseParams p;
  auto spec = line(100, 1.0, 1.0, 1000);
  std::vector<double> drift(spec.n_cells() * spec.n_steps, 0.0);
  auto phys = sample_noise_physical(spec, p, drift, 5);
  auto vac = sample_noise_vacuum(spec, p, 6);
  auto a = moments(phys.w), b = moments(vac.w);
  const double N = static_cast<double>(phys.w.size());
  CHECK(std::abs(a.mean - b.mean) < 4.0 * std::sqrt(2.0 / N));
  CHECK(std::abs(a.var - b.var) < 4.0 * 2.0 * std::sqrt(2.0 / N));
  CHECK(phys.measure == NoiseMeasure::physical);
}

TEST_CASE("constant drift shifts the mean to 2 lambda A0") {
  CollapseParams p;
  p.lambda = 1.0;
  const double A0 = 0.7;
  auto spec = line(50, 1.0, 1.0, 2000);
  std::vector<double> drift(spec.n_cells() * spec.n_steps, A0);
  auto r = sample_noise_physical(spec, p, drift, 17);
  auto m = moments(r.w);
  CHECK(std::abs(m.mean - 2.0 * A0) < 3.0 * std::sqrt(m.var / static_cast<double>(r.w.size())));

  // the long-time average in a single cell approaches the same value
  double s = 0.0;
  for (std::size_t k = 0; k < r.n_steps; ++k) s += r.at(k, 3);
  double avg = s / static_cast<double>(r.n_steps);
  CHECK(std::abs(avg - 2.0 * A0) < 3.0 / std::sqrt(static_cast<double>(r.n_steps)));
}

TEST_CASE("drift of the wrong size is rejected") {
  CollapseParams p;
  std::vector<double> drift(3, 0.0);
  CHECK_THROWS_AS(sample_noise_physical(line(4, 1.0, 1.0, 2), p, drift, 1), ConfigError);
}

TEST_CASE("stream seeds are distinct and order independent") {
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 0; i < 1000; ++i) s.push_back(stream_seed(42, i));
  auto sorted = s;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK(stream_seed(42, 17) == s[17]);
  CHECK(stream_seed(43, 17) != s[17]);
}
