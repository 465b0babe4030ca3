#include <doctest.h>

#include <cmath>
#include <numbers>

#include "csl/energy_stress.hpp"
#include "csl/errors.hpp"

using namespace csl;

namespace {

LatticeSpec line(int n, double dx, bool periodic = true) {
  LatticeSpec l;
  l.dim = 1;
  l.n = n;
  l.dx = dx;
  l.periodic = periodic;
  return l;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v)
    if (std::isfinite(x)) m = std::max(m, std::abs(x));
  return m;
}

// psi normalised so that dV sum |psi|^2 = 1
CVector field_packet(const LatticeSpec& l, double width, double k0) {
  CVector psi = gaussian_packet(l, {0.3, 0.0, 0.0}, width, {k0, 0.0, 0.0});
  return psi / std::sqrt(l.cell_volume());
}

}  // namespace

TEST_CASE("plane-wave tensors take their discrete closed forms") {
  auto l = line(32, 0.2);
  const double m = 1.3;
  const double k = 2.0 * std::numbers::pi * 3.0 / (l.n * l.dx);
  CVector psi(l.n);
  for (int z = 0; z < l.n; ++z) psi[z] = std::polar(1.0, k * l.position(static_cast<std::size_t>(z))[0]);
  auto T = particle_tensor_components(psi, l, m);
  const double s = std::sin(k * l.dx) / l.dx;
  const double c2 = (2.0 - 2.0 * std::cos(k * l.dx)) / (l.dx * l.dx);
  for (int z = 0; z < l.n; ++z) {
    CHECK(T.mass.valid[z]);
    CHECK(T.mass.t00[z] == doctest::Approx(m));
    CHECK(T.mass.t0i[z][0] == doctest::Approx(s).epsilon(1e-12));
    CHECK(T.mass.tij[z][0] == doctest::Approx((2.0 * s * s + 2.0 * c2) / (4.0 * m)).epsilon(1e-12));
    CHECK(T.energy.t00[z] == doctest::Approx(s * s / (2.0 * m)).epsilon(1e-12));
    // flux = (1/2m^2) Im(d psi* d d psi) = s c2 / 2m^2
    CHECK(T.energy.t0i[z][0] == doctest::Approx(s * c2 / (2.0 * m * m)).epsilon(1e-12));
  }
  // continuum limits: k/m momentum per mass, k^2/m flux
  auto fine = line(2048, 0.2 / 64.0);
  CVector pw(fine.n);
  const double kf = 2.0 * std::numbers::pi * 3.0 / (fine.n * fine.dx);
  for (int z = 0; z < fine.n; ++z) pw[z] = std::polar(1.0, kf * fine.position(static_cast<std::size_t>(z))[0]);
  auto Tf = particle_tensor_components(pw, fine, m);
  CHECK(Tf.mass.tij[7][0] == doctest::Approx(kf * kf / m).epsilon(1e-4));
}

TEST_CASE("open boundaries mark edge cells invalid") {
  auto l = line(16, 0.5, false);
  auto T = particle_tensor_components(field_packet(l, 1.0, 0.0), l, 1.0);
  CHECK_FALSE(T.mass.valid[0]);
  CHECK_FALSE(T.mass.valid[1]);
  CHECK(T.mass.valid[8]);
}

TEST_CASE("free continuity residuals shrink as dx^2") {
  const double m = 1.0, width = 1.0, k0 = 1.5, L = 16.0;
  double rm[2], re[2];
  for (int h = 0; h < 2; ++h) {
    int n = h == 0 ? 64 : 128;
    auto l = line(n, L / n);
    auto H = build_hamiltonian(FreeLattice{m}, l);
    auto psi = field_packet(l, width, k0);
    rm[h] = max_abs(mass_continuity_residual(psi, H, l, m));
    re[h] = max_abs(energy_continuity_residual(psi, H, l, m));
  }
  CHECK(rm[0] / rm[1] == doctest::Approx(4.0).epsilon(0.15));
  CHECK(re[0] / re[1] == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("3-D mass continuity residual shrinks as dx^2") {
  double r[2];
  for (int h = 0; h < 2; ++h) {
    LatticeSpec l;
    l.dim = 3;
    l.n = h == 0 ? 24 : 48;
    l.dx = 12.0 / l.n;
    auto H = build_hamiltonian(FreeLattice{1.0}, l);
    CVector psi = gaussian_packet(l, {0.0, 0.0, 0.0}, 1.0, {1.0, 0.5, 0.0}) / std::sqrt(l.cell_volume());
    r[h] = max_abs(mass_continuity_residual(psi, H, l, 1.0));
  }
  CHECK(r[0] / r[1] == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("pair momentum balance: divergence equals the force density up to dx^2") {
  const double m = 1.0, V0 = 2.0, s = 1.0;
  auto V = [=](double x) { return V0 * std::exp(-x * x / (2.0 * s * s)); };
  auto dV = [=](double x) { return -V0 * x / (s * s) * std::exp(-x * x / (2.0 * s * s)); };
  double r[2], f[2];
  for (int h = 0; h < 2; ++h) {
    int n = h == 0 ? 48 : 96;
    auto l = line(n, 12.0 / n, false);
    auto H = build_hamiltonian(PairPotential{m, V}, l);
    auto p1 = gaussian_packet(l, {-1.0, 0.0, 0.0}, 0.8, {1.0, 0.0, 0.0});
    auto p2 = gaussian_packet(l, {1.0, 0.0, 0.0}, 0.8, {-0.5, 0.0, 0.0});
    CVector psi(n * n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) psi[a * n + b] = p1[a] * p2[b] / l.dx;
    auto bal = pair_momentum_balance(psi, H, l, m, dV);
    r[h] = max_abs(bal.residual);
    f[h] = max_abs(bal.force);
  }
  CHECK(f[1] > 10.0 * r[1]);
  CHECK(r[0] / r[1] == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("energy gain formulas") {
  CHECK(energy_gain_analytic(3, 2.0, 1.0, 1.0, 1.0, 1.0) == doctest::Approx(1.5));
  CHECK(energy_gain_analytic(1, 1.0, 2.0, 3.0, 1.0, 2.0) == doctest::Approx(1.0 * 4.0 * 3.0 / 16.0));
  auto l = line(8, 1e-3);
  CHECK(energy_gain_lattice(l, 1.0, 1.0, 1.0, 1.0) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("full and translation-reduced energy runs agree on a periodic line") {
  EnergyGainScenario sc;
  sc.lattice = line(32, 0.25);
  sc.lattice.dt = 0.01;
  sc.lattice.n_steps = 100;
  sc.record_every = 10;
  sc.packet_width = 1.0;
  CollapseParams p;
  p.lambda = 1.0;
  auto full = energy_gain_full(sc, p);
  auto red = energy_gain_reduced(sc, p);
  REQUIRE(full.series.t.size() == red.series.t.size());
  for (std::size_t k = 0; k < full.series.t.size(); ++k) {
    CHECK(full.series.e_particle[k] == doctest::Approx(red.series.e_particle[k]).epsilon(1e-9));
    CHECK(full.series.e_wfield[k] == doctest::Approx(red.series.e_wfield[k]).epsilon(1e-9));
  }
  CHECK(full.measured_slope == doctest::Approx(full.lattice).epsilon(0.01));
  auto drift = ledger_check(full.series.e_particle, full.series.e_wfield);
  CHECK(drift.max_drift < 1e-6 * full.series.e_particle.back());
}

TEST_CASE("collapse energy density sums to the particle heating rate") {
  auto l = line(24, 0.25);
  CollapseParams p;
  p.lambda = 0.6;
  SmearingKernel k(l, 1.0);
  auto ch = single_particle_channels(k, p);
  auto D = dephasing_matrix(ch, p.lambda);
  auto H = build_hamiltonian(FreeLattice{1.0}, l);
  CVector psi = gaussian_packet(l, {0.0, 0.0, 0.0}, 0.7, {0.8, 0.0, 0.0});
  CMatrix rho = psi * psi.adjoint();
  auto dens = collapse_energy_density_rate(rho, D, l, 1.0);
  double total = 0.0;
  for (double v : dens) total += v;
  double direct = -(CMatrix(H) * D.cast<cplx>().cwiseProduct(rho)).trace().real();
  CHECK(total == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("W-field energy density integrates to -d lambda N t / 4 m a^2") {
  for (int dim : {1, 3}) {
    LatticeSpec l;
    l.dim = dim;
    l.n = dim == 1 ? 64 : 20;
    l.dx = dim == 1 ? 0.25 : 0.5;
    CollapseParams p;
    p.lambda = 0.7;
    p.a = 1.0;
    const double m = 1.5, N = 2.0;
    std::vector<double> nbar(l.n_cells(), 0.0);
    nbar[l.n_cells() / 2] = N / l.cell_volume();
    std::vector<double> times{0.0, 0.5, 1.0};
    auto T = wfield_energy_density(l, p, m, times, {nbar, nbar, nbar});
    double tot = 0.0;
    for (double v : T.back()) tot += v * l.cell_volume();
    CHECK(tot == doctest::Approx(-dim * p.lambda * N * 1.0 / (4.0 * m * p.a * p.a)).epsilon(1e-4));
    for (double v : T.front()) CHECK(v == 0.0);
  }
}

TEST_CASE("W-field momentum density vanishes for diagonal A") {
  auto l = line(16, 0.5);
  CollapseParams p;
  SmearingKernel k(l, 1.0);
  auto ch = single_particle_channels(k, p);
  CVector psi = gaussian_packet(l, {0.0, 0.0, 0.0}, 1.0, {1.0, 0.0, 0.0});
  CMatrix rho = psi * psi.adjoint();
  auto P = wfield_momentum_density(l, ch, 1.0, {0.0, 1.0}, {rho, rho});
  for (const auto& row : P)
    for (const auto& v : row) CHECK(v[0] == 0.0);
}

TEST_CASE("ledger and slope helpers") {
  std::vector<double> t{0.0, 1.0, 2.0, 3.0}, y{1.0, 3.0, 5.0, 7.0};
  CHECK(fit_slope(t, y) == doctest::Approx(2.0));
  std::vector<double> w{0.0, -2.0, -4.0, -6.5};
  auto d = ledger_check(y, w);
  CHECK(d.max_drift == doctest::Approx(0.5));
  CHECK(d.at == 3);
  CHECK_THROWS_AS(fit_slope({1.0}, {1.0}), ConfigError);
}
