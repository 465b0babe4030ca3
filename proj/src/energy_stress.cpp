#include "csl/energy_stress.hpp"

#include <cmath>
#include <numbers>

#include "csl/errors.hpp"

namespace csl {

namespace {

struct Field {
  std::vector<cplx> v;
  std::vector<char> ok;
};

Field from_vector(const CVector& psi) {
  Field f;
  f.v.assign(psi.data(), psi.data() + psi.size());
  f.ok.assign(f.v.size(), 1);
  return f;
}

Field diff(const Field& f, const LatticeSpec& l, int axis) {
  const std::size_t nc = l.n_cells();
  Field out;
  out.v.assign(nc, cplx(0.0));
  out.ok.assign(nc, 0);
  for (std::size_t x = 0; x < nc; ++x) {
    std::size_t p = l.neighbour(x, axis, 1), m = l.neighbour(x, axis, -1);
    if (p == nc || m == nc || !f.ok[p] || !f.ok[m]) continue;
    out.v[x] = (f.v[p] - f.v[m]) / (2.0 * l.dx);
    out.ok[x] = 1;
  }
  return out;
}

Field diff2(const Field& f, const LatticeSpec& l, int i, int j) {
  if (i != j) return diff(diff(f, l, i), l, j);
  const std::size_t nc = l.n_cells();
  Field out;
  out.v.assign(nc, cplx(0.0));
  out.ok.assign(nc, 0);
  for (std::size_t x = 0; x < nc; ++x) {
    std::size_t p = l.neighbour(x, i, 1), m = l.neighbour(x, i, -1);
    if (p == nc || m == nc || !f.ok[p] || !f.ok[m] || !f.ok[x]) continue;
    out.v[x] = (f.v[p] - 2.0 * f.v[x] + f.v[m]) / (l.dx * l.dx);
    out.ok[x] = 1;
  }
  return out;
}

CVector time_derivative(const CVector& psi, const SparseH& H) {
  if (H.rows() != psi.size()) throw ConfigError("Hamiltonian does not match the wavefunction");
  return cplx(0.0, -1.0) * (H * psi);
}

void check_lattice_state(const CVector& psi, const LatticeSpec& l, double m) {
  l.validate();
  if (static_cast<std::size_t>(psi.size()) != l.n_cells()) throw ConfigError("wavefunction does not match the lattice");
  if (!(m > 0.0)) throw ConfigError("particle mass must be > 0");
}

}  // namespace

ParticleTensors particle_tensor_components(const CVector& psi, const LatticeSpec& l, double m) {
  check_lattice_state(psi, l, m);
  const std::size_t nc = l.n_cells();
  const int d = l.dim;
  Field f = from_vector(psi);
  std::vector<Field> d1(d);
  std::vector<std::vector<Field>> d2(d, std::vector<Field>(d));
  std::vector<std::vector<std::vector<Field>>> d3(d, std::vector<std::vector<Field>>(d, std::vector<Field>(d)));
  for (int i = 0; i < d; ++i) d1[i] = diff(f, l, i);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) d2[i][j] = diff2(f, l, i, j);
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) d3[k][i][j] = diff(d2[i][j], l, k);

  ParticleTensors T;
  for (TensorField* tf : {&T.mass, &T.energy}) {
    tf->t00.assign(nc, 0.0);
    tf->t0i.assign(nc, {0.0, 0.0, 0.0});
    tf->tij.assign(nc, {});
    tf->valid.assign(nc, 0);
  }
  for (std::size_t x = 0; x < nc; ++x) {
    bool ok = true;
    for (int k = 0; k < d && ok; ++k)
      for (int i = 0; i < d && ok; ++i)
        for (int j = 0; j < d && ok; ++j) ok = d3[k][i][j].ok[x] && d2[i][j].ok[x] && d1[i].ok[x];
    if (!ok) continue;
    const cplx p = f.v[x];
    T.mass.valid[x] = T.energy.valid[x] = 1;
    T.mass.t00[x] = m * std::norm(p);
    double grad2 = 0.0;
    for (int i = 0; i < d; ++i) {
      T.mass.t0i[x][i] = std::imag(std::conj(p) * d1[i].v[x]);
      grad2 += std::norm(d1[i].v[x]);
      double flux = 0.0;
      for (int k = 0; k < d; ++k) flux += std::imag(std::conj(d1[k].v[x]) * d2[k][i].v[x]);
      T.energy.t0i[x][i] = flux / (2.0 * m * m);
      for (int j = 0; j < d; ++j) {
        double tm = 2.0 * std::real(std::conj(d1[i].v[x]) * d1[j].v[x]) - 2.0 * std::real(std::conj(p) * d2[i][j].v[x]);
        T.mass.tij[x][i * 3 + j] = tm / (4.0 * m);
        double te = 0.0;
        for (int k = 0; k < d; ++k)
          te += 2.0 * std::real(std::conj(d2[i][k].v[x]) * d2[j][k].v[x]) -
                2.0 * std::real(std::conj(d1[k].v[x]) * d3[k][i][j].v[x]);
        T.energy.tij[x][i * 3 + j] = te / (8.0 * m * m * m);
      }
    }
    T.energy.t00[x] = grad2 / (2.0 * m);
  }
  return T;
}

std::vector<double> mass_continuity_residual(const CVector& psi, const SparseH& H, const LatticeSpec& l, double m) {
  check_lattice_state(psi, l, m);
  const std::size_t nc = l.n_cells();
  CVector dpsi = time_derivative(psi, H);
  Field f = from_vector(psi);
  std::vector<Field> grad(l.dim);
  for (int i = 0; i < l.dim; ++i) grad[i] = diff(f, l, i);
  // current j_i = Im(psi* d_i psi), then its central divergence
  std::vector<std::vector<double>> j(l.dim, std::vector<double>(nc, 0.0));
  std::vector<std::vector<char>> jok(l.dim, std::vector<char>(nc, 0));
  for (int i = 0; i < l.dim; ++i)
    for (std::size_t x = 0; x < nc; ++x)
      if (grad[i].ok[x]) {
        j[i][x] = std::imag(std::conj(f.v[x]) * grad[i].v[x]);
        jok[i][x] = 1;
      }
  std::vector<double> res(nc, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t x = 0; x < nc; ++x) {
    double r = 2.0 * m * std::real(std::conj(psi[static_cast<Eigen::Index>(x)]) * dpsi[static_cast<Eigen::Index>(x)]);
    bool ok = true;
    for (int i = 0; i < l.dim; ++i) {
      std::size_t p = l.neighbour(x, i, 1), q = l.neighbour(x, i, -1);
      if (p == nc || q == nc || !jok[i][p] || !jok[i][q]) {
        ok = false;
        break;
      }
      r += (j[i][p] - j[i][q]) / (2.0 * l.dx);
    }
    if (ok) res[x] = r;
  }
  return res;
}

std::vector<double> energy_continuity_residual(const CVector& psi, const SparseH& H, const LatticeSpec& l, double m) {
  check_lattice_state(psi, l, m);
  const std::size_t nc = l.n_cells();
  CVector dpsi = time_derivative(psi, H);
  Field ft = from_vector(dpsi);
  auto T = particle_tensor_components(psi, l, m);
  Field f = from_vector(psi);
  std::vector<double> res(nc, std::numeric_limits<double>::quiet_NaN());
  std::vector<Field> g(l.dim), gt(l.dim);
  for (int i = 0; i < l.dim; ++i) {
    g[i] = diff(f, l, i);
    gt[i] = diff(ft, l, i);
  }
  for (std::size_t x = 0; x < nc; ++x) {
    if (!T.energy.valid[x]) continue;
    double r = 0.0;
    bool ok = true;
    for (int i = 0; i < l.dim && ok; ++i) {
      r += std::real(std::conj(g[i].v[x]) * gt[i].v[x]) / m;
      std::size_t p = l.neighbour(x, i, 1), q = l.neighbour(x, i, -1);
      if (p == nc || q == nc || !T.energy.valid[p] || !T.energy.valid[q]) ok = false;
      else r += (T.energy.t0i[p][i] - T.energy.t0i[q][i]) / (2.0 * l.dx);
    }
    if (ok) res[x] = r;
  }
  return res;
}

PairMomentumBalance pair_momentum_balance(const CVector& psi, const SparseH& H, const LatticeSpec& l, double m,
                                          const std::function<double(double)>& dV) {
  l.validate();
  if (l.dim != 1) throw ConfigError("pair momentum balance needs a 1-D lattice");
  const std::size_t n = l.n_cells();
  if (static_cast<std::size_t>(psi.size()) != n * n) throw ConfigError("pair wavefunction does not match the lattice");
  CVector dpsi = time_derivative(psi, H);
  auto at = [n](const CVector& v, std::size_t x1, std::size_t x2) { return v[static_cast<Eigen::Index>(x1 * n + x2)]; };
  const double dx = l.dx;
  std::vector<double> t01(n, 0.0), t11(n, 0.0), dt01(n, 0.0), force(n, 0.0);
  std::vector<char> ok(n, 1);
  for (std::size_t x = 0; x < n; ++x) {
    std::size_t p = l.neighbour(x, 0, 1), q = l.neighbour(x, 0, -1);
    if (p == n || q == n) {
      ok[x] = 0;
      continue;
    }
    for (std::size_t y = 0; y < n; ++y) {
      cplx f = at(psi, x, y), fp = at(psi, p, y), fq = at(psi, q, y);
      cplx g = (fp - fq) / (2.0 * dx);
      cplx g2 = (fp - 2.0 * f + fq) / (dx * dx);
      cplx ft = at(dpsi, x, y), gt = (at(dpsi, p, y) - at(dpsi, q, y)) / (2.0 * dx);
      t01[x] += dx * std::imag(std::conj(f) * g);
      t11[x] += dx * (2.0 * std::norm(g) - 2.0 * std::real(std::conj(f) * g2)) / (4.0 * m);
      dt01[x] += dx * std::imag(std::conj(ft) * g + std::conj(f) * gt);
      force[x] -= dx * std::norm(f) * dV(l.separation(x, y)[0]);
    }
  }
  PairMomentumBalance out;
  out.momentum_rate.assign(n, std::numeric_limits<double>::quiet_NaN());
  out.residual = out.momentum_rate;
  out.force = force;
  for (std::size_t x = 0; x < n; ++x) {
    std::size_t p = l.neighbour(x, 0, 1), q = l.neighbour(x, 0, -1);
    if (!ok[x] || p == n || q == n || !ok[p] || !ok[q]) continue;
    out.momentum_rate[x] = dt01[x] + (t11[p] - t11[q]) / (2.0 * dx);
    out.residual[x] = out.momentum_rate[x] - force[x];
  }
  return out;
}

double energy_gain_analytic(int dim, double lambda, double mass_ratio, double n_particles, double m, double a) {
  return dim * lambda * mass_ratio * mass_ratio * n_particles / (4.0 * m * a * a);
}

double energy_gain_lattice(const LatticeSpec& l, double lambda, double mass_ratio, double m, double a) {
  return l.dim * lambda * mass_ratio * mass_ratio * (1.0 - std::exp(-l.dx * l.dx / (4.0 * a * a))) / (m * l.dx * l.dx);
}

double fit_slope(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() != y.size() || t.size() < 2) throw ConfigError("slope fit needs two or more matching points");
  double mt = 0.0, my = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    mt += t[k];
    my += y[k];
  }
  mt /= static_cast<double>(t.size());
  my /= static_cast<double>(t.size());
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    num += (t[k] - mt) * (y[k] - my);
    den += (t[k] - mt) * (t[k] - mt);
  }
  return num / den;
}

namespace {

double species_ratio(const CollapseParams& p, int species) {
  if (p.masses.empty()) return 1.0;
  if (species < 0 || static_cast<std::size_t>(species) >= p.masses.size()) throw ConfigError("unknown species");
  return p.masses[static_cast<std::size_t>(species)] / p.m0;
}

}  // namespace

EnergyGainResult energy_gain_full(const EnergyGainScenario& sc, const CollapseParams& params) {
  sc.lattice.validate();
  params.validate();
  SmearingKernel kernel(sc.lattice, params.a);
  auto channels = single_particle_channels(kernel, params, sc.species);
  SparseH H = build_hamiltonian(FreeLattice{sc.m}, sc.lattice);
  LindbladModel model = lindblad_model(H, channels, params.lambda);
  std::array<double, 3> centre{0.0, 0.0, 0.0};
  CVector psi = gaussian_packet(sc.lattice, centre, sc.packet_width, sc.k0);
  CMatrix rho0 = psi * psi.adjoint();
  MasterOptions opt;
  opt.dt = sc.lattice.dt;
  opt.t_max = sc.lattice.dt * sc.lattice.n_steps;
  // every step is kept so the W-field rate is integrated on the integrator's own grid
  opt.record_every = 1;
  opt.check_eigenvalues = false;
  opt.check_every = 10;
  if (sc.record_every < 1) throw ConfigError("record_every must be >= 1");
  auto sol = integrate_master(rho0, model, opt);

  EnergyGainResult out;
  const Eigen::MatrixXcd Dc = model.D.cast<cplx>();
  double ew = 0.0, prev_rate = 0.0;
  const std::size_t last = sol.times.size() - 1;
  for (std::size_t k = 0; k < sol.times.size(); ++k) {
    const CMatrix& rho = sol.rho[k];
    double rate = (H * Dc.cwiseProduct(rho)).trace().real();
    if (k > 0) ew += 0.5 * (sol.times[k] - sol.times[k - 1]) * (rate + prev_rate);
    prev_rate = rate;
    if (k % static_cast<std::size_t>(sc.record_every) != 0 && k != last) continue;
    out.series.t.push_back(sol.times[k]);
    out.series.e_particle.push_back((H * rho).trace().real());
    out.series.e_wfield.push_back(ew);
  }
  double ratio = species_ratio(params, sc.species);
  out.measured_slope = fit_slope(out.series.t, out.series.e_particle);
  out.analytic = energy_gain_analytic(sc.lattice.dim, params.lambda, ratio, 1.0, sc.m, params.a);
  out.lattice = energy_gain_lattice(sc.lattice, params.lambda, ratio, sc.m, params.a);
  return out;
}

EnergyGainResult energy_gain_reduced(const EnergyGainScenario& sc, const CollapseParams& params) {
  const LatticeSpec& l = sc.lattice;
  l.validate();
  params.validate();
  if (!l.periodic) throw ConfigError("the translation-reduced energy run needs a periodic lattice");
  if (!(sc.m > 0.0)) throw ConfigError("particle mass must be > 0");
  const int n = l.n;
  const double ratio = species_ratio(params, sc.species);

  // per-axis autocorrelation of the separable packet and per-axis kernel overlaps
  LatticeSpec axis = l;
  axis.dim = 1;
  SmearingKernel k1(axis, params.a);
  std::vector<std::vector<cplx>> f1(l.dim, std::vector<cplx>(n));
  std::vector<double> o1(n);
  const std::size_t origin = static_cast<std::size_t>(n / 2);
  for (int r = 0; r < n; ++r) o1[r] = k1.overlap(origin, (origin + r) % n);
  for (int ax = 0; ax < l.dim; ++ax) {
    CVector p = gaussian_packet(axis, {0.0, 0.0, 0.0}, sc.packet_width, {sc.k0[ax], 0.0, 0.0});
    for (int r = 0; r < n; ++r) {
      cplx s = 0.0;
      for (int z = 0; z < n; ++z) s += p[(z + r) % n] * std::conj(p[z]);
      f1[ax][r] = s;
    }
  }
  const std::size_t nc = l.n_cells();
  std::vector<cplx> f(nc);
  std::vector<double> D(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    auto rc = l.coords(c);
    cplx v = 1.0;
    double o = 1.0;
    for (int ax = 0; ax < l.dim; ++ax) {
      v *= f1[ax][rc[ax]];
      o *= o1[rc[ax]];
    }
    f[c] = v;
    D[c] = params.lambda * ratio * ratio * (1.0 - o);
  }
  std::vector<std::size_t> nb;
  for (int ax = 0; ax < l.dim; ++ax) {
    std::array<int, 3> cp{0, 0, 0}, cm{0, 0, 0};
    cp[ax] = 1;
    cm[ax] = n - 1;
    nb.push_back(l.cell(cp));
    nb.push_back(l.cell(cm));
  }
  const double diag = l.dim / (sc.m * l.dx * l.dx), hop = -0.5 / (sc.m * l.dx * l.dx);
  auto energy = [&] {
    double e = diag * f[0].real();
    for (auto c : nb) e += hop * f[c].real();
    return e;
  };
  auto wrate = [&] {
    double s = 0.0;
    for (auto c : nb) s += hop * D[c] * f[c].real();
    return s;
  };

  EnergyGainResult out;
  double ew = 0.0, prev = wrate();
  out.series.t.push_back(0.0);
  out.series.e_particle.push_back(energy());
  out.series.e_wfield.push_back(0.0);
  const double h = l.dt;
  for (int s = 1; s <= l.n_steps; ++s) {
    for (std::size_t c = 0; c < nc; ++c) {
      double z = D[c] * h;
      f[c] *= 1.0 - z + z * z / 2.0 - z * z * z / 6.0 + z * z * z * z / 24.0;
    }
    double rate = wrate();
    ew += 0.5 * h * (rate + prev);
    prev = rate;
    if (s % sc.record_every == 0 || s == l.n_steps) {
      out.series.t.push_back(s * h);
      out.series.e_particle.push_back(energy());
      out.series.e_wfield.push_back(ew);
    }
  }
  out.measured_slope = fit_slope(out.series.t, out.series.e_particle);
  out.analytic = energy_gain_analytic(l.dim, params.lambda, ratio, 1.0, sc.m, params.a);
  out.lattice = energy_gain_lattice(l, params.lambda, ratio, sc.m, params.a);
  return out;
}

std::vector<double> collapse_energy_density_rate(const CMatrix& rho, const Eigen::MatrixXd& D, const LatticeSpec& l,
                                                 double m) {
  const std::size_t nc = l.n_cells();
  if (static_cast<std::size_t>(rho.rows()) != nc || D.rows() != rho.rows())
    throw ConfigError("density matrix does not match the lattice");
  std::vector<double> out(nc, 0.0);
  for (std::size_t x = 0; x < nc; ++x)
    for (int i = 0; i < l.dim; ++i) {
      std::size_t p = l.neighbour(x, i, 1);
      if (p == nc) continue;
      auto P = static_cast<Eigen::Index>(p), X = static_cast<Eigen::Index>(x);
      out[x] += D(P, X) * rho(P, X).real() / (m * l.dx * l.dx);
    }
  return out;
}

std::vector<std::vector<double>> wfield_energy_density(const LatticeSpec& l, const CollapseParams& params, double m,
                                                       const std::vector<double>& times,
                                                       const std::vector<std::vector<double>>& nbar) {
  l.validate();
  params.validate();
  if (times.size() != nbar.size() || times.empty()) throw ConfigError("missing density history");
  const std::size_t nc = l.n_cells();
  for (const auto& row : nbar)
    if (row.size() != nc) throw ConfigError("density history does not match the lattice");
  const double a = params.a, dV = l.cell_volume();
  const double pref = -params.lambda / (2.0 * m * std::pow(std::numbers::pi, l.dim / 2.0) * std::pow(a, l.dim + 4));
  std::vector<double> integral(nc, 0.0);
  std::vector<std::vector<double>> out;
  out.reserve(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (k > 0) {
      double h = times[k] - times[k - 1];
      for (std::size_t z = 0; z < nc; ++z) integral[z] += 0.5 * h * (nbar[k][z] + nbar[k - 1][z]);
    }
    std::vector<double> T(nc, 0.0);
    for (std::size_t z = 0; z < nc; ++z) {
      if (integral[z] == 0.0) continue;
      for (std::size_t x = 0; x < nc; ++x) {
        double r2 = l.distance_squared(x, z);
        T[x] += pref * dV * r2 * std::exp(-r2 / (a * a)) * integral[z];
      }
    }
    out.push_back(std::move(T));
  }
  return out;
}

std::vector<std::vector<std::array<double, 3>>> wfield_momentum_density(const LatticeSpec& l,
                                                                       const CollapseChannels& channels, double lambda,
                                                                       const std::vector<double>& times,
                                                                       const std::vector<CMatrix>& rho) {
  const std::size_t nc = l.n_cells();
  if (channels.n_channels() != nc) throw ConfigError("channels are not lattice cells");
  if (times.size() != rho.size() || times.empty()) throw ConfigError("missing density history");
  const Eigen::Index B = channels.values.cols();
  std::vector<std::vector<std::array<double, 3>>> out;
  std::vector<std::array<cplx, 3>> acc(nc, {cplx(0.0), cplx(0.0), cplx(0.0)});
  std::vector<std::array<cplx, 3>> prev(nc, {cplx(0.0), cplx(0.0), cplx(0.0)});
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<std::array<cplx, 3>> cur(nc, {cplx(0.0), cplx(0.0), cplx(0.0)});
    for (std::size_t x = 0; x < nc; ++x)
      for (int i = 0; i < l.dim; ++i) {
        std::size_t p = l.neighbour(x, i, 1), q = l.neighbour(x, i, -1);
        if (p == nc || q == nc) continue;
        cplx tr = 0.0;
        for (Eigen::Index b = 0; b < B; ++b) {
          double A = channels.values(static_cast<Eigen::Index>(x), b);
          double dA = (channels.values(static_cast<Eigen::Index>(p), b) - channels.values(static_cast<Eigen::Index>(q), b)) /
                      (2.0 * l.dx);
          // diagonal operators: [A, dA] has entries A dA - dA A
          tr += (A * dA - dA * A) * rho[k](b, b);
        }
        cur[x][i] = cplx(0.0, -0.5 * lambda) * tr;
      }
    if (k > 0) {
      double h = times[k] - times[k - 1];
      for (std::size_t x = 0; x < nc; ++x)
        for (int i = 0; i < 3; ++i) acc[x][i] += 0.5 * h * (cur[x][i] + prev[x][i]);
    }
    prev = cur;
    std::vector<std::array<double, 3>> row(nc, {0.0, 0.0, 0.0});
    for (std::size_t x = 0; x < nc; ++x)
      for (int i = 0; i < 3; ++i) row[x][i] = acc[x][i].real();
    out.push_back(std::move(row));
  }
  return out;
}

LedgerDrift ledger_check(const std::vector<double>& ep, const std::vector<double>& ew) {
  if (ep.size() != ew.size() || ep.empty()) throw ConfigError("ledger series must share a non-empty time grid");
  LedgerDrift d;
  const double base = ep[0] + ew[0];
  for (std::size_t k = 0; k < ep.size(); ++k) {
    double v = std::abs(ep[k] + ew[k] - base);
    if (v > d.max_drift) {
      d.max_drift = v;
      d.at = k;
    }
  }
  return d;
}

}  // namespace csl
