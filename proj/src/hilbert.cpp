#include "csl/hilbert.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "csl/errors.hpp"

namespace csl {

namespace {

double species_mass(const CollapseParams& params, int species) {
  if (params.masses.empty()) {
    if (species != 0) throw ConfigError("species " + std::to_string(species) + " has no mass");
    return params.m0;
  }
  if (species < 0 || static_cast<std::size_t>(species) >= params.masses.size())
    throw ConfigError("species " + std::to_string(species) + " has no mass");
  return params.masses[static_cast<std::size_t>(species)];
}

int axis_offset(const LatticeSpec& l, int xi, int zi) {
  int d = xi - zi;
  if (l.periodic) {
    if (d > l.n / 2) d -= l.n;
    else if (d < -l.n / 2) d += l.n;
  }
  return d;
}

}  // namespace

SmearingKernel::SmearingKernel(const LatticeSpec& lattice, double a) : lattice_(lattice), a_(a) {
  lattice_.validate();
  if (!(a > 0.0)) throw ConfigError("smearing length a must be > 0");
  const int n = lattice_.n;
  axis_.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int z = 0; z < n; ++z) {
    double s = 0.0;
    for (int x = 0; x < n; ++x) {
      double y = axis_offset(lattice_, x, z) * lattice_.dx;
      double k = std::exp(-y * y / (2.0 * a * a));
      axis_[static_cast<std::size_t>(z) * n + x] = k;
      s += k * k;
    }
    double norm = 1.0 / std::sqrt(s * lattice_.dx);
    for (int x = 0; x < n; ++x) axis_[static_cast<std::size_t>(z) * n + x] *= norm;
  }
}

double SmearingKernel::value(std::size_t z, std::size_t x) const {
  auto cz = lattice_.coords(z), cx = lattice_.coords(x);
  double v = 1.0;
  for (int k = 0; k < lattice_.dim; ++k) v *= axis_[static_cast<std::size_t>(cz[k]) * lattice_.n + cx[k]];
  return v;
}

std::vector<double> SmearingKernel::column(std::size_t z) const {
  const std::size_t nc = lattice_.n_cells();
  std::vector<double> out(nc);
  auto cz = lattice_.coords(z);
  const int n = lattice_.n;
  const double* a0 = &axis_[static_cast<std::size_t>(cz[0]) * n];
  if (lattice_.dim == 1) {
    for (int x = 0; x < n; ++x) out[x] = a0[x];
    return out;
  }
  const double* a1 = &axis_[static_cast<std::size_t>(cz[1]) * n];
  const double* a2 = &axis_[static_cast<std::size_t>(cz[2]) * n];
  std::size_t i = 0;
  for (int x2 = 0; x2 < n; ++x2)
    for (int x1 = 0; x1 < n; ++x1) {
      double p = a2[x2] * a1[x1];
      for (int x0 = 0; x0 < n; ++x0) out[i++] = p * a0[x0];
    }
  return out;
}

double SmearingKernel::overlap(std::size_t z, std::size_t zp) const {
  auto cz = lattice_.coords(z), cp = lattice_.coords(zp);
  const int n = lattice_.n;
  double v = 1.0;
  for (int k = 0; k < lattice_.dim; ++k) {
    double s = 0.0;
    for (int x = 0; x < n; ++x)
      s += axis_[static_cast<std::size_t>(cz[k]) * n + x] * axis_[static_cast<std::size_t>(cp[k]) * n + x];
    v *= s * lattice_.dx;
  }
  return v;
}

MassDensityProfile build_mass_density(const SmearingKernel& kernel, const CollapseParams& params,
                                      const Configuration& config) {
  params.validate();
  const std::size_t nc = kernel.lattice().n_cells();
  MassDensityProfile p;
  p.values.assign(nc, 0.0);
  for (const auto& o : config.sites) {
    if (o.cell >= nc) throw ConfigError("configuration cell " + std::to_string(o.cell) + " is off-lattice");
    if (!(o.count >= 0.0) || !std::isfinite(o.count)) throw ConfigError("occupation must be finite and >= 0");
    double scale = species_mass(params, o.species) / params.m0 * o.count;
    if (scale == 0.0) continue;
    auto col = kernel.column(o.cell);
    for (std::size_t x = 0; x < nc; ++x) p.values[x] += scale * col[x];
  }
  return p;
}

void CollapseChannels::validate() const {
  if (static_cast<std::size_t>(weights.size()) != n_channels())
    throw ConfigError("collapse channel weights do not match channel count");
  for (Eigen::Index c = 0; c < weights.size(); ++c)
    if (!(weights[c] > 0.0)) throw ConfigError("collapse channel weights must be > 0");
  if (!values.allFinite()) throw ConfigError("collapse channel values must be finite");
}

CollapseChannels branch_channels(const SmearingKernel& kernel, const CollapseParams& params,
                                 const std::vector<Configuration>& branches) {
  const std::size_t nc = kernel.lattice().n_cells();
  CollapseChannels ch;
  ch.values.resize(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(branches.size()));
  for (std::size_t r = 0; r < branches.size(); ++r) {
    auto prof = build_mass_density(kernel, params, branches[r]);
    for (std::size_t x = 0; x < nc; ++x) ch.values(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(r)) = prof.values[x];
  }
  ch.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(nc), kernel.lattice().cell_volume());
  return ch;
}

CollapseChannels single_particle_channels(const SmearingKernel& kernel, const CollapseParams& params, int species) {
  params.validate();
  const std::size_t nc = kernel.lattice().n_cells();
  double scale = species_mass(params, species) / params.m0;
  CollapseChannels ch;
  ch.values.resize(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(nc));
  for (std::size_t z = 0; z < nc; ++z) {
    auto col = kernel.column(z);
    for (std::size_t x = 0; x < nc; ++x) ch.values(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(z)) = scale * col[x];
  }
  ch.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(nc), kernel.lattice().cell_volume());
  return ch;
}

CollapseChannels pair_channels(const SmearingKernel& kernel, const CollapseParams& params, int species) {
  if (kernel.lattice().dim != 1) throw ConfigError("pair basis is only defined on a 1-D lattice");
  auto single = single_particle_channels(kernel, params, species);
  const Eigen::Index n = single.values.cols();
  CollapseChannels ch;
  ch.values.resize(n, n * n);
  for (Eigen::Index z1 = 0; z1 < n; ++z1)
    for (Eigen::Index z2 = 0; z2 < n; ++z2) ch.values.col(z1 * n + z2) = single.values.col(z1) + single.values.col(z2);
  ch.weights = single.weights;
  return ch;
}

CollapseChannels fock_site_channel(int n_max) {
  if (n_max < 1) throw ConfigError("Fock truncation n_max must be >= 1");
  CollapseChannels ch;
  ch.values.resize(1, n_max + 1);
  for (int k = 0; k <= n_max; ++k) ch.values(0, k) = k;
  ch.weights = Eigen::VectorXd::Ones(1);
  return ch;
}

Eigen::MatrixXd dephasing_matrix(const CollapseChannels& channels, double lambda) {
  channels.validate();
  const Eigen::Index B = channels.values.cols(), C = channels.values.rows();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(B, B);
  if (lambda == 0.0) return D;
  const double work = static_cast<double>(C) * B * B;
  if (work <= 4e8) {
    for (Eigen::Index s = 0; s < B; ++s)
      for (Eigen::Index r = s + 1; r < B; ++r) {
        double acc = 0.0;
        for (Eigen::Index c = 0; c < C; ++c) {
          double d = channels.values(c, r) - channels.values(c, s);
          acc += channels.weights[c] * d * d;
        }
        D(r, s) = D(s, r) = 0.5 * lambda * acc;
      }
    return D;
  }
  // Gram form for large bases; exact zero on the diagonal, clamped at 0.
  Eigen::MatrixXd Wv = channels.weights.asDiagonal() * channels.values;
  Eigen::MatrixXd G = channels.values.transpose() * Wv;
  Eigen::VectorXd q = G.diagonal();
  for (Eigen::Index s = 0; s < B; ++s)
    for (Eigen::Index r = s + 1; r < B; ++r) {
      double v = 0.5 * lambda * std::max(0.0, q[r] + q[s] - 2.0 * G(r, s));
      D(r, s) = D(s, r) = v;
    }
  return D;
}

namespace {

void add(std::vector<Eigen::Triplet<cplx>>& t, std::size_t r, std::size_t c, cplx v) {
  t.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
}

void laplacian_triplets(const LatticeSpec& l, double m, std::vector<Eigen::Triplet<cplx>>& t,
                        std::size_t stride_outer, std::size_t stride_inner, std::size_t n_outer) {
  // -lap/2m acting on one factor of a product basis: index = o * stride_outer + cell * stride_inner + i
  const double diag = l.dim / (m * l.dx * l.dx);
  const double hop = -0.5 / (m * l.dx * l.dx);
  const std::size_t nc = l.n_cells();
  for (std::size_t o = 0; o < n_outer; ++o)
    for (std::size_t i = 0; i < stride_inner; ++i)
      for (std::size_t z = 0; z < nc; ++z) {
        std::size_t row = o * stride_outer + z * stride_inner + i;
        add(t, row, row, diag);
        for (int ax = 0; ax < l.dim; ++ax)
          for (int step : {-1, 1}) {
            std::size_t nb = l.neighbour(z, ax, step);
            if (nb == nc) continue;
            add(t, row, o * stride_outer + nb * stride_inner + i, hop);
          }
      }
}

}  // namespace

SparseH build_hamiltonian(const HamiltonianSpec& spec, const LatticeSpec& lattice) {
  std::vector<Eigen::Triplet<cplx>> t;
  std::size_t dim = 0;
  if (auto* z = std::get_if<ZeroHamiltonian>(&spec)) {
    dim = z->dim;
  } else if (auto* f = std::get_if<FreeLattice>(&spec)) {
    lattice.validate();
    if (!(f->m > 0.0)) throw ConfigError("particle mass must be > 0");
    if (lattice.periodic && lattice.n < 3) throw ConfigError("periodic lattice needs n >= 3 for the Laplacian");
    dim = lattice.n_cells();
    laplacian_triplets(lattice, f->m, t, 0, 1, 1);
  } else if (auto* p = std::get_if<PairPotential>(&spec)) {
    lattice.validate();
    if (lattice.dim != 1) throw ConfigError("pair_potential is only defined on a 1-D lattice");
    if (!(p->m > 0.0)) throw ConfigError("particle mass must be > 0");
    if (!p->V) throw ConfigError("pair_potential needs a potential");
    const std::size_t n = lattice.n_cells();
    dim = n * n;
    laplacian_triplets(lattice, p->m, t, n, 1, n);  // second particle
    laplacian_triplets(lattice, p->m, t, 0, n, 1);  // first particle
    for (std::size_t z1 = 0; z1 < n; ++z1)
      for (std::size_t z2 = 0; z2 < n; ++z2) {
        double v = p->V(lattice.separation(z1, z2)[0]);
        if (!std::isfinite(v)) throw ConfigError("pair potential is not finite");
        add(t, z1 * n + z2, z1 * n + z2, v);
      }
  } else if (auto* d = std::get_if<DisplacedOscillators>(&spec)) {
    if (d->n_max < 1) throw ConfigError("Fock truncation n_max must be >= 1");
    dim = static_cast<std::size_t>(d->n_max) + 1;
    for (int k = 0; k <= d->n_max; ++k) {
      add(t, k, k, d->m * k);
      if (k < d->n_max && d->g != 0.0) {
        double c = d->g * std::sqrt(k + 1.0);
        add(t, k, k + 1, c);
        add(t, k + 1, k, c);
      }
    }
  } else if (auto* g = std::get_if<GravityBranches>(&spec)) {
    dim = g->energies.size();
    for (std::size_t r = 0; r < dim; ++r) add(t, r, r, g->energies[r]);
  } else if (auto* e = std::get_if<ExplicitMatrix>(&spec)) {
    if (e->H.rows() != e->H.cols()) throw ConfigError("explicit Hamiltonian must be square");
    if (!e->H.allFinite()) throw ConfigError("explicit Hamiltonian has non-finite entries");
    double scale = std::max(1.0, e->H.cwiseAbs().maxCoeff());
    if ((e->H - e->H.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw ConfigError("explicit Hamiltonian is not Hermitian");
    dim = static_cast<std::size_t>(e->H.rows());
    for (Eigen::Index r = 0; r < e->H.rows(); ++r)
      for (Eigen::Index c = 0; c < e->H.cols(); ++c)
        if (e->H(r, c) != cplx(0.0)) add(t, r, c, e->H(r, c));
  }
  SparseH H(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  H.setFromTriplets(t.begin(), t.end());
  return H;
}

CVector gaussian_packet(const LatticeSpec& lattice, const std::array<double, 3>& centre, double width,
                        const std::array<double, 3>& k0) {
  lattice.validate();
  if (!(width > 0.0)) throw ConfigError("packet width must be > 0");
  const std::size_t nc = lattice.n_cells();
  CVector psi(static_cast<Eigen::Index>(nc));
  // centre the phase and envelope on the nearest image of `centre`
  std::size_t c0 = lattice.cell_at(centre);
  auto base = lattice.position(c0);
  for (std::size_t z = 0; z < nc; ++z) {
    auto d = lattice.separation(z, c0);
    double r2 = 0.0, phase = 0.0;
    for (int k = 0; k < lattice.dim; ++k) {
      double y = d[k] + base[k] - centre[k];
      r2 += y * y;
      phase += k0[k] * (d[k] + base[k]);
    }
    psi[static_cast<Eigen::Index>(z)] = std::exp(-r2 / (4.0 * width * width)) * std::polar(1.0, phase);
  }
  psi /= psi.norm();
  return psi;
}

void check_density_matrix(const CMatrix& rho, const DensityMatrixTolerances& tol, bool eigenvalues) {
  if (rho.rows() != rho.cols()) throw InvariantViolation("density matrix is not square");
  if (!rho.allFinite()) throw InvariantViolation("density matrix has non-finite entries");
  double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  if (herm > tol.hermitian) throw InvariantViolation("density matrix not Hermitian: " + std::to_string(herm));
  double tr = rho.trace().real();
  if (std::abs(tr - 1.0) > tol.trace) throw InvariantViolation("density matrix trace " + std::to_string(tr));
  if (eigenvalues) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho, Eigen::EigenvaluesOnly);
    double mn = es.eigenvalues().minCoeff();
    if (mn < tol.min_eigenvalue) throw InvariantViolation("density matrix eigenvalue " + std::to_string(mn));
  }
}

}  // namespace csl
