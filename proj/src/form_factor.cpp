#include "csl/form_factor.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <queue>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "csl/errors.hpp"

namespace csl {

namespace {

constexpr double kPrefactor = -2.0 / (16.0 * std::numbers::pi * std::numbers::pi * std::numbers::pi * std::numbers::pi);

using GK = boost::math::quadrature::gauss_kronrod<double, 31>;

struct Piece {
  double a, b, value, err;
  bool operator<(const Piece& o) const { return err < o.err; }
};

Piece gk_piece(auto& f, double a, double b) {
  Piece p{a, b, 0.0, 0.0};
  p.value = GK::integrate(f, a, b, 0, 0.0, &p.err);
  return p;
}

// globally adaptive GK31 over [a, b] pre-split at pts: bisect the worst piece until the summed
// error estimate is below tol times the L1 norm of the integrand
template <class F>
double piecewise(F&& f, double a, double b, std::vector<double> pts, double tol, int max_pieces = 4000) {
  if (!(b > a)) return 0.0;
  pts.push_back(a);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  std::priority_queue<Piece> heap;
  double prev = a, value = 0.0, err = 0.0, l1 = 0.0;
  for (double p : pts) {
    if (p <= prev) continue;
    if (p > b) break;
    Piece q{prev, p, 0.0, 0.0};
    double norm = 0.0;
    q.value = GK::integrate(f, prev, p, 0, 0.0, &q.err, &norm);
    l1 += norm;
    value += q.value;
    err += q.err;
    heap.push(q);
    prev = p;
  }
  while (err > tol * l1 && static_cast<int>(heap.size()) < max_pieces) {
    Piece w = heap.top();
    heap.pop();
    const double m = 0.5 * (w.a + w.b);
    Piece l = gk_piece(f, w.a, m), r = gk_piece(f, m, w.b);
    value += l.value + r.value - w.value;
    err += l.err + r.err - w.err;
    heap.push(l);
    heap.push(r);
  }
  return value;
}

}  // namespace

void FormFactorQuery::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("form factor regulator eps must be > 0");
  if (!std::isfinite(sigma) || !std::isfinite(T1) || !std::isfinite(T2)) throw ConfigError("form factor query must be finite");
}

std::array<double, 3> reg_principal(double s, double eps) {
  const double s2 = s * s, e2 = eps * eps, d = s2 + e2;
  return {s / d, (e2 - s2) / (d * d), 2.0 * s * (s2 - 3.0 * e2) / (d * d * d)};
}

std::array<double, 3> reg_inverse_sqrt(double u, double eps) {
  const std::complex<double> z(u, eps);
  const std::complex<double> r = 1.0 / std::sqrt(z);  // principal branch, Im z > 0
  const std::complex<double> r3 = r * r * r;
  return {r.real(), (-0.5 * r3).real(), (0.75 * r3 * r * r).real()};
}

std::array<double, 3> bracket_with_derivatives(const FormFactorQuery& q) {
  q.validate();
  const double u1 = q.sigma + q.T1 * q.T1;
  const double u2 = q.T2 * q.T2 - q.sigma;
  const auto h1 = reg_inverse_sqrt(u1, q.eps);
  const auto h2 = reg_inverse_sqrt(u2, q.eps);
  const double S = q.T1 * h1[0] + q.T2 * h2[0];
  const double S1 = q.T1 * h1[1] - q.T2 * h2[1];
  const double S2 = q.T1 * h1[2] + q.T2 * h2[2];
  const auto p = reg_principal(q.sigma, q.eps);
  return {S * p[0], S1 * p[0] + S * p[1], S2 * p[0] + 2.0 * S1 * p[1] + S * p[2]};
}

double g_closed(const FormFactorQuery& q) { return kPrefactor * bracket_with_derivatives(q)[2]; }

double braced_factor(double sigma, double T1, double eps) {
  FormFactorQuery{sigma, T1, 0.0, eps}.validate();
  return T1 * reg_inverse_sqrt(sigma + T1 * T1, eps)[0] * reg_principal(sigma, eps)[0];
}

double omega_integrand(double omega, double sigma, double T1, double eps) {
  const double f = sigma + T1 * T1 - (T1 - omega) * (T1 - omega);
  const double delta = std::exp(-0.5 * f * f / (eps * eps)) / (std::sqrt(2.0 * std::numbers::pi) * eps);
  return omega / (omega * omega + eps * eps) * delta;
}

std::vector<double> omega_roots(double sigma, double T1) {
  const double u = sigma + T1 * T1;
  if (!(u > 0.0)) return {};
  const double s = std::sqrt(u);
  return {T1 - s, T1 + s};
}

double omega_quadrature(double sigma, double T1, double eps) {
  FormFactorQuery{sigma, T1, 0.0, eps}.validate();
  const double u = sigma + T1 * T1;
  auto f = [&](double w) { return omega_integrand(w, sigma, T1, eps); };
  // the Gaussian delta confines the mass to |u - (T1 - Omega)^2| < ~12 eps
  const double reach_hi = std::sqrt(std::max(u, 0.0) + 12.0 * eps);
  const double reach_lo = std::sqrt(std::max(u - 12.0 * eps, 0.0));
  std::vector<double> pts;
  for (double sgn : {-1.0, 1.0})
    for (double d : {reach_lo, std::sqrt(std::max(u, 0.0))}) pts.push_back(T1 + sgn * d);
  pts.push_back(0.0);
  double s = piecewise(f, T1 - reach_hi, T1 + reach_hi, pts, 1e-10);
  return s;
}

double g_spatial_integral_at(double T1, double T2, double w, double eps, double R) {
  if (!(eps > 0.0)) throw ConfigError("form factor regulator eps must be > 0");
  if (!(w > 0.0)) throw ConfigError("test-function width must be > 0");
  if (!(R >= 4.0 * w)) throw ConfigError("radial cutoff must cover at least 4 widths");
  if (T1 == T2) return 0.0;  // odd under t1 <-> t2
  if (T1 > T2) return -g_spatial_integral_at(T2, T1, w, eps, R);

  const double pi = std::numbers::pi;
  const double f0 = std::pow(2.0 * pi * w * w, -1.5);
  const double w2 = w * w, w4 = w2 * w2;
  const double c = T2 * T2 - T1 * T1;

  // second delta-derivative of F(r, delta) = 8 pi^2 f0 w^2 (r^2 - delta^2/4)(e^{-delta^2/2w^2} - e^{-2r^2/w^2})
  auto Fdd = [&](double r, double d) {
    const double P = r * r - 0.25 * d * d, P1 = -0.5 * d, P2 = -0.5;
    const double E = std::exp(-0.5 * d * d / w2);
    const double Q = E - std::exp(-2.0 * r * r / w2);
    const double Q1 = -d / w2 * E, Q2 = (d * d / w4 - 1.0 / w2) * E;
    return 8.0 * pi * pi * f0 * w2 * (P2 * Q + 2.0 * P1 * Q1 + P * Q2);
  };
  auto B = [&](double sigma) { return bracket_with_derivatives({sigma, T1, T2, eps})[0]; };

  auto inner = [&](double r) {
    if (r <= 0.0) return 0.0;
    // Fdd carries exp(-delta^2/2w^2) and exp(-2r^2/w^2); nothing survives past 12w
    const double reach = std::min(2.0 * r, 12.0 * w);
    const double lo = -reach, hi = reach;
    std::vector<double> pts;
    for (double s0 : {-c, -T2 * T2, T1 * T1}) {
      const double d0 = s0 / (2.0 * r);
      for (double k : {0.0, 1.0, 10.0, 100.0})
        for (double sgn : {-1.0, 1.0}) {
          double p = d0 + sgn * k * eps / (2.0 * r);
          if (p > lo && p < hi) pts.push_back(p);
        }
    }
    auto g = [&](double d) { return Fdd(r, d) * B(2.0 * r * d + c); };
    return piecewise(g, lo, hi, pts, 1e-8) / (4.0 * r * r);
  };

  std::vector<double> rpts;
  for (double s0 : {std::abs(c), T2 * T2, T1 * T1}) {
    double r0 = 0.5 * std::sqrt(s0);
    if (r0 > 0.0 && r0 < R) rpts.push_back(r0);
  }
  for (double r = 0.25 * w; r < R; r *= 2.0) rpts.push_back(r);
  return kPrefactor * piecewise(inner, 0.0, R, rpts, 1e-6);
}

SpatialIntegralResult g_spatial_integral(double T1, double T2, double w, double eps, double R) {
  SpatialIntegralResult out;
  out.T1 = T1;
  out.T2 = T2;
  out.width = w;
  out.radius = R;
  out.eps = {eps, 0.5 * eps, 0.25 * eps};
  for (int k = 0; k < 3; ++k) out.values[k] = g_spatial_integral_at(T1, T2, w, out.eps[k], R);
  // J(e) = J0 + a sqrt(e) + b e
  const double r2 = std::numbers::sqrt2;
  const double J1 = out.values[0], J2 = out.values[1], J4 = out.values[2];
  out.extrapolated_two = (r2 * J2 - J1) / (r2 - 1.0);
  const double J2b = (r2 * J4 - J2) / (r2 - 1.0);
  // each two-point estimate is off by -b e / sqrt2, so halving e halves the residue
  out.extrapolated = 2.0 * J2b - out.extrapolated_two;
  out.converged = std::abs(out.extrapolated - out.extrapolated_two) <= 0.1 * std::abs(out.extrapolated);
  out.test_at_origin = std::pow(2.0 * std::numbers::pi * w * w, -1.5);
  const double sgn = T2 > T1 ? 1.0 : (T2 < T1 ? -1.0 : 0.0);
  out.expected = 0.25 * sgn * out.test_at_origin;
  out.relative_error = out.expected != 0.0 ? (out.extrapolated - out.expected) / std::abs(out.expected) : out.extrapolated;
  return out;
}

double g_approx(const LatticeSpec& l, std::size_t x, std::size_t x1, std::size_t x2, double t1, double t2) {
  if (x >= l.n_cells() || x1 >= l.n_cells() || x2 >= l.n_cells()) throw ConfigError("cell is off-lattice");
  if (x != x1 || x != x2) return 0.0;
  const double sgn = t1 > t2 ? 1.0 : (t1 < t2 ? -1.0 : 0.0);
  const double inv = 1.0 / l.cell_volume();
  return 0.25 * inv * inv * sgn;
}

}  // namespace csl
