#pragma once

#include <array>
#include <vector>

#include "csl/lattice.hpp"

namespace csl {

/// sigma = (x - x1)^2 - (x - x2)^2, T_i = t - t_i, eps > 0 the regulator.
struct FormFactorQuery {
  double sigma = 0.0;
  double T1 = 0.0;
  double T2 = 0.0;
  double eps = 1e-3;
  void validate() const;
};

/// Regularised pieces: P(1/s) -> s / (s^2 + eps^2), Theta(u)/sqrt(u) -> Re (u + i eps)^(-1/2).
/// Each returns {f, f', f''}.
std::array<double, 3> reg_principal(double s, double eps);
std::array<double, 3> reg_inverse_sqrt(double u, double eps);

/// The bracket B(sigma) = [T1 Theta/sqrt(sigma + T1^2) + T2 Theta/sqrt(T2^2 - sigma)] P(1/sigma)
/// and its first two sigma derivatives.
std::array<double, 3> bracket_with_derivatives(const FormFactorQuery& q);

/// G = -2/(2 pi)^4 d^2B/dsigma^2, differentiated analytically.
double g_closed(const FormFactorQuery& q);

/// T1 Theta(sigma + T1^2) / sqrt(sigma + T1^2) * P(1/sigma), regularised.
double braced_factor(double sigma, double T1, double eps);

/// Omega / (Omega^2 + eps^2) * delta_eps(sigma + T1^2 - (T1 - Omega)^2), Gaussian delta of width eps.
double omega_integrand(double omega, double sigma, double T1, double eps);

/// Roots T1 -+ sqrt(sigma + T1^2) of the delta argument; empty when sigma + T1^2 <= 0.
std::vector<double> omega_roots(double sigma, double T1);

/// Adaptive quadrature of omega_integrand over the real line. Tends to -braced_factor.
double omega_quadrature(double sigma, double T1, double eps);

struct SpatialIntegralResult {
  double T1 = 0.0, T2 = 0.0;
  double width = 1.0;
  double radius = 0.0;
  std::array<double, 3> eps{};
  std::array<double, 3> values{};
  /// Two-point (sqrt eps) and three-point (sqrt eps + eps) extrapolations.
  double extrapolated_two = 0.0;
  double extrapolated = 0.0;
  bool converged = true;
  /// 1/4 sign(t1 - t2) times the test function at the origin.
  double expected = 0.0;
  double test_at_origin = 0.0;
  double relative_error = 0.0;
};

/// Integral over x of G against a normalised Gaussian test function of width w in x1 - x2,
/// reduced to (r, delta) with r the half-sum and delta the difference of |x - x_i| and
/// integrated by parts twice in sigma. The radial integral is cut at `radius`.
/// Evaluated at eps, eps/2, eps/4 and extrapolated.
double g_spatial_integral_at(double T1, double T2, double width, double eps, double radius);
SpatialIntegralResult g_spatial_integral(double T1, double T2, double width, double eps, double radius);

/// Lattice stencil for the local approximation: 1/4 delta(x - x1) delta(x - x2) sign(t1 - t2)
/// with delta = 1/dV on the matching cell.
double g_approx(const LatticeSpec& lattice, std::size_t x, std::size_t x1, std::size_t x2, double t1, double t2);

}  // namespace csl
