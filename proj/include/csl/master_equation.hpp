#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "csl/errors.hpp"
#include "csl/hilbert.hpp"

namespace csl {

/// d rho/dt = -i[H, rho] - (lambda/2) sum_c weight_c [A_c, [A_c, rho]].
/// With every A_c diagonal the double commutator is the Hadamard product D o rho with
/// D(r, s) = (lambda/2) sum_c weight_c (v(c,r) - v(c,s))^2, which is symmetric and vanishes on
/// the diagonal, so the generator output is exactly traceless and Hermitian.
struct LindbladModel {
  SparseH H;
  Eigen::MatrixXd D;

  std::size_t dim() const { return static_cast<std::size_t>(D.rows()); }
  CMatrix operator()(const CMatrix& rho) const;
};

LindbladModel lindblad_model(const SparseH& H, const CollapseChannels& channels, double lambda);

CMatrix lindblad_generator(const CMatrix& rho, const LindbladModel& model);

/// Gamma_rs = (lambda/2) dV sum_x (A_r(x) - A_s(x))^2.
double decoherence_rate(const MassDensityProfile& r, const MassDensityProfile& s, double lambda, double cell_volume);

struct MasterOptions {
  double dt = 1e-3;
  double t_max = 1.0;
  int record_every = 1;
  /// Bound on the embedded step-doubling error estimate; 0 disables the check.
  double step_tolerance = 1e-8;
  /// Run the embedded check every this many steps.
  int check_every = 1;
  bool check_invariants = true;
  bool check_eigenvalues = true;
  DensityMatrixTolerances tolerances{};
};

struct MasterSolution {
  std::vector<double> times;
  std::vector<CMatrix> rho;
  double max_step_error = 0.0;
};

template <class Generator>
CMatrix rk4_step(const CMatrix& rho, const Generator& f, double h) {
  CMatrix k1 = f(rho);
  CMatrix k2 = f(rho + 0.5 * h * k1);
  CMatrix k3 = f(rho + 0.5 * h * k2);
  CMatrix k4 = f(rho + h * k3);
  CMatrix out = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  // restore exact hermiticity lost to rounding
  return 0.5 * (out + out.adjoint());
}

/// Classical RK4 at fixed dt. Every `check_every` steps the full step is compared against two
/// half steps; the Richardson estimate |full - halves|/15 must stay below step_tolerance.
template <class Generator>
MasterSolution integrate_master(const CMatrix& rho0, const Generator& f, const MasterOptions& opt) {
  if (!(opt.dt > 0.0) || !(opt.t_max >= 0.0)) throw ConfigError("integrate_master needs dt > 0 and t_max >= 0");
  if (opt.record_every < 1) throw ConfigError("record_every must be >= 1");
  const long n_steps = std::lround(opt.t_max / opt.dt);
  if (std::abs(n_steps * opt.dt - opt.t_max) > 1e-9 * std::max(1.0, opt.t_max))
    throw ConfigError("t_max must be a whole number of steps");
  MasterSolution sol;
  CMatrix rho = rho0;
  auto keep = [&](long s) {
    if (opt.check_invariants) check_density_matrix(rho, opt.tolerances, opt.check_eigenvalues);
    sol.times.push_back(s * opt.dt);
    sol.rho.push_back(rho);
  };
  keep(0);
  for (long s = 1; s <= n_steps; ++s) {
    CMatrix next = rk4_step(rho, f, opt.dt);
    if (opt.step_tolerance > 0.0 && opt.check_every > 0 && (s - 1) % opt.check_every == 0) {
      CMatrix half = rk4_step(rk4_step(rho, f, 0.5 * opt.dt), f, 0.5 * opt.dt);
      double err = (next - half).cwiseAbs().maxCoeff() / 15.0;
      sol.max_step_error = std::max(sol.max_step_error, err);
      if (err > opt.step_tolerance) {
        char msg[160];
        std::snprintf(msg, sizeof msg, "master-equation step error %.3e at t=%.6g exceeds tolerance %.3e; reduce dt",
                      err, s * opt.dt, opt.step_tolerance);
        throw InvariantViolation(msg);
      }
    }
    rho = std::move(next);
    if (!rho.allFinite()) throw InvariantViolation("non-finite density matrix at t=" + std::to_string(s * opt.dt));
    if (s % opt.record_every == 0 || s == n_steps) keep(s);
  }
  return sol;
}

}  // namespace csl
