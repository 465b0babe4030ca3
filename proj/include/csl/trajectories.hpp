#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csl/hilbert.hpp"
#include "csl/noise.hpp"

namespace csl {

/// How w is drawn under the physical measure.
/// exact_mixture: pick basis state b with probability |psi_b|^2, then w = 2 lambda v_b + noise.
///   Exact for one collapse interval because every channel is diagonal in the basis.
/// mean_drift: w = 2 lambda <v> + noise. Weak order one in dt.
enum class PhysicalScheme { exact_mixture, mean_drift };

/// Channels plus the per-basis constants needed for repeated collapse steps.
class CollapseKernel {
 public:
  CollapseKernel(CollapseChannels channels, double lambda);

  const CollapseChannels& channels() const { return channels_; }
  double lambda() const { return lambda_; }
  std::size_t n_channels() const { return channels_.n_channels(); }
  std::size_t basis_size() const { return channels_.basis_size(); }

  /// Multiplies psi_b by exp(h sum_c weight_c (w_c v_cb - lambda v_cb^2)), renormalises psi and
  /// returns log of the squared-norm factor (the increment of log P_w under the vacuum measure).
  double apply(CVector& psi, std::span<const double> w, double h) const;

  /// Draws the noise for one collapse interval of length h.
  void draw(std::vector<double>& w, const CVector& psi, double h, NoiseMeasure measure, PhysicalScheme scheme,
            NoiseStream& rng) const;

  /// Per-channel noise variance lambda / (weight_c h).
  double variance(std::size_t c, double h) const;

 private:
  CollapseChannels channels_;
  double lambda_;
  Eigen::VectorXd q_;  // sum_c weight_c v_cb^2
};

/// exp(-i H dt) for a fixed Hermitian H.
class Propagator {
 public:
  Propagator(const SparseH& H, double dt);
  bool identity() const { return identity_; }
  void apply(CVector& psi) const;
  const CMatrix& matrix() const { return U_; }

 private:
  bool identity_ = true;
  CMatrix U_;
};

/// One Strang step: collapse(dt/2, w_first), exp(-iH dt), collapse(dt/2, w_second).
/// Returns the log-weight increment.
double step_trajectory(CVector& psi, std::span<const double> w_first, std::span<const double> w_second,
                       const Propagator& U, const CollapseKernel& kernel, double dt);

struct TrajectoryConfig {
  CollapseChannels channels;
  SparseH H;
  double lambda = 1.0;
  double dt = 0.01;
  int n_steps = 100;
  int record_every = 1;
  NoiseMeasure measure = NoiseMeasure::physical;
  PhysicalScheme scheme = PhysicalScheme::exact_mixture;
  CVector psi0;
  bool store_states = false;
  double collapse_threshold = 0.99;

  void validate() const;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::vector<double> times;
  /// Basis probabilities of the normalised state at each record time.
  std::vector<std::vector<double>> weights;
  /// Accumulated log P_w at each record time (zero history weight at t = 0).
  std::vector<double> log_weight;
  std::vector<CVector> states;
  /// Branch label from detect_collapse, -1 when undecided.
  int outcome = -1;
};

/// Evolves one trajectory with noise drawn on the fly from `seed`.
TrajectoryRecord run_trajectory(const TrajectoryConfig& config, const CollapseKernel& kernel, const Propagator& U,
                                std::uint64_t seed);

/// Evolves psi0 through a pre-sampled realization, one full step per time index
/// (the same slice is used for both Strang halves). Channels must be lattice cells.
TrajectoryRecord evolve_realization(const TrajectoryConfig& config, const NoiseRealization& noise);

/// Sticky-threshold classifier: branch r once its weight exceeds `threshold` and never
/// drops below 1 - threshold afterwards; -1 ("undecided") otherwise.
int detect_collapse(const TrajectoryRecord& record, double threshold);

struct EnsembleSummary {
  std::size_t n_traj = 0;
  std::uint64_t master_seed = 0;
  NoiseMeasure measure = NoiseMeasure::physical;
  double threshold = 0.99;
  std::vector<double> times;
  /// Measure-weighted mean basis probabilities and their 1-sigma errors, per record time.
  std::vector<std::vector<double>> mean_weights;
  std::vector<std::vector<double>> stderr_weights;
  /// Outcome histogram; the last slot counts undecided trajectories.
  std::vector<std::size_t> outcome_counts;
  std::vector<double> outcome_frequency;
  std::vector<double> outcome_stderr;
  /// Ensemble density matrix and entrywise errors (only with store_states).
  std::vector<CMatrix> mean_rho;
  std::vector<Eigen::MatrixXd> stderr_rho_re;
  std::vector<Eigen::MatrixXd> stderr_rho_im;
  /// Mean and error of P_w at the final time (identically 1 under the physical measure).
  double mean_pw = 1.0;
  double stderr_pw = 0.0;
};

/// Runs n_traj independent trajectories; trajectory k uses stream_seed(master_seed, k).
/// The reduction runs in trajectory order, so the summary is independent of `threads`.
EnsembleSummary run_ensemble(const TrajectoryConfig& config, std::size_t n_traj, std::uint64_t master_seed,
                             int threads = 1);

}  // namespace csl
