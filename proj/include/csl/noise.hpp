#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "csl/lattice.hpp"

namespace csl {

enum class NoiseMeasure { vacuum, physical };

/// One sampled white-noise history w(cell, step), stored step-major.
struct NoiseRealization {
  std::size_t n_cells = 0;
  std::size_t n_steps = 0;
  std::vector<double> w;
  std::uint64_t seed = 0;
  NoiseMeasure measure = NoiseMeasure::vacuum;
  /// Set when lambda == 0: every cell is exactly zero.
  bool zero_variance = false;

  double at(std::size_t step, std::size_t cell) const { return w[step * n_cells + cell]; }
  std::span<const double> slice(std::size_t step) const {
    return {w.data() + step * n_cells, n_cells};
  }
};

/// SplitMix64 finaliser applied to (master, index). Stream seeds for
/// different indices are decorrelated and independent of scheduling order.
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index);

/// Variance of a single cell value under the vacuum measure: lambda / (dV dt).
double vacuum_cell_variance(double lambda, double cell_volume, double dt);

/// Per-trajectory random source.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) : engine_(seed) {}

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  /// w[c] = mean[c] + N(0, variance) for every cell; mean may be empty (zero).
  void fill(std::span<double> out, std::span<const double> mean, double variance);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

NoiseRealization sample_noise_vacuum(const LatticeSpec& spec, const CollapseParams& params,
                                     std::uint64_t seed);

/// Physical-measure sampling with a caller-supplied drift <A>(cell, step),
/// laid out step-major like NoiseRealization::w:
///   w = 2 lambda <A> + N(0, lambda / (dV dt)).
NoiseRealization sample_noise_physical(const LatticeSpec& spec, const CollapseParams& params,
                                       std::span<const double> drift, std::uint64_t seed);

}  // namespace csl
