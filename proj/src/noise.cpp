#include "csl/noise.hpp"

#include <cmath>

#include "csl/errors.hpp"

namespace csl {

std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  return mix(mix(master) ^ (index * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull));
}

double vacuum_cell_variance(double lambda, double cell_volume, double dt) {
  return lambda / (cell_volume * dt);
}

void NoiseStream::fill(std::span<double> out, std::span<const double> mean, double variance) {
  if (!mean.empty() && mean.size() != out.size()) throw ConfigError("noise drift size does not match lattice");
  double sd = std::sqrt(variance);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double g = variance > 0.0 ? sd * gaussian() : 0.0;
    out[i] = (mean.empty() ? 0.0 : mean[i]) + g;
  }
}

namespace {

NoiseRealization sample(const LatticeSpec& spec, const CollapseParams& params,
                        std::span<const double> drift, std::uint64_t seed, NoiseMeasure measure) {
  spec.validate();
  params.validate();
  NoiseRealization r;
  r.n_cells = spec.n_cells();
  r.n_steps = static_cast<std::size_t>(spec.n_steps);
  r.seed = seed;
  r.measure = measure;
  r.w.assign(r.n_cells * r.n_steps, 0.0);
  if (!drift.empty() && drift.size() != r.w.size())
    throw ConfigError("drift has " + std::to_string(drift.size()) + " entries, lattice needs " +
                      std::to_string(r.w.size()));
  if (params.lambda == 0.0) {
    r.zero_variance = true;
    return r;
  }
  double var = vacuum_cell_variance(params.lambda, spec.cell_volume(), spec.dt);
  NoiseStream rng(seed);
  for (std::size_t s = 0; s < r.n_steps; ++s) {
    std::span<double> out(r.w.data() + s * r.n_cells, r.n_cells);
    std::span<const double> mean;
    if (!drift.empty()) mean = drift.subspan(s * r.n_cells, r.n_cells);
    rng.fill(out, {}, var);
    if (!mean.empty())
      for (std::size_t c = 0; c < r.n_cells; ++c) out[c] += 2.0 * params.lambda * mean[c];
  }
  return r;
}

}  // namespace

NoiseRealization sample_noise_vacuum(const LatticeSpec& spec, const CollapseParams& params,
                                     std::uint64_t seed) {
  return sample(spec, params, {}, seed, NoiseMeasure::vacuum);
}

NoiseRealization sample_noise_physical(const LatticeSpec& spec, const CollapseParams& params,
                                       std::span<const double> drift, std::uint64_t seed) {
  return sample(spec, params, drift, seed, NoiseMeasure::physical);
}

}  // namespace csl
