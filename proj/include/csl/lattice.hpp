#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace csl {

/// Space-time discretization. Cells are cubes of edge `dx` centred on
/// (i - n/2) * dx along each axis, so cell n/2 sits at the origin.
struct LatticeSpec {
  int dim = 1;
  int n = 1;
  double dx = 1.0;
  double dt = 1.0;
  int n_steps = 1;
  bool periodic = true;

  /// dx^dim.
  double cell_volume() const;
  std::size_t n_cells() const;
  double box_length() const { return n * dx; }

  /// Throws ConfigError when the invariants are broken.
  void validate() const;

  std::array<int, 3> coords(std::size_t cell) const;
  std::size_t cell(const std::array<int, 3>& coords) const;
  std::array<double, 3> position(std::size_t cell) const;
  /// Cell containing `x` (nearest centre). Throws ConfigError when off-lattice.
  std::size_t cell_at(const std::array<double, 3>& x) const;
  /// Cell displaced by `step` cells along `axis`; wraps when periodic,
  /// returns n_cells() when the neighbour falls outside an open box.
  std::size_t neighbour(std::size_t cell, int axis, int step) const;

  /// Squared separation, minimum image when periodic.
  double distance_squared(std::size_t a, std::size_t b) const;
  std::array<double, 3> separation(std::size_t a, std::size_t b) const;
};

/// Collapse-model constants: rate lambda, smearing length a, reference mass m0.
struct CollapseParams {
  double lambda = 1.0;
  double a = 1.0;
  double m0 = 1.0;
  std::vector<double> masses;

  void validate() const;
};

}  // namespace csl
