#include "csl/lattice.hpp"

#include <cmath>
#include <string>

#include "csl/errors.hpp"

namespace csl {

double LatticeSpec::cell_volume() const {
  double v = 1.0;
  for (int k = 0; k < dim; ++k) v *= dx;
  return v;
}

std::size_t LatticeSpec::n_cells() const {
  std::size_t c = 1;
  for (int k = 0; k < dim; ++k) c *= static_cast<std::size_t>(n);
  return c;
}

void LatticeSpec::validate() const {
  if (dim != 1 && dim != 3) throw ConfigError("lattice.dim must be 1 or 3, got " + std::to_string(dim));
  if (n < 1) throw ConfigError("lattice.n must be >= 1");
  if (!(dx > 0.0) || !std::isfinite(dx)) throw ConfigError("lattice.dx must be finite and > 0");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("lattice.dt must be finite and > 0");
  if (n_steps < 1) throw ConfigError("lattice.n_steps must be >= 1");
}

std::array<int, 3> LatticeSpec::coords(std::size_t cell) const {
  std::array<int, 3> c{0, 0, 0};
  for (int k = 0; k < dim; ++k) {
    c[k] = static_cast<int>(cell % static_cast<std::size_t>(n));
    cell /= static_cast<std::size_t>(n);
  }
  return c;
}

std::size_t LatticeSpec::cell(const std::array<int, 3>& c) const {
  std::size_t idx = 0;
  for (int k = dim - 1; k >= 0; --k) idx = idx * static_cast<std::size_t>(n) + static_cast<std::size_t>(c[k]);
  return idx;
}

std::array<double, 3> LatticeSpec::position(std::size_t cell) const {
  auto c = coords(cell);
  std::array<double, 3> x{0.0, 0.0, 0.0};
  for (int k = 0; k < dim; ++k) x[k] = (c[k] - n / 2) * dx;
  return x;
}

std::size_t LatticeSpec::cell_at(const std::array<double, 3>& x) const {
  std::array<int, 3> c{0, 0, 0};
  for (int k = 0; k < dim; ++k) {
    long i = std::lround(x[k] / dx) + n / 2;
    if (i < 0 || i >= n) throw ConfigError("position outside the lattice");
    c[k] = static_cast<int>(i);
  }
  return cell(c);
}

std::size_t LatticeSpec::neighbour(std::size_t idx, int axis, int step) const {
  auto c = coords(idx);
  int j = c[axis] + step;
  if (periodic) {
    j %= n;
    if (j < 0) j += n;
  } else if (j < 0 || j >= n) {
    return n_cells();
  }
  c[axis] = j;
  return cell(c);
}

std::array<double, 3> LatticeSpec::separation(std::size_t a, std::size_t b) const {
  auto ca = coords(a), cb = coords(b);
  std::array<double, 3> d{0.0, 0.0, 0.0};
  for (int k = 0; k < dim; ++k) {
    int di = ca[k] - cb[k];
    if (periodic) {
      // minimum image
      if (di > n / 2) di -= n;
      else if (di < -n / 2) di += n;
    }
    d[k] = di * dx;
  }
  return d;
}

double LatticeSpec::distance_squared(std::size_t a, std::size_t b) const {
  auto d = separation(a, b);
  return d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
}

void CollapseParams::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("collapse.lambda must be finite and >= 0");
  if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("collapse.a must be finite and > 0");
  if (!(m0 > 0.0) || !std::isfinite(m0)) throw ConfigError("collapse.m0 must be finite and > 0");
  for (double m : masses)
    if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("species masses must be finite and >= 0");
}

}  // namespace csl
