#pragma once

// Discretized unit box / unit torus in dimension 1 and 2, with cell-centered
// quadrature. Measures are stored as mass-per-cell; densities are recovered by
// dividing by the cell volume.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gflow {

using Point = std::array<double, 2>;

struct Domain {
  int dim = 1;           // 1 or 2
  bool periodic = false; // torus vs box
  double side = 1.0;

  void validate() const {
    if (dim != 1 && dim != 2)
      throw std::invalid_argument("Domain: dim must be 1 or 2");
    if (!(side > 0.0))
      throw std::invalid_argument("Domain: side must be positive");
  }
};

// Nearest-image distance along one axis (Euclidean when non-periodic).
inline double axis_distance(double a, double b, const Domain& dom) {
  double d = std::fabs(a - b);
  if (dom.periodic) {
    d = std::fmod(d, dom.side);
    if (d > 0.5 * dom.side) d = dom.side - d;
  }
  return d;
}

inline double distance(const Point& x, const Point& y, const Domain& dom) {
  double s = 0.0;
  for (int ax = 0; ax < dom.dim; ++ax) {
    const double d = axis_distance(x[ax], y[ax], dom);
    s += d * d;
  }
  return std::sqrt(s);
}

struct Grid {
  Domain domain;
  int m = 1; // points per axis

  Grid() = default;
  Grid(Domain dom, int points_per_axis) : domain(dom), m(points_per_axis) {
    domain.validate();
    if (m < 1) throw std::invalid_argument("Grid: need at least one point per axis");
  }

  int cells() const { return domain.dim == 1 ? m : m * m; }
  double spacing() const { return domain.side / m; }
  double cell_volume() const { return domain.dim == 1 ? spacing() : spacing() * spacing(); }

  double center(int i) const { return (i + 0.5) * spacing(); }

  // Cell index <-> per-axis indices (x fastest).
  int index(int ix, int iy = 0) const { return domain.dim == 1 ? ix : ix + m * iy; }
  int axis_index(int cell, int ax) const { return ax == 0 ? cell % m : cell / m; }

  Point point(int cell) const {
    Point p{0.0, 0.0};
    p[0] = center(axis_index(cell, 0));
    if (domain.dim == 2) p[1] = center(axis_index(cell, 1));
    return p;
  }

  // Cell containing a point, nearest-image wrapped when periodic, clamped on
  // the box.
  int bin_axis(double x) const {
    double u = x / spacing();
    if (domain.periodic) {
      u = std::fmod(u, double(m));
      if (u < 0) u += m;
    }
    int i = int(std::floor(u));
    if (i < 0) i = 0;
    if (i >= m) i = m - 1;
    return i;
  }
  int bin(const Point& p) const {
    int ix = bin_axis(p[0]);
    return domain.dim == 1 ? ix : index(ix, bin_axis(p[1]));
  }

  // Cell index of the reflected center side - x (the grid is closed under it).
  int reflect_axis(int i) const { return m - 1 - i; }
  int reflect(int cell) const {
    int ix = reflect_axis(axis_index(cell, 0));
    if (domain.dim == 1) return ix;
    return index(ix, reflect_axis(axis_index(cell, 1)));
  }
};

struct Field {
  std::vector<double> v;

  Field() = default;
  explicit Field(int n, double value = 0.0) : v(std::size_t(n), value) {}

  int size() const { return int(v.size()); }
  double& operator[](int i) { return v[std::size_t(i)]; }
  double operator[](int i) const { return v[std::size_t(i)]; }

  double sum() const {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
};

// Mass on ordered pairs of cells, row-major with the source cell as row.
struct PairField {
  int n = 0;
  std::vector<double> v;

  PairField() = default;
  explicit PairField(int cells, double value = 0.0)
      : n(cells), v(std::size_t(cells) * cells, value) {}

  double& at(int src, int tgt) { return v[std::size_t(src) * n + tgt]; }
  double at(int src, int tgt) const { return v[std::size_t(src) * n + tgt]; }
  double* row(int src) { return v.data() + std::size_t(src) * n; }
  const double* row(int src) const { return v.data() + std::size_t(src) * n; }

  double sum() const {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
};

inline Field uniform_field(const Grid& grid) {
  return Field(grid.cells(), 1.0 / grid.cells());
}

inline double l1_distance(const Field& a, const Field& b) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s;
}

} // namespace gflow
