#pragma once

// Per-step transition kernels: the Gaussian cost kernel, the periodized heat
// kernel on the torus, and the quadratic endpoint penalty. Kernels are stored
// per axis and applied separably; entries below 1e-300 are flushed to zero and
// each row keeps a band of entries above 1e-32 times its maximum. The wide band
// threshold matters: the scaled-front contractions in sinkhorn.hpp can carry the
// resulting dynamic range, and truncating harder can artificially disconnect
// endpoint pairs that the exact Gaussian chain connects.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gflow/grid.hpp"

namespace gflow {

enum class KernelMode { gaussian, heat };

constexpr double kKernelFlush = 1e-300;
constexpr double kBandDrop = 1e-32;

// Periodization of the 1D heat kernel p_t over integer shifts of the period.
// The truncation keeps images until the next term is below 1e-16 of the sum.
inline double periodized_heat_1d(double z, double t, double period) {
  const double norm = 1.0 / std::sqrt(2.0 * M_PI * t);
  double s = 0.0;
  for (int k = 0;; ++k) {
    double term = norm * std::exp(-(z + k * period) * (z + k * period) / (2.0 * t));
    if (k > 0) term += norm * std::exp(-(z - k * period) * (z - k * period) / (2.0 * t));
    s += term;
    if (k >= 1 && term < 1e-16 * s) break;
    if (k > 64) break; // only reachable for huge t, where the sum is flat anyway
  }
  return s;
}

// log of periodized_heat_1d, stable when the sum underflows. Expects |z| no
// larger than half the period so the k = 0 image dominates.
inline double log_periodized_heat_1d(double z, double t, double period) {
  const double e0 = z * z / (2.0 * t);
  double s = 1.0; // k = 0 term relative to itself
  for (int k = 1;; ++k) {
    const double ep = (z + k * period) * (z + k * period) / (2.0 * t);
    const double em = (z - k * period) * (z - k * period) / (2.0 * t);
    const double term = std::exp(e0 - ep) + std::exp(e0 - em);
    s += term;
    if (term < 1e-16 * s || k > 64) break;
  }
  return -e0 + std::log(s) - 0.5 * std::log(2.0 * M_PI * t);
}

struct AxisKernel {
  int m = 0;
  KernelMode mode = KernelMode::gaussian;
  double sigma2 = 0.0;   // variance parameter, length^2
  double log_norm = 0.0; // log of the constant divided out of the raw entries
  std::vector<double> k; // m x m, symmetric
  std::vector<int> lo, hi; // per-row band [lo, hi) of retained entries

  double at(int i, int j) const { return k[std::size_t(i) * m + j]; }

  // Entry as the contraction sees it: zero outside the retained band.
  double banded_at(int i, int j) const {
    return (j >= lo[std::size_t(i)] && j < hi[std::size_t(i)]) ? at(i, j) : 0.0;
  }

  void build_band() {
    lo.assign(m, 0);
    hi.assign(m, m);
    for (int i = 0; i < m; ++i) {
      double rowmax = 0.0;
      for (int j = 0; j < m; ++j) rowmax = std::max(rowmax, k[std::size_t(i) * m + j]);
      const double cut = kBandDrop * rowmax;
      int a = 0, b = m;
      while (a < m && k[std::size_t(i) * m + a] < cut) ++a;
      while (b > a && k[std::size_t(i) * m + b - 1] < cut) --b;
      lo[i] = a;
      hi[i] = b;
    }
  }

  // Row sum against the quadrature weight w (mass carried by a constant-1 field).
  double weighted_row_sum(int i, double w) const {
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += at(i, j);
    return s * w;
  }
};

struct ProductKernel {
  Grid grid;
  KernelMode mode = KernelMode::gaussian;
  std::vector<AxisKernel> axes; // one per dimension, identical for isotropic problems

  double log_norm_total() const {
    double s = 0.0;
    for (const auto& a : axes) s += a.log_norm;
    return s;
  }
};

// K(x) = exp(-N dist^2(x,0) / (2 eps T)), per axis. Periodized distance on the
// torus, boundary-truncated dense matrix on the box.
inline ProductKernel gaussian_kernel(const Grid& grid, double eps, double T, int N) {
  if (!(eps > 0.0)) throw std::invalid_argument("gaussian_kernel: eps must be positive");
  if (!(T > 0.0)) throw std::invalid_argument("gaussian_kernel: T must be positive");
  if (N < 1) throw std::invalid_argument("gaussian_kernel: N must be >= 1");

  ProductKernel pk;
  pk.grid = grid;
  pk.mode = KernelMode::gaussian;

  AxisKernel ax;
  ax.m = grid.m;
  ax.mode = KernelMode::gaussian;
  ax.sigma2 = eps * T / N;
  ax.k.assign(std::size_t(grid.m) * grid.m, 0.0);
  const double inv = double(N) / (2.0 * eps * T);
  for (int i = 0; i < grid.m; ++i)
    for (int j = 0; j <= i; ++j) {
      const double d = axis_distance(grid.center(i), grid.center(j), grid.domain);
      double val = std::exp(-d * d * inv);
      if (val < kKernelFlush) val = 0.0;
      ax.k[std::size_t(i) * grid.m + j] = val;
      ax.k[std::size_t(j) * grid.m + i] = val;
    }
  ax.build_band();
  pk.axes.assign(std::size_t(grid.domain.dim), ax);
  return pk;
}

// Heat kernel g_t on the torus, sampled on cell centers. The circulant rows
// all share one sum, so a single rescaling makes the matrix exactly
// row-stochastic against the quadrature weight.
inline ProductKernel heat_kernel(const Grid& grid, double t) {
  if (!grid.domain.periodic)
    throw std::invalid_argument("heat_kernel: defined on the torus only");
  if (!(t > 0.0)) throw std::invalid_argument("heat_kernel: t must be positive");

  ProductKernel pk;
  pk.grid = grid;
  pk.mode = KernelMode::heat;

  AxisKernel ax;
  ax.m = grid.m;
  ax.mode = KernelMode::heat;
  ax.sigma2 = t;
  ax.k.assign(std::size_t(grid.m) * grid.m, 0.0);
  const double h = grid.spacing();

  std::vector<double> g(std::size_t(grid.m));
  for (int j = 0; j < grid.m; ++j)
    g[j] = periodized_heat_1d(j * h, t, grid.domain.side);
  double row = 0.0;
  for (double x : g) row += x;
  const double norm = row * h; // equals 1 up to quadrature error; divided out
  ax.log_norm = std::log(norm);
  for (int i = 0; i < grid.m; ++i)
    for (int j = 0; j < grid.m; ++j) {
      int off = i - j;
      if (off < 0) off += grid.m;
      if (off > grid.m - off) off = grid.m - off;
      double val = g[std::size_t(off)] / norm;
      if (val < kKernelFlush) val = 0.0;
      ax.k[std::size_t(i) * grid.m + j] = val;
    }
  ax.build_band();
  pk.axes.assign(std::size_t(grid.domain.dim), ax);
  return pk;
}

namespace detail {

// out[i] = weight * sum_j k(i,j) in[j] with a fixed ascending j order.
inline void axis_contract(const AxisKernel& ax, const double* in, double* out,
                          double weight) {
  for (int i = 0; i < ax.m; ++i) {
    const double* row = ax.k.data() + std::size_t(i) * ax.m;
    double s = 0.0;
    for (int j = ax.lo[i]; j < ax.hi[i]; ++j) s += row[j] * in[j];
    out[i] = weight * s;
  }
}

// Scaled-field variants: a field entry is iv[x] * 2^{ie[x]} (iv[x] == 0 marks
// an absent entry), and sums are accumulated with a running power-of-two
// exponent so a single field can span far more than the double range. Kernel
// entries themselves span at most ~300 digits, so the per-term product of a
// kernel entry and a near-1 mantissa never underflows.
constexpr int kNoScaledExp = std::numeric_limits<int>::min();

inline void scaled_axis_contract(const AxisKernel& ax, const double* iv, const int* ie,
                                 double* ov, int* oe) {
  for (int i = 0; i < ax.m; ++i) {
    const double* row = ax.k.data() + std::size_t(i) * ax.m;
    double acc = 0.0;
    int ea = kNoScaledExp;
    for (int j = ax.lo[i]; j < ax.hi[i]; ++j) {
      const double t = row[j] * iv[j];
      if (t == 0.0) continue;
      const int E = ie[j];
      if (ea == kNoScaledExp) {
        acc = t;
        ea = E;
      } else if (E >= ea) {
        acc = std::ldexp(acc, ea - E) + t;
        ea = E;
      } else {
        acc += std::ldexp(t, E - ea);
      }
    }
    if (ea == kNoScaledExp || acc == 0.0) {
      ov[i] = 0.0;
      oe[i] = 0;
    } else {
      int en = 0;
      ov[i] = std::frexp(acc, &en);
      oe[i] = ea + en;
    }
  }
}

// Separable scaled contraction; the scratch arrays must hold grid.cells()
// entries. Output mantissas are frexp-normalized (or exactly zero).
inline void scaled_kernel_contract(const ProductKernel& pk, const double* iv, const int* ie,
                                   double* ov, int* oe, double* sv, int* se) {
  const int m = pk.grid.m;
  if (pk.grid.domain.dim == 1) {
    scaled_axis_contract(pk.axes[0], iv, ie, ov, oe);
    return;
  }
  // axis 0: contract x for each fixed y
  for (int y = 0; y < m; ++y)
    scaled_axis_contract(pk.axes[0], iv + std::size_t(y) * m, ie + std::size_t(y) * m,
                         sv + std::size_t(y) * m, se + std::size_t(y) * m);
  // axis 1: contract y for each fixed x, one running exponent per column
  const AxisKernel& ky = pk.axes[1];
  for (int y = 0; y < m; ++y) {
    double* orow = ov + std::size_t(y) * m;
    int* oerow = oe + std::size_t(y) * m;
    std::fill(orow, orow + m, 0.0);
    std::fill(oerow, oerow + m, kNoScaledExp);
    for (int yp = ky.lo[y]; yp < ky.hi[y]; ++yp) {
      const double kv = ky.at(y, yp);
      const double* srow = sv + std::size_t(yp) * m;
      const int* serow = se + std::size_t(yp) * m;
      for (int x = 0; x < m; ++x) {
        const double t = kv * srow[x];
        if (t == 0.0) continue;
        const int E = serow[x];
        if (oerow[x] == kNoScaledExp) {
          orow[x] = t;
          oerow[x] = E;
        } else if (E >= oerow[x]) {
          orow[x] = std::ldexp(orow[x], oerow[x] - E) + t;
          oerow[x] = E;
        } else {
          orow[x] += std::ldexp(t, E - oerow[x]);
        }
      }
    }
    for (int x = 0; x < m; ++x) {
      if (oerow[x] == kNoScaledExp || orow[x] == 0.0) {
        orow[x] = 0.0;
        oerow[x] = 0;
      } else {
        int en = 0;
        orow[x] = std::frexp(orow[x], &en);
        oerow[x] += en;
      }
    }
  }
}

// Separable contraction of a full-dimensional field; `scratch` must hold
// grid.cells() doubles. weight = quadrature weight per axis (1 for the raw
// matrix product used inside the solver).
inline void kernel_contract(const ProductKernel& pk, const double* in, double* out,
                            double* scratch, double axis_weight) {
  const int m = pk.grid.m;
  if (pk.grid.domain.dim == 1) {
    axis_contract(pk.axes[0], in, out, axis_weight);
    return;
  }
  // axis 0: contract x for each fixed y
  for (int y = 0; y < m; ++y)
    axis_contract(pk.axes[0], in + std::size_t(y) * m, scratch + std::size_t(y) * m,
                  axis_weight);
  // axis 1: contract y for each fixed x
  const AxisKernel& ky = pk.axes[1];
  for (int y = 0; y < m; ++y) {
    double* orow = out + std::size_t(y) * m;
    for (int x = 0; x < m; ++x) orow[x] = 0.0;
    // out(x,y) = w * sum_y' ky(y,y') scratch(x,y'); accumulate in ascending y'
    for (int yp = ky.lo[y]; yp < ky.hi[y]; ++yp) {
      const double kv = ky.at(y, yp);
      const double* srow = scratch + std::size_t(yp) * m;
      for (int x = 0; x < m; ++x) orow[x] += kv * srow[x];
    }
    for (int x = 0; x < m; ++x) orow[x] *= axis_weight;
  }
}

} // namespace detail

// Convolution of a field with the kernel, including the cell quadrature
// weight per axis (a delta of mass 1 maps to the kernel column times the
// cell weight).
inline Field apply_kernel(const ProductKernel& pk, const Field& f) {
  if (f.size() != pk.grid.cells())
    throw std::invalid_argument("apply_kernel: field does not match the kernel grid");
  Field out(f.size());
  std::vector<double> scratch(static_cast<std::size_t>(f.size()));
  detail::kernel_contract(pk, f.v.data(), out.v.data(), scratch.data(),
                          pk.grid.spacing());
  return out;
}

// Endpoint penalty weights w(x0, xN) = exp(-beta dist^2(xN, X_T(x0)) / (2 eps)).
inline PairField penalized_endpoint_kernel(const Grid& grid,
                                           const std::vector<Point>& map_XT,
                                           double beta, double eps) {
  if (!(beta > 0.0)) throw std::invalid_argument("penalized_endpoint_kernel: beta must be positive");
  if (!(eps > 0.0)) throw std::invalid_argument("penalized_endpoint_kernel: eps must be positive");
  if (int(map_XT.size()) != grid.cells())
    throw std::invalid_argument("penalized_endpoint_kernel: map size mismatch");

  const int M = grid.cells();
  PairField w(M);
  for (int s = 0; s < M; ++s)
    for (int t = 0; t < M; ++t) {
      const double d = distance(grid.point(t), map_XT[std::size_t(s)], grid.domain);
      double val = std::exp(-beta * d * d / (2.0 * eps));
      if (val < kKernelFlush) val = 0.0;
      w.at(s, t) = val;
    }
  return w;
}

// Empirical two-sided Gaussian envelope constants for the torus heat kernel:
// min and max over grid points and times of g_t(x) / [(2 pi t)^{-d/2}
// exp(-dist^2(x,0)/2t)].
inline std::pair<double, double> kernel_sandwich_check(const Grid& grid,
                                                       const std::vector<double>& t_values) {
  if (!grid.domain.periodic)
    throw std::invalid_argument("kernel_sandwich_check: periodic grid required");
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (double t : t_values) {
    if (!(t > 0.0)) throw std::invalid_argument("kernel_sandwich_check: t must be positive");
    for (int c = 0; c < grid.cells(); ++c) {
      const Point p = grid.point(c);
      double g = 1.0, env = 1.0;
      for (int ax = 0; ax < grid.domain.dim; ++ax) {
        const double d = axis_distance(p[ax], 0.0, grid.domain);
        g *= periodized_heat_1d(d, t, grid.domain.side);
        env *= std::exp(-d * d / (2.0 * t)) / std::sqrt(2.0 * M_PI * t);
      }
      const double ratio = g / env;
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
  }
  return {lo, hi};
}

} // namespace gflow
