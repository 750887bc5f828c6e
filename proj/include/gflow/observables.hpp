#pragma once

// Diagnostics on a solved plan: two-point marginals P_{t_k}, color-tracking
// fields on the 2D domain, and the comparison between the quadratic step cost
// and the heat-kernel step cost.

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "gflow/grid.hpp"
#include "gflow/kernels.hpp"
#include "gflow/sinkhorn.hpp"

namespace gflow {

struct TwoPointMarginal {
  int k = 0;
  PairField P; // row = initial cell x_0, column = slice-k cell
};

// Joint mass of the initial position and the position at slice k, from one
// forward and one backward message pass.
inline TwoPointMarginal two_point_marginal(const Problem& pr, const Potentials& pot, int k) {
  if (k < 0 || k > pr.N)
    throw std::invalid_argument("two_point_marginal: slice index out of range");
  const int M = pr.grid.cells();
  detail::Fronts F, G, buf;
  detail::delta_rows(M, F);
  for (int j = 1; j <= k; ++j) {
    const double* scale = (j >= 2) ? pot.a[std::size_t(j - 2)].v.data() : nullptr;
    const int* scale_e = (j >= 2) ? pot.a_exp_ptr(std::size_t(j - 2)) : nullptr;
    detail::step_rows(pr, F, buf, scale, scale_e);
    std::swap(F, buf);
  }
  detail::endpoint_rows(pr, pot, G);
  for (int j = pr.N - 1; j >= k; --j) {
    const double* scale = (j + 1 <= pr.N - 1) ? pot.a[std::size_t(j)].v.data() : nullptr;
    const int* scale_e = (j + 1 <= pr.N - 1) ? pot.a_exp_ptr(std::size_t(j)) : nullptr;
    detail::step_rows(pr, G, buf, scale, scale_e);
    std::swap(G, buf);
  }
  TwoPointMarginal tp;
  tp.k = k;
  tp.P = PairField(M);
  const double* ak = (k >= 1 && k <= pr.N - 1) ? pot.a[std::size_t(k - 1)].v.data() : nullptr;
  const int* ake = (k >= 1 && k <= pr.N - 1) ? pot.a_exp_ptr(std::size_t(k - 1)) : nullptr;
  for (int r = 0; r < M; ++r)
    for (int x = 0; x < M; ++x) {
      const double fv = F.v[std::size_t(r) * M + x];
      const double gv = G.v[std::size_t(r) * M + x];
      if (fv == 0.0 || gv == 0.0) {
        tp.P.at(r, x) = 0.0;
        continue;
      }
      // Merge exponents before multiplying: the raw mantissa product can
      // underflow even when the represented mass is moderate.
      int ef = 0, eg = 0;
      double v = std::frexp(fv, &ef) * std::frexp(gv, &eg);
      int e = F.e[std::size_t(r) * M + x] + G.e[std::size_t(r) * M + x] + ef + eg;
      if (ak) {
        int em = 0, ea = 0;
        v = std::frexp(v, &em) * std::frexp(ak[x], &ea);
        e += em + ea + (ake ? ake[x] : 0);
      }
      tp.P.at(r, x) = std::ldexp(v, e);
    }
  return tp;
}

enum class Color { red, green, blue };

// Colored initial thirds of the unit square: RED = [0,1/3] x [0,1],
// GREEN = (1/3,2/3] x [0,1], BLUE = (2/3,1] x [0,1] (closed on the right).
inline Color color_of_cell(const Grid& grid, int cell) {
  const double x = grid.point(cell)[0] / grid.domain.side;
  if (x <= 1.0 / 3.0) return Color::red;
  if (x <= 2.0 / 3.0) return Color::green;
  return Color::blue;
}

struct ColorFields {
  int k = 0;
  Field red, green, blue;

  Field sum() const {
    Field s(red.size());
    for (int i = 0; i < s.size(); ++i) s[i] = red[i] + green[i] + blue[i];
    return s;
  }
};

// P_C(x_k) = sum over initial cells in region C of P_{t_k}(x_0, x_k).
inline ColorFields color_fields_from(const Grid& grid, const TwoPointMarginal& tp) {
  if (grid.domain.dim != 2)
    throw std::invalid_argument("color_fields: 2D domain required");
  const int M = grid.cells();
  ColorFields cf;
  cf.k = tp.k;
  cf.red = Field(M, 0.0);
  cf.green = Field(M, 0.0);
  cf.blue = Field(M, 0.0);
  for (int r = 0; r < M; ++r) {
    Field& acc = color_of_cell(grid, r) == Color::red
                     ? cf.red
                     : (color_of_cell(grid, r) == Color::green ? cf.green : cf.blue);
    const double* row = tp.P.row(r);
    for (int x = 0; x < M; ++x) acc[x] += row[x];
  }
  return cf;
}

inline ColorFields color_fields(const Problem& pr, const Potentials& pot, int k) {
  return color_fields_from(pr.grid, two_point_marginal(pr, pot, k));
}

// Quadratic path cost c_N = (N/2T) sum dist^2(x_{k+1}, x_k).
inline double cost_cN(const std::vector<Point>& path, double T, int N, const Domain& dom) {
  if (int(path.size()) != N + 1) throw std::invalid_argument("cost_cN: path needs N+1 points");
  double s = 0.0;
  for (int k = 0; k < N; ++k) {
    const double d = distance(path[std::size_t(k + 1)], path[std::size_t(k)], dom);
    s += d * d;
  }
  return s * double(N) / (2.0 * T);
}

// Heat-kernel path cost c_{N,eps} = -eps sum log g_{eps T/N}(x_{k+1}-x_k).
inline double cost_cNeps(const std::vector<Point>& path, double T, int N, double eps,
                         const Domain& dom) {
  if (!dom.periodic) throw std::invalid_argument("cost_cNeps: periodic domain required");
  if (!(eps > 0.0)) throw std::invalid_argument("cost_cNeps: eps must be positive");
  if (int(path.size()) != N + 1) throw std::invalid_argument("cost_cNeps: path needs N+1 points");
  const double t = eps * T / N;
  double s = 0.0;
  for (int k = 0; k < N; ++k) {
    double lg = 0.0;
    for (int ax = 0; ax < dom.dim; ++ax) {
      const double d = axis_distance(path[std::size_t(k + 1)][ax], path[std::size_t(k)][ax], dom);
      lg += log_periodized_heat_1d(d, t, dom.side);
    }
    s += lg;
  }
  return -eps * s;
}

struct CostGapRow {
  double eps = 0.0;
  double max_gap = 0.0;   // max |c_N - c_{N,eps}| over the sample
  double max_ratio = 0.0; // gap / (eps N |log(eps T / N)|)
};

// Boundedness evidence for |c_N - c_{N,eps}| <= M eps N |log(eps T/N)|:
// the reported ratios should stay within a small factor across a decade of
// eps. Tuples are grid points drawn with a fixed seed.
inline std::vector<CostGapRow> cost_gap_check(const Grid& grid, double T, int N,
                                              const std::vector<double>& eps_list,
                                              int tuples = 100, unsigned seed = 20240901) {
  if (!grid.domain.periodic) throw std::invalid_argument("cost_gap_check: periodic grid required");
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> pick(0, grid.cells() - 1);
  std::vector<std::vector<Point>> paths(static_cast<std::size_t>(tuples));
  for (auto& path : paths) {
    path.resize(std::size_t(N) + 1);
    for (auto& p : path) p = grid.point(pick(rng));
  }
  std::vector<CostGapRow> table;
  for (double eps : eps_list) {
    CostGapRow row;
    row.eps = eps;
    const double envelope = eps * N * std::fabs(std::log(eps * T / N));
    for (const auto& path : paths) {
      const double gap = std::fabs(cost_cN(path, T, N, grid.domain) -
                                   cost_cNeps(path, T, N, eps, grid.domain));
      row.max_gap = std::max(row.max_gap, gap);
    }
    row.max_ratio = row.max_gap / envelope;
    table.push_back(row);
  }
  return table;
}

} // namespace gflow
