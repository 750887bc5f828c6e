#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gflow/grid.hpp"
#include "gflow/kernels.hpp"

using namespace gflow;

namespace {

// Independent theta-function evaluation of the periodized heat kernel with a
// fixed wide truncation.
double theta_heat(double z, double t, double period) {
  double s = 0.0;
  for (int k = -200; k <= 200; ++k)
    s += std::exp(-(z + k * period) * (z + k * period) / (2.0 * t)) /
         std::sqrt(2.0 * M_PI * t);
  return s;
}

} // namespace

TEST_CASE("periodized heat 1d matches a wide theta sum") {
  for (double t : {1e-4, 1e-2, 0.1, 1.0, 10.0})
    for (double z : {0.0, 0.1, 0.25, 0.5}) {
      const double ref = theta_heat(z, t, 1.0);
      CHECK(periodized_heat_1d(z, t, 1.0) == doctest::Approx(ref).epsilon(1e-13));
    }
}

TEST_CASE("gaussian kernel: diagonal one, symmetry, pinned value") {
  Grid g(Domain{1, false, 1.0}, 10);
  const ProductKernel pk = gaussian_kernel(g, 1e-3, 1.0, 16);
  const AxisKernel& ax = pk.axes[0];
  for (int i = 0; i < g.m; ++i) CHECK(ax.at(i, i) == 1.0);
  for (int i = 0; i < g.m; ++i)
    for (int j = 0; j < g.m; ++j) CHECK(ax.at(i, j) == ax.at(j, i));
  // centers 0.05 and 0.15 are 0.1 apart: exp(-16 * 0.01 / (2e-3)) = exp(-80)
  CHECK(ax.at(0, 1) == doctest::Approx(std::exp(-80.0)).epsilon(1e-12));
  CHECK_THROWS_AS(gaussian_kernel(g, 0.0, 1.0, 16), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel(g, 1e-3, -1.0, 16), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel(g, 1e-3, 1.0, 0), std::invalid_argument);
}

TEST_CASE("gaussian kernel uses the periodized distance on the torus") {
  Grid g(Domain{1, true, 1.0}, 10);
  const ProductKernel pk = gaussian_kernel(g, 1e-2, 1.0, 4);
  // cells 0 and 9 are 0.1 apart around the seam
  const double expect = std::exp(-4.0 * 0.01 / (2.0 * 1e-2));
  CHECK(pk.axes[0].at(0, 9) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("heat kernel: torus only, stochastic rows, symmetry") {
  Grid box(Domain{1, false, 1.0}, 16);
  CHECK_THROWS_AS(heat_kernel(box, 0.01), std::invalid_argument);
  Grid g(Domain{1, true, 1.0}, 64);
  CHECK_THROWS_AS(heat_kernel(g, 0.0), std::invalid_argument);

  const ProductKernel pk = heat_kernel(g, 0.01);
  const AxisKernel& ax = pk.axes[0];
  for (int i = 0; i < g.m; ++i)
    CHECK(std::fabs(ax.weighted_row_sum(i, g.spacing()) - 1.0) <= 1e-10);
  for (int i = 0; i < g.m; ++i)
    for (int j = 0; j < g.m; ++j) CHECK(ax.at(i, j) == ax.at(j, i));
}

TEST_CASE("long-time heat kernel is flat and peaked at zero") {
  Grid g(Domain{1, true, 1.0}, 32);
  double dev = 0.0;
  for (int j = 0; j < g.m; ++j)
    dev = std::max(dev, std::fabs(periodized_heat_1d(j * g.spacing(), 10.0, 1.0) - 1.0));
  CHECK(dev < 1e-8);
  for (double t : {1e-3, 1e-2, 0.1, 10.0}) {
    const double g0 = periodized_heat_1d(0.0, t, 1.0);
    for (int j = 0; j < g.m; ++j)
      CHECK(g0 >= periodized_heat_1d(axis_distance(g.center(j), 0.0, g.domain), t, 1.0) - 1e-15);
  }
}

TEST_CASE("apply_kernel: delta input gives a kernel column times the cell weight") {
  Grid g(Domain{1, true, 1.0}, 16);
  const ProductKernel pk = heat_kernel(g, 0.02);
  Field delta(g.cells(), 0.0);
  delta[5] = 1.0;
  const Field out = apply_kernel(pk, delta);
  for (int i = 0; i < g.cells(); ++i)
    CHECK(out[i] == doctest::Approx(pk.axes[0].at(i, 5) * g.spacing()).epsilon(1e-14));
}

TEST_CASE("apply_kernel: heat mode preserves constants") {
  Grid g(Domain{1, true, 1.0}, 64);
  const ProductKernel pk = heat_kernel(g, 0.005);
  Field c(g.cells(), 0.7);
  const Field out = apply_kernel(pk, c);
  for (int i = 0; i < g.cells(); ++i) CHECK(std::fabs(out[i] - 0.7) <= 1e-10);

  Grid g2(Domain{2, true, 1.0}, 12);
  const ProductKernel pk2 = heat_kernel(g2, 0.005);
  const Field out2 = apply_kernel(pk2, Field(g2.cells(), 0.3));
  for (int i = 0; i < g2.cells(); ++i) CHECK(std::fabs(out2[i] - 0.3) <= 1e-10);
}

TEST_CASE("2D separable application equals the dense 4-index contraction") {
  Grid g(Domain{2, true, 1.0}, 8);
  const ProductKernel pk = heat_kernel(g, 0.03);
  Field f(g.cells());
  for (int i = 0; i < g.cells(); ++i) f[i] = 0.1 + 0.9 * ((i * 37) % 11) / 10.0;
  const Field fast = apply_kernel(pk, f);

  const double w = g.spacing() * g.spacing(); // one weight per axis
  Field dense(g.cells(), 0.0);
  for (int c = 0; c < g.cells(); ++c) {
    double s = 0.0;
    for (int d = 0; d < g.cells(); ++d) {
      const double kx = pk.axes[0].at(g.axis_index(c, 0), g.axis_index(d, 0));
      const double ky = pk.axes[1].at(g.axis_index(c, 1), g.axis_index(d, 1));
      s += kx * ky * f[d];
    }
    dense[c] = s * w;
  }
  for (int c = 0; c < g.cells(); ++c)
    CHECK(std::fabs(fast[c] - dense[c]) <= 1e-12 * std::max(1.0, std::fabs(dense[c])));
}

TEST_CASE("heat semigroup: two half steps equal one full step") {
  Grid g(Domain{1, true, 1.0}, 64);
  const double t = 0.004;
  const ProductKernel half = heat_kernel(g, t);
  const ProductKernel full = heat_kernel(g, 2.0 * t);
  Field f(g.cells());
  for (int i = 0; i < g.cells(); ++i)
    f[i] = 1.0 + 0.5 * std::sin(2.0 * M_PI * g.center(i)) + 0.2 * std::cos(6.0 * M_PI * g.center(i));
  const Field twice = apply_kernel(half, apply_kernel(half, f));
  const Field once = apply_kernel(full, f);
  for (int i = 0; i < g.cells(); ++i)
    CHECK(std::fabs(twice[i] - once[i]) <= 1e-6 * std::fabs(once[i]));
}

TEST_CASE("penalized endpoint kernel") {
  Grid g(Domain{1, false, 1.0}, 10);
  std::vector<Point> map_XT;
  for (int c = 0; c < g.cells(); ++c) {
    Point p = g.point(c);
    p[0] = 1.0 - p[0];
    map_XT.push_back(p);
  }
  const PairField w = penalized_endpoint_kernel(g, map_XT, 16.0, 1e-3);
  for (int s = 0; s < g.cells(); ++s)
    CHECK(w.at(s, g.m - 1 - s) == 1.0); // on the graph of X_T
  // dist 0.1 off the graph: exp(-16 * 0.01 / 2e-3) = exp(-80)
  CHECK(w.at(0, 8) == doctest::Approx(std::exp(-80.0)).epsilon(1e-12));

  // large beta kills off-graph weights
  const PairField big = penalized_endpoint_kernel(g, map_XT, 1e8, 1e-3);
  for (int s = 0; s < g.cells(); ++s)
    for (int t = 0; t < g.cells(); ++t)
      if (t != g.m - 1 - s) CHECK(big.at(s, t) == 0.0);

  CHECK_THROWS_AS(penalized_endpoint_kernel(g, map_XT, 0.0, 1e-3), std::invalid_argument);
  CHECK_THROWS_AS(penalized_endpoint_kernel(g, map_XT, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("sandwich check: envelope constants") {
  Grid g(Domain{1, true, 1.0}, 64);
  {
    const auto [lo, hi] = kernel_sandwich_check(g, {1e-4});
    CHECK(lo >= 1.0 - 1e-12); // periodization only adds mass
    CHECK(hi >= 1.0);
  }
  {
    const auto [lo, hi] = kernel_sandwich_check(g, {1e-4, 1e-3, 1e-2, 0.1});
    CHECK(lo >= 1.0 - 1e-12);
    CHECK(hi <= 3.0);
  }
  // ratio at x = 0 is >= 1 for any t
  for (double t : {1e-4, 0.5, 5.0}) {
    const double env = std::exp(0.0) / std::sqrt(2.0 * M_PI * t);
    CHECK(periodized_heat_1d(0.0, t, 1.0) / env >= 1.0 - 1e-12);
  }
  Grid box(Domain{1, false, 1.0}, 8);
  CHECK_THROWS_AS(kernel_sandwich_check(box, {1e-3}), std::invalid_argument);
}

TEST_CASE("band construction drops only negligible tails") {
  Grid g(Domain{1, false, 1.0}, 100);
  const ProductKernel pk = gaussian_kernel(g, 1e-4, 1.0, 16);
  const AxisKernel& ax = pk.axes[0];
  for (int i = 0; i < g.m; ++i) {
    CHECK(ax.lo[i] <= i);
    CHECK(ax.hi[i] > i);
    double dropped = 0.0, kept = 0.0;
    for (int j = 0; j < g.m; ++j) {
      if (j >= ax.lo[i] && j < ax.hi[i]) kept += ax.at(i, j);
      else dropped += ax.at(i, j);
    }
    CHECK(dropped <= 1e-13 * kept);
  }
}
