#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gflow/beltrami.hpp"

using namespace gflow;

namespace {

constexpr auto kTangent = BeltramiConvention::boundary_tangent;
constexpr auto kVerbatim = BeltramiConvention::paper_verbatim;

double fd_divergence(const Point& x, BeltramiConvention conv) {
  const double h = 1e-5;
  const Point xp{x[0] + h, x[1]}, xm{x[0] - h, x[1]};
  const Point yp{x[0], x[1] + h}, ym{x[0], x[1] - h};
  return (beltrami::velocity(xp, conv)[0] - beltrami::velocity(xm, conv)[0]) / (2 * h) +
         (beltrami::velocity(yp, conv)[1] - beltrami::velocity(ym, conv)[1]) / (2 * h);
}

Point fd_pressure_gradient(const Point& x, BeltramiConvention conv) {
  const double h = 1e-5;
  const Point xp{x[0] + h, x[1]}, xm{x[0] - h, x[1]};
  const Point yp{x[0], x[1] + h}, ym{x[0], x[1] - h};
  return {(beltrami::pressure(xp, conv) - beltrami::pressure(xm, conv)) / (2 * h),
          (beltrami::pressure(yp, conv) - beltrami::pressure(ym, conv)) / (2 * h)};
}

} // namespace

TEST_CASE("velocity: vortex fixed point and boundary tangency") {
  const Point center{0.5, 0.5};
  for (auto conv : {kTangent, kVerbatim}) {
    const Point u = beltrami::velocity(center, conv);
    CHECK(std::fabs(u[0]) <= 1e-15);
    CHECK(std::fabs(u[1]) <= 1e-15);
  }
  for (int i = 0; i <= 20; ++i) {
    const double s = i / 20.0;
    CHECK(std::fabs(beltrami::velocity(Point{0.0, s}, kTangent)[0]) <= 1e-15);
    CHECK(std::fabs(beltrami::velocity(Point{1.0, s}, kTangent)[0]) <= 1e-15);
    CHECK(std::fabs(beltrami::velocity(Point{s, 0.0}, kTangent)[1]) <= 1e-15);
    CHECK(std::fabs(beltrami::velocity(Point{s, 1.0}, kTangent)[1]) <= 1e-15);
  }
  // the verbatim field is not tangent on the box boundary
  CHECK(std::fabs(beltrami::velocity(Point{0.0, 0.5}, kVerbatim)[0]) > 0.5);
}

TEST_CASE("velocity is divergence free (finite differences)") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int i = 0; i < 10000; ++i) {
    const Point x{u(rng), u(rng)};
    CHECK(std::fabs(fd_divergence(x, kTangent)) <= 1e-6);
  }
}

TEST_CASE("steady Euler residual u.grad(u) + grad(p) vanishes") {
  const double h = 1e-5;
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Point x{u(rng), u(rng)};
    const Point v = beltrami::velocity(x, kTangent);
    Point adv{0.0, 0.0};
    for (int c = 0; c < 2; ++c) {
      const Point xp{x[0] + h, x[1]}, xm{x[0] - h, x[1]};
      const Point yp{x[0], x[1] + h}, ym{x[0], x[1] - h};
      const double dudx =
          (beltrami::velocity(xp, kTangent)[c] - beltrami::velocity(xm, kTangent)[c]) / (2 * h);
      const double dudy =
          (beltrami::velocity(yp, kTangent)[c] - beltrami::velocity(ym, kTangent)[c]) / (2 * h);
      adv[c] = v[0] * dudx + v[1] * dudy;
    }
    const Point gp = fd_pressure_gradient(x, kTangent);
    worst = std::max({worst, std::fabs(adv[0] + gp[0]), std::fabs(adv[1] + gp[1])});
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("pressure Hessian: max eigenvalue pi^2, diagonal structure") {
  CHECK(beltrami::pressure_hessian_max_eig() == doctest::Approx(M_PI * M_PI).epsilon(1e-9));
  // mixed partial is zero: p is additively separable
  const double h = 1e-4;
  for (const Point x : {Point{0.3, 0.7}, Point{0.55, 0.2}}) {
    const double pxy = (beltrami::pressure(Point{x[0] + h, x[1] + h}, kTangent) -
                        beltrami::pressure(Point{x[0] + h, x[1] - h}, kTangent) -
                        beltrami::pressure(Point{x[0] - h, x[1] + h}, kTangent) +
                        beltrami::pressure(Point{x[0] - h, x[1] - h}, kTangent)) /
                       (4 * h * h);
    CHECK(std::fabs(pxy) <= 1e-6);
  }
}

TEST_CASE("flow map: T=0 identity, center fixed, verbatim rejected") {
  Grid g(Domain{2, false, 1.0}, 8);
  const FinalConfiguration id = beltrami::flow_map(0.0, g, 10);
  for (int c = 0; c < g.cells(); ++c) {
    CHECK(id.image[std::size_t(c)][0] == doctest::Approx(g.point(c)[0]).epsilon(1e-14));
    CHECK(id.image[std::size_t(c)][1] == doctest::Approx(g.point(c)[1]).epsilon(1e-14));
  }
  const Point end = beltrami::integrate(Point{0.5, 0.5}, 2.0, 500, kTangent);
  CHECK(std::fabs(end[0] - 0.5) <= 1e-12);
  CHECK(std::fabs(end[1] - 0.5) <= 1e-12);
  CHECK_THROWS_AS(beltrami::flow_map(0.5, g, 100, kVerbatim), std::invalid_argument);
  Grid g1(Domain{1, false, 1.0}, 8);
  CHECK_THROWS_AS(beltrami::flow_map(0.5, g1, 100), std::invalid_argument);
}

TEST_CASE("flow map at T=0.9 is measure preserving: unit Jacobian determinant") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  const double h = 1e-5;
  auto phi = [](double a, double b) {
    return beltrami::integrate(Point{a, b}, 0.9, 400, kTangent);
  };
  for (int i = 0; i < 100; ++i) {
    const double x = u(rng), y = u(rng);
    const Point xp = phi(x + h, y), xm = phi(x - h, y);
    const Point yp = phi(x, y + h), ym = phi(x, y - h);
    const double j11 = (xp[0] - xm[0]) / (2.0 * h), j12 = (yp[0] - ym[0]) / (2.0 * h);
    const double j21 = (xp[1] - xm[1]) / (2.0 * h), j22 = (yp[1] - ym[1]) / (2.0 * h);
    CHECK(std::fabs(j11 * j22 - j12 * j21 - 1.0) <= 1e-4);
  }
  // Binning cell centers loses injectivity under the strong shear (local
  // stretching up to ~e^{pi T}), so the binned histogram only stays uniform
  // in a loose L1 sense.
  Grid g(Domain{2, false, 1.0}, 64);
  const FinalConfiguration f = beltrami::flow_map(0.9, g, 200);
  Field hist(g.cells(), 0.0);
  for (const Point& p : f.image) hist[g.bin(p)] += 1.0 / g.cells();
  CHECK(l1_distance(hist, uniform_field(g)) <= 0.8);
}

TEST_CASE("RK4 reversibility: forward then backward returns the start") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int i = 0; i < 200; ++i) {
    const Point x{u(rng), u(rng)};
    const Point fwd = beltrami::integrate(x, 0.9, 1000, kTangent);
    const Point back = beltrami::integrate(fwd, -0.9, 1000, kTangent);
    CHECK(std::fabs(back[0] - x[0]) <= 1e-6);
    CHECK(std::fabs(back[1] - x[1]) <= 1e-6);
  }
}

TEST_CASE("Bernoulli invariant |u|^2/2 + p is constant along trajectories") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int i = 0; i < 100; ++i) {
    Point x{u(rng), u(rng)};
    const Point v0 = beltrami::velocity(x, kTangent);
    const double e0 =
        0.5 * (v0[0] * v0[0] + v0[1] * v0[1]) + beltrami::pressure(x, kTangent);
    for (int s = 0; s < 10; ++s) {
      x = beltrami::integrate(x, 0.13, 200, kTangent);
      const Point v = beltrami::velocity(x, kTangent);
      const double e = 0.5 * (v[0] * v[0] + v[1] * v[1]) + beltrami::pressure(x, kTangent);
      CHECK(std::fabs(e - e0) <= 1e-6);
    }
  }
}

TEST_CASE("classical color tracking") {
  Grid g(Domain{2, false, 1.0}, 12);
  const ColorFields start = beltrami::classical_color_tracking(0.0, g);
  const double u = 1.0 / g.cells();
  for (int c = 0; c < g.cells(); ++c) {
    const Color col = color_of_cell(g, c);
    CHECK(start.red[c] == (col == Color::red ? u : 0.0));
    CHECK(start.green[c] == (col == Color::green ? u : 0.0));
    CHECK(start.blue[c] == (col == Color::blue ? u : 0.0));
  }
  // mass of every color is conserved by the push-forward
  const ColorFields moved = beltrami::classical_color_tracking(0.7, g, 400);
  CHECK(moved.red.sum() == doctest::Approx(start.red.sum()).epsilon(1e-12));
  CHECK(moved.green.sum() == doctest::Approx(start.green.sum()).epsilon(1e-12));
  CHECK(moved.blue.sum() == doctest::Approx(start.blue.sum()).epsilon(1e-12));
  CHECK(moved.sum().sum() == doctest::Approx(1.0).epsilon(1e-12));
}
