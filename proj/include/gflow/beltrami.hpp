#pragma once

// Single-vortex steady Euler reference flow on the unit square, its pressure
// Hessian criterion, RK4 flow-map integration, and classical (no-mixing) color
// tracking.
//
// The verbatim field u = (-cos(pi x1) sin(pi x2), sin(pi x1) cos(pi x2)) has
// nonzero normal velocity on the boundary of [0,1]^2; the boundary-tangent
// convention shifts coordinates by 1/2 so the vortex is centered and u.n = 0
// on the walls, leaving the pressure Hessian spectrum unchanged.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gflow/coupling.hpp"
#include "gflow/grid.hpp"
#include "gflow/observables.hpp"

namespace gflow {

enum class BeltramiConvention { paper_verbatim, boundary_tangent };

namespace beltrami {

inline Point shifted(const Point& x, BeltramiConvention conv) {
  if (conv == BeltramiConvention::paper_verbatim) return x;
  return Point{x[0] - 0.5, x[1] - 0.5};
}

inline Point velocity(const Point& x, BeltramiConvention conv = BeltramiConvention::boundary_tangent) {
  const Point t = shifted(x, conv);
  return Point{-std::cos(M_PI * t[0]) * std::sin(M_PI * t[1]),
               std::sin(M_PI * t[0]) * std::cos(M_PI * t[1])};
}

inline double pressure(const Point& x, BeltramiConvention conv = BeltramiConvention::boundary_tangent) {
  const Point t = shifted(x, conv);
  const double s1 = std::sin(M_PI * t[0]);
  const double s2 = std::sin(M_PI * t[1]);
  return 0.5 * (s1 * s1 + s2 * s2);
}

// Hessian of p is diagonal: d2p/dxi2 = pi^2 cos(2 pi xi~).
inline double pressure_hessian_max_eig(int samples_per_axis = 256) {
  double best = -1e300;
  for (int i = 0; i < samples_per_axis; ++i)
    for (int j = 0; j < samples_per_axis; ++j) {
      const double x = double(i) / samples_per_axis;
      const double y = double(j) / samples_per_axis;
      const double e1 = M_PI * M_PI * std::cos(2.0 * M_PI * x);
      const double e2 = M_PI * M_PI * std::cos(2.0 * M_PI * y);
      best = std::max(best, std::max(e1, e2));
    }
  return best;
}

inline Point rk4_step(const Point& x, double dt, BeltramiConvention conv) {
  const Point k1 = velocity(x, conv);
  const Point x2{x[0] + 0.5 * dt * k1[0], x[1] + 0.5 * dt * k1[1]};
  const Point k2 = velocity(x2, conv);
  const Point x3{x[0] + 0.5 * dt * k2[0], x[1] + 0.5 * dt * k2[1]};
  const Point k3 = velocity(x3, conv);
  const Point x4{x[0] + dt * k3[0], x[1] + dt * k3[1]};
  const Point k4 = velocity(x4, conv);
  return Point{x[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
               x[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])};
}

inline Point integrate(Point x, double T, int steps, BeltramiConvention conv) {
  const double dt = T / steps;
  for (int s = 0; s < steps; ++s) x = rk4_step(x, dt, conv);
  return x;
}

// Classical flow map X_T on cell centers, fixed-step RK4. The verbatim
// convention is rejected on the box: its trajectories cross the boundary.
inline FinalConfiguration flow_map(double T, const Grid& grid, int steps = 1000,
                                   BeltramiConvention conv = BeltramiConvention::boundary_tangent) {
  if (grid.domain.dim != 2)
    throw std::invalid_argument("beltrami::flow_map: 2D grid required");
  if (conv == BeltramiConvention::paper_verbatim)
    throw std::invalid_argument(
        "beltrami::flow_map: the verbatim field is not tangent to the box "
        "boundary; use the boundary-tangent convention");
  if (steps < 1) throw std::invalid_argument("beltrami::flow_map: steps must be >= 1");
  FinalConfiguration f;
  f.name = "beltrami";
  f.image.reserve(std::size_t(grid.cells()));
  for (int c = 0; c < grid.cells(); ++c)
    f.image.push_back(integrate(grid.point(c), T, steps, conv));
  return f;
}

// Pushforward of the colored thirds by the classical flow: every cell's mass
// keeps exactly one color.
inline ColorFields classical_color_tracking(double T_partial, const Grid& grid,
                                            int steps = 1000,
                                            BeltramiConvention conv = BeltramiConvention::boundary_tangent) {
  const FinalConfiguration f =
      T_partial == 0.0 ? FinalConfiguration::identity(grid) : flow_map(T_partial, grid, steps, conv);
  const int M = grid.cells();
  const double u = 1.0 / M;
  ColorFields cf;
  cf.red = Field(M, 0.0);
  cf.green = Field(M, 0.0);
  cf.blue = Field(M, 0.0);
  for (int c = 0; c < M; ++c) {
    const int tgt = grid.bin(f.image[std::size_t(c)]);
    switch (color_of_cell(grid, c)) {
      case Color::red: cf.red[tgt] += u; break;
      case Color::green: cf.green[tgt] += u; break;
      case Color::blue: cf.blue[tgt] += u; break;
    }
  }
  return cf;
}

} // namespace beltrami
} // namespace gflow
