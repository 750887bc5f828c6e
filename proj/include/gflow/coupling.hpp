#pragma once

// Endpoint coupling pi_{0,T}: either the deterministic pushforward of a final
// configuration map (stored sparsely, one target per source) or an explicit
// dense pair mass. Maps that fail the measure-preservation check are rejected,
// not repaired.

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gflow/grid.hpp"

namespace gflow {

// A final configuration X_T sampled on cell centers.
struct FinalConfiguration {
  std::string name;
  std::vector<Point> image; // one target point per cell

  static FinalConfiguration identity(const Grid& grid) {
    FinalConfiguration f;
    f.name = "identity";
    f.image.reserve(std::size_t(grid.cells()));
    for (int c = 0; c < grid.cells(); ++c) f.image.push_back(grid.point(c));
    return f;
  }

  // x -> side - x per axis.
  static FinalConfiguration reflection(const Grid& grid) {
    FinalConfiguration f;
    f.name = "reflection";
    for (int c = 0; c < grid.cells(); ++c) {
      Point p = grid.point(c);
      for (int ax = 0; ax < grid.domain.dim; ++ax) p[ax] = grid.domain.side - p[ax];
      f.image.push_back(p);
    }
    return f;
  }

  // Two-piece measure-preserving swap on the torus:
  // x -> x + 1/2 on [0, 1/2), x -> x - 1/2 on [1/2, 1).
  static FinalConfiguration discontinuous(const Grid& grid) {
    if (grid.domain.dim != 1 || !grid.domain.periodic)
      throw std::invalid_argument("discontinuous preset: 1D periodic domain required");
    FinalConfiguration f;
    f.name = "discontinuous";
    const double half = 0.5 * grid.domain.side;
    for (int c = 0; c < grid.cells(); ++c) {
      Point p = grid.point(c);
      p[0] = p[0] < half ? p[0] + half : p[0] - half;
      f.image.push_back(p);
    }
    return f;
  }
};

struct EndpointCoupling {
  Grid grid;
  bool sparse = true;
  std::vector<int> target;   // sparse: target cell per source, mass 1/M each
  PairField dense;           // dense: explicit pair mass
  double target_marginal_gap = 0.0; // L1 diagnostic from construction

  double mass(int src, int tgt) const {
    if (sparse) return target[std::size_t(src)] == tgt ? 1.0 / grid.cells() : 0.0;
    return dense.at(src, tgt);
  }

  Field source_marginal() const {
    Field f(grid.cells(), 0.0);
    if (sparse) {
      for (int s = 0; s < grid.cells(); ++s) f[s] += 1.0 / grid.cells();
    } else {
      for (int s = 0; s < grid.cells(); ++s)
        for (int t = 0; t < grid.cells(); ++t) f[s] += dense.at(s, t);
    }
    return f;
  }

  Field target_marginal() const {
    Field f(grid.cells(), 0.0);
    if (sparse) {
      for (int s = 0; s < grid.cells(); ++s) f[target[std::size_t(s)]] += 1.0 / grid.cells();
    } else {
      for (int s = 0; s < grid.cells(); ++s)
        for (int t = 0; t < grid.cells(); ++t) f[t] += dense.at(s, t);
    }
    return f;
  }

  double total_mass() const {
    return sparse ? 1.0 : dense.sum();
  }
};

// Deterministic coupling (id, X_T)_# Leb: each source cell's mass goes to the
// cell containing X_T(center). Rejects maps whose binned image is not
// uniform within `tolerance` (L1, relative to total mass 1).
inline EndpointCoupling coupling_from_map(const Grid& grid, const FinalConfiguration& map_XT,
                                          double tolerance = 1e-6) {
  if (int(map_XT.image.size()) != grid.cells())
    throw std::invalid_argument("coupling_from_map: map size mismatch");
  EndpointCoupling pi;
  pi.grid = grid;
  pi.sparse = true;
  pi.target.reserve(std::size_t(grid.cells()));
  for (int c = 0; c < grid.cells(); ++c)
    pi.target.push_back(grid.bin(map_XT.image[std::size_t(c)]));

  pi.target_marginal_gap = l1_distance(pi.target_marginal(), uniform_field(grid));
  if (pi.target_marginal_gap > tolerance) {
    std::ostringstream msg;
    msg << "coupling_from_map: map '" << map_XT.name
        << "' is not measure-preserving on this grid (target marginal L1 gap "
        << pi.target_marginal_gap << " > tolerance " << tolerance << ")";
    throw std::runtime_error(msg.str());
  }
  return pi;
}

struct CouplingReport {
  double source_marginal_gap = 0.0;
  double target_marginal_gap = 0.0;
  double mass_error = 0.0;
  double entropy = 0.0; // relative entropy w.r.t. uniform (x) uniform
};

inline CouplingReport validate_coupling(const EndpointCoupling& pi) {
  CouplingReport r;
  const Field u = uniform_field(pi.grid);
  r.source_marginal_gap = l1_distance(pi.source_marginal(), u);
  r.target_marginal_gap = l1_distance(pi.target_marginal(), u);
  r.mass_error = std::fabs(pi.total_mass() - 1.0);
  const int M = pi.grid.cells();
  const double uu = 1.0 / (double(M) * M);
  double ent = 0.0;
  if (pi.sparse) {
    const double p = 1.0 / M;
    for (int s = 0; s < M; ++s) ent += p * std::log(p / uu);
  } else {
    for (double p : pi.dense.v)
      if (p > 0.0) ent += p * std::log(p / uu);
  }
  r.entropy = ent;
  return r;
}

// Text format: first line "sparse" or "dense" plus the cell count; then one
// line per source cell with either a target index or a full row of masses.
inline void save_coupling(const EndpointCoupling& pi, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_coupling: cannot open " + path);
  out.precision(17);
  out << (pi.sparse ? "sparse" : "dense") << " " << pi.grid.cells() << "\n";
  for (int s = 0; s < pi.grid.cells(); ++s) {
    if (pi.sparse) {
      out << pi.target[std::size_t(s)] << "\n";
    } else {
      for (int t = 0; t < pi.grid.cells(); ++t)
        out << pi.dense.at(s, t) << (t + 1 == pi.grid.cells() ? '\n' : ' ');
    }
  }
  if (!out) throw std::runtime_error("save_coupling: write failed for " + path);
}

inline EndpointCoupling load_coupling(const Grid& grid, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_coupling: cannot open " + path);
  std::string kind;
  int cells = 0;
  in >> kind >> cells;
  if (cells != grid.cells())
    throw std::runtime_error("load_coupling: cell count mismatch in " + path);
  EndpointCoupling pi;
  pi.grid = grid;
  if (kind == "sparse") {
    pi.sparse = true;
    pi.target.resize(std::size_t(cells));
    for (int s = 0; s < cells; ++s) {
      in >> pi.target[std::size_t(s)];
      if (pi.target[std::size_t(s)] < 0 || pi.target[std::size_t(s)] >= cells)
        throw std::runtime_error("load_coupling: target index out of range");
    }
  } else if (kind == "dense") {
    pi.sparse = false;
    pi.dense = PairField(cells);
    for (int s = 0; s < cells; ++s)
      for (int t = 0; t < cells; ++t) in >> pi.dense.at(s, t);
  } else {
    throw std::runtime_error("load_coupling: unknown representation '" + kind + "'");
  }
  if (!in) throw std::runtime_error("load_coupling: parse error in " + path);
  return pi;
}

} // namespace gflow
