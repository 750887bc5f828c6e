#pragma once

// File emission: binary PGM/PPM images, CSV tables, potential checkpoints
// (text header + little-endian doubles), and a content hash for manifests.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gflow/grid.hpp"
#include "gflow/observables.hpp"
#include "gflow/sinkhorn.hpp"

namespace gflow {

// Max-normalized 8-bit graymap (P5). Returns the normalization constant.
// `width` columns, `height` rows, row-major from the top row.
inline double write_pgm(const std::string& path, const std::vector<double>& values,
                        int width, int height) {
  if (int(values.size()) != width * height)
    throw std::invalid_argument("write_pgm: size mismatch");
  double vmax = 0.0;
  for (double v : values) vmax = std::max(vmax, v);
  const double scale = vmax > 0.0 ? 255.0 / vmax : 0.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(width));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = values[std::size_t(y) * width + x] * scale;
      if (v < 0.0) v = 0.0;
      if (v > 255.0) v = 255.0;
      row[std::size_t(x)] = static_cast<unsigned char>(v + 0.5);
    }
    out.write(reinterpret_cast<const char*>(row.data()), width);
  }
  if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
  return vmax;
}

// Two-point marginal as in the 1D figures: x_0 on the horizontal axis, x_k on
// the vertical axis, origin at the bottom-left.
inline double write_two_point_pgm(const std::string& path, const PairField& P) {
  const int n = P.n;
  std::vector<double> img(std::size_t(n) * n, 0.0);
  for (int y = 0; y < n; ++y)       // image row, top first
    for (int x = 0; x < n; ++x) {
      const int xk = n - 1 - y;
      img[std::size_t(y) * n + x] = P.at(x, xk);
    }
  return write_pgm(path, img, n, n);
}

// Color field against white: opacity = value / max, pixel = white blended
// toward the pure color. RGB channel weights per color are (1,0,0) etc.
inline double write_color_ppm(const std::string& path, const Field& field, const Grid& grid,
                              double cr, double cg, double cb, double vmax_override = 0.0) {
  if (grid.domain.dim != 2) throw std::invalid_argument("write_color_ppm: 2D grid required");
  const int m = grid.m;
  double vmax = vmax_override;
  if (vmax <= 0.0)
    for (double v : field.v) vmax = std::max(vmax, v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_color_ppm: cannot open " + path);
  out << "P6\n" << m << " " << m << "\n255\n";
  std::vector<unsigned char> row(std::size_t(m) * 3);
  for (int y = 0; y < m; ++y) {
    const int iy = m - 1 - y; // top image row = largest y coordinate
    for (int x = 0; x < m; ++x) {
      double t = vmax > 0.0 ? field[grid.index(x, iy)] / vmax : 0.0;
      if (t > 1.0) t = 1.0;
      const double r = 255.0 * (1.0 - t * (1.0 - cr));
      const double g = 255.0 * (1.0 - t * (1.0 - cg));
      const double b = 255.0 * (1.0 - t * (1.0 - cb));
      row[std::size_t(x) * 3 + 0] = static_cast<unsigned char>(r + 0.5);
      row[std::size_t(x) * 3 + 1] = static_cast<unsigned char>(g + 0.5);
      row[std::size_t(x) * 3 + 2] = static_cast<unsigned char>(b + 0.5);
    }
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  if (!out) throw std::runtime_error("write_color_ppm: write failed for " + path);
  return vmax;
}

// Overlay of the three color fields, each blended against white.
inline void write_rgb_ppm(const std::string& path, const ColorFields& cf, const Grid& grid) {
  const int m = grid.m;
  double vmax = 0.0;
  for (int i = 0; i < cf.red.size(); ++i)
    vmax = std::max({vmax, cf.red[i], cf.green[i], cf.blue[i]});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_rgb_ppm: cannot open " + path);
  out << "P6\n" << m << " " << m << "\n255\n";
  std::vector<unsigned char> row(std::size_t(m) * 3);
  for (int y = 0; y < m; ++y) {
    const int iy = m - 1 - y;
    for (int x = 0; x < m; ++x) {
      const int c = grid.index(x, iy);
      const double tr = vmax > 0.0 ? std::min(1.0, cf.red[c] / vmax) : 0.0;
      const double tg = vmax > 0.0 ? std::min(1.0, cf.green[c] / vmax) : 0.0;
      const double tb = vmax > 0.0 ? std::min(1.0, cf.blue[c] / vmax) : 0.0;
      // each color removes the complementary channels proportionally
      const double r = 255.0 * std::max(0.0, 1.0 - tg - tb);
      const double g = 255.0 * std::max(0.0, 1.0 - tr - tb);
      const double b = 255.0 * std::max(0.0, 1.0 - tr - tg);
      row[std::size_t(x) * 3 + 0] = static_cast<unsigned char>(r + 0.5);
      row[std::size_t(x) * 3 + 1] = static_cast<unsigned char>(g + 0.5);
      row[std::size_t(x) * 3 + 2] = static_cast<unsigned char>(b + 0.5);
    }
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  if (!out) throw std::runtime_error("write_rgb_ppm: write failed for " + path);
}

inline void write_trace_csv(const std::string& path, const std::vector<SweepRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  out << "sweep,hilbert_total,max_marginal_gap,elapsed_seconds\n";
  out.precision(17);
  for (const auto& r : trace)
    out << r.sweep << "," << r.hilbert << "," << r.marginal_gap << "," << r.seconds << "\n";
  if (!out) throw std::runtime_error("write_trace_csv: write failed for " + path);
}

inline void write_pair_csv(const std::string& path, const PairField& P) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_pair_csv: cannot open " + path);
  out.precision(17);
  for (int s = 0; s < P.n; ++s)
    for (int t = 0; t < P.n; ++t)
      out << P.at(s, t) << (t + 1 == P.n ? '\n' : ',');
  if (!out) throw std::runtime_error("write_pair_csv: write failed for " + path);
}

inline void write_field_csv(const std::string& path, const Field& f) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_field_csv: cannot open " + path);
  out.precision(17);
  for (int i = 0; i < f.size(); ++i) out << f[i] << "\n";
  if (!out) throw std::runtime_error("write_field_csv: write failed for " + path);
}

namespace detail {

inline void write_doubles_le(std::ofstream& out, const std::vector<double>& v) {
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    unsigned char raw[8];
    for (int i = 0; i < 8; ++i) raw[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(raw), 8);
  }
}

inline void read_doubles_le(std::ifstream& in, std::vector<double>& v) {
  for (double& x : v) {
    unsigned char raw[8];
    in.read(reinterpret_cast<char*>(raw), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(raw[i]) << (8 * i);
    std::memcpy(&x, &bits, sizeof(x));
  }
}

} // namespace detail

// Checkpoint layout: one text header line
//   gflow-potentials <dim> <m> <N> <mode> <a_count> <b_kind> <b_count>
// followed by all a fields, the b values, the penalization gauge constant,
// and an exponent flag; when the flag is nonzero, the per-cell power-of-two
// exponents for a and sparse b follow (stored as doubles).
inline void save_potentials(const std::string& path, const Problem& pr, const Potentials& pot) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_potentials: cannot open " + path);
  const std::string mode = pr.mode == EndpointMode::constraint ? "constraint" : "penalization";
  std::string bkind = "none";
  std::size_t bcount = 0;
  if (pr.mode == EndpointMode::constraint) {
    bkind = pr.pi.sparse ? "sparse" : "dense";
    bcount = pr.pi.sparse ? pot.b_sparse.size() : pot.b_dense.v.size();
  }
  out << "gflow-potentials " << pr.grid.domain.dim << " " << pr.grid.m << " " << pr.N << " "
      << mode << " " << pot.a.size() << " " << bkind << " " << bcount << "\n";
  for (const auto& a : pot.a) detail::write_doubles_le(out, a.v);
  if (bkind == "sparse") detail::write_doubles_le(out, pot.b_sparse);
  if (bkind == "dense") detail::write_doubles_le(out, pot.b_dense.v);
  std::vector<double> scale{pot.log_scale};
  detail::write_doubles_le(out, scale);
  const bool has_exp = !pot.a_exp.empty() || !pot.b_exp.empty();
  std::vector<double> flag{has_exp ? 1.0 : 0.0};
  detail::write_doubles_le(out, flag);
  if (has_exp) {
    std::vector<double> tmp;
    for (std::size_t k = 0; k < pot.a.size(); ++k) {
      tmp.assign(pot.a[k].size(), 0.0);
      if (k < pot.a_exp.size())
        for (std::size_t i = 0; i < pot.a_exp[k].size(); ++i) tmp[i] = double(pot.a_exp[k][i]);
      detail::write_doubles_le(out, tmp);
    }
    if (bkind == "sparse") {
      tmp.assign(pot.b_sparse.size(), 0.0);
      for (std::size_t i = 0; i < pot.b_exp.size(); ++i) tmp[i] = double(pot.b_exp[i]);
      detail::write_doubles_le(out, tmp);
    }
  }
  if (!out) throw std::runtime_error("save_potentials: write failed for " + path);
}

inline Potentials load_potentials(const std::string& path, const Problem& pr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_potentials: cannot open " + path);
  std::string magic, mode, bkind;
  int dim = 0, m = 0, N = 0;
  std::size_t acount = 0, bcount = 0;
  in >> magic >> dim >> m >> N >> mode >> acount >> bkind >> bcount;
  in.get(); // newline
  if (magic != "gflow-potentials" || dim != pr.grid.domain.dim || m != pr.grid.m || N != pr.N)
    throw std::runtime_error("load_potentials: header does not match the problem");
  Potentials pot;
  pot.a.assign(acount, Field(pr.grid.cells()));
  for (auto& a : pot.a) detail::read_doubles_le(in, a.v);
  if (bkind == "sparse") {
    pot.b_sparse.resize(bcount);
    detail::read_doubles_le(in, pot.b_sparse);
  } else if (bkind == "dense") {
    pot.b_dense = PairField(pr.grid.cells());
    detail::read_doubles_le(in, pot.b_dense.v);
  }
  std::vector<double> scale(1);
  detail::read_doubles_le(in, scale);
  pot.log_scale = scale[0];
  std::vector<double> flag(1);
  detail::read_doubles_le(in, flag);
  if (flag[0] != 0.0) {
    std::vector<double> tmp;
    pot.a_exp.resize(pot.a.size());
    for (std::size_t k = 0; k < pot.a.size(); ++k) {
      tmp.assign(pot.a[k].size(), 0.0);
      detail::read_doubles_le(in, tmp);
      pot.a_exp[k].resize(tmp.size());
      for (std::size_t i = 0; i < tmp.size(); ++i) pot.a_exp[k][i] = int(tmp[i]);
    }
    if (bkind == "sparse") {
      tmp.assign(pot.b_sparse.size(), 0.0);
      detail::read_doubles_le(in, tmp);
      pot.b_exp.resize(tmp.size());
      for (std::size_t i = 0; i < tmp.size(); ++i) pot.b_exp[i] = int(tmp[i]);
    }
  }
  if (!in) throw std::runtime_error("load_potentials: truncated file " + path);
  return pot;
}

// FNV-1a over file bytes, for the run manifest.
inline std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_hash: cannot open " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

} // namespace gflow
