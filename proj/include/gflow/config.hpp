#pragma once

// Flat key=value experiment configuration. Unknown keys are rejected and all
// numeric ranges are validated at parse time.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gflow {

struct RunConfig {
  int dim = 1;
  bool periodic = false;
  int m = 100;
  double horizon = 1.0;
  int steps = 8;
  double epsilon = 1e-3;
  std::string kernel_mode = "gaussian"; // gaussian | heat
  std::string coupling_preset = "reflection"; // identity | reflection | discontinuous | beltrami | file
  std::string coupling_file;
  double coupling_tolerance = 1e-6;
  std::string endpoint_mode = "constraint"; // constraint | penalization
  double beta = 0.0;
  double eta = 1e-4;
  int max_sweeps = 10000;
  bool hilbert_include_b = true;
  std::string output_dir = "out";
  std::vector<int> slices; // empty: all slice indices 0..N
  long seed = 0;
  int threads = 1;

  std::vector<int> slice_list() const {
    if (!slices.empty()) return slices;
    std::vector<int> all;
    for (int k = 0; k <= steps; ++k) all.push_back(k);
    return all;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + v + "'");
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
  }
  if (pos != v.size())
    throw std::invalid_argument("config: key '" + key + "' has trailing characters in '" + v + "'");
  return x;
}

inline long parse_int(const std::string& key, const std::string& v) {
  const double x = parse_real(key, v);
  if (x != std::floor(x))
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
  return long(x);
}

} // namespace detail

inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      throw std::invalid_argument("config: duplicate key '" + key + "'");

    if (key == "domain.dim") {
      cfg.dim = int(detail::parse_int(key, val));
      if (cfg.dim != 1 && cfg.dim != 2)
        throw std::invalid_argument("config: domain.dim must be 1 or 2");
    } else if (key == "domain.periodic") {
      cfg.periodic = detail::parse_bool(key, val);
    } else if (key == "grid.m") {
      cfg.m = int(detail::parse_int(key, val));
      if (cfg.m < 2) throw std::invalid_argument("config: grid.m must be >= 2");
    } else if (key == "time.horizon") {
      cfg.horizon = detail::parse_real(key, val);
      if (!(cfg.horizon > 0.0)) throw std::invalid_argument("config: time.horizon must be positive");
    } else if (key == "time.steps") {
      cfg.steps = int(detail::parse_int(key, val));
      if (cfg.steps < 1) throw std::invalid_argument("config: time.steps must be >= 1");
    } else if (key == "epsilon") {
      cfg.epsilon = detail::parse_real(key, val);
      if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("config: epsilon must be positive");
    } else if (key == "kernel.mode") {
      if (val != "gaussian" && val != "heat")
        throw std::invalid_argument("config: kernel.mode must be gaussian or heat");
      cfg.kernel_mode = val;
    } else if (key == "coupling.preset") {
      if (val != "identity" && val != "reflection" && val != "discontinuous" &&
          val != "beltrami" && val != "file")
        throw std::invalid_argument("config: unknown coupling.preset '" + val + "'");
      cfg.coupling_preset = val;
    } else if (key == "coupling.file") {
      cfg.coupling_file = val;
    } else if (key == "coupling.tolerance") {
      cfg.coupling_tolerance = detail::parse_real(key, val);
      if (!(cfg.coupling_tolerance > 0.0))
        throw std::invalid_argument("config: coupling.tolerance must be positive");
    } else if (key == "endpoint.mode") {
      if (val != "constraint" && val != "penalization")
        throw std::invalid_argument("config: endpoint.mode must be constraint or penalization");
      cfg.endpoint_mode = val;
    } else if (key == "endpoint.beta") {
      cfg.beta = detail::parse_real(key, val);
      if (!(cfg.beta > 0.0)) throw std::invalid_argument("config: endpoint.beta must be positive");
    } else if (key == "stopping.eta") {
      cfg.eta = detail::parse_real(key, val);
      if (!(cfg.eta > 0.0)) throw std::invalid_argument("config: stopping.eta must be positive");
    } else if (key == "stopping.max_sweeps") {
      cfg.max_sweeps = int(detail::parse_int(key, val));
      if (cfg.max_sweeps < 1) throw std::invalid_argument("config: stopping.max_sweeps must be >= 1");
    } else if (key == "stopping.include_b") {
      cfg.hilbert_include_b = detail::parse_bool(key, val);
    } else if (key == "output.dir") {
      cfg.output_dir = val;
    } else if (key == "output.slices") {
      cfg.slices.clear();
      std::istringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ','))
        cfg.slices.push_back(int(detail::parse_int(key, detail::trim(tok))));
    } else if (key == "seed") {
      cfg.seed = detail::parse_int(key, val);
    } else if (key == "threads") {
      cfg.threads = int(detail::parse_int(key, val));
      if (cfg.threads < 1) throw std::invalid_argument("config: threads must be >= 1");
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }

  // cross-field invariants
  if (cfg.kernel_mode == "heat" && !cfg.periodic)
    throw std::invalid_argument("config: kernel.mode=heat requires domain.periodic=true");
  if (cfg.coupling_preset == "beltrami" && cfg.dim != 2)
    throw std::invalid_argument("config: coupling.preset=beltrami requires domain.dim=2");
  if (cfg.coupling_preset == "discontinuous" && (cfg.dim != 1 || !cfg.periodic))
    throw std::invalid_argument("config: coupling.preset=discontinuous requires a 1D periodic domain");
  if (cfg.coupling_preset == "file" && cfg.coupling_file.empty())
    throw std::invalid_argument("config: coupling.preset=file requires coupling.file");
  if (cfg.endpoint_mode == "penalization" && !(cfg.beta > 0.0))
    throw std::invalid_argument("config: endpoint.mode=penalization requires endpoint.beta");
  for (int k : cfg.slices)
    if (k < 0 || k > cfg.steps)
      throw std::invalid_argument("config: output.slices entries must lie in [0, time.steps]");
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

} // namespace gflow
