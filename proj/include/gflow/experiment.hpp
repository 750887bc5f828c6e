#pragma once

// Configuration-driven experiment runner: builds the problem, runs the
// solver, emits images / traces / checkpoints, and writes a JSON manifest
// listing every artifact with its content hash.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gflow/beltrami.hpp"
#include "gflow/config.hpp"
#include "gflow/coupling.hpp"
#include "gflow/grid.hpp"
#include "gflow/io.hpp"
#include "gflow/kernels.hpp"
#include "gflow/observables.hpp"
#include "gflow/sinkhorn.hpp"

namespace gflow {

inline const char* version_string() { return "0.1.0"; }

inline Grid make_grid(const RunConfig& cfg) {
  Domain dom;
  dom.dim = cfg.dim;
  dom.periodic = cfg.periodic;
  dom.side = 1.0;
  return Grid(dom, cfg.m);
}

inline FinalConfiguration make_final_configuration(const RunConfig& cfg, const Grid& grid) {
  if (cfg.coupling_preset == "identity") return FinalConfiguration::identity(grid);
  if (cfg.coupling_preset == "reflection") return FinalConfiguration::reflection(grid);
  if (cfg.coupling_preset == "discontinuous") return FinalConfiguration::discontinuous(grid);
  if (cfg.coupling_preset == "beltrami") return beltrami::flow_map(cfg.horizon, grid);
  throw std::invalid_argument("make_final_configuration: preset '" + cfg.coupling_preset +
                              "' has no map form");
}

inline Problem make_problem(const RunConfig& cfg) {
  Problem pr;
  pr.grid = make_grid(cfg);
  pr.N = cfg.steps;
  pr.T = cfg.horizon;
  pr.eps = cfg.epsilon;
  pr.kernel = cfg.kernel_mode == "heat"
                  ? heat_kernel(pr.grid, cfg.epsilon * cfg.horizon / cfg.steps)
                  : gaussian_kernel(pr.grid, cfg.epsilon, cfg.horizon, cfg.steps);
  pr.stopping.eta = cfg.eta;
  pr.stopping.max_sweeps = cfg.max_sweeps;
  pr.stopping.include_b = cfg.hilbert_include_b;
  pr.threads = cfg.threads;

  if (cfg.endpoint_mode == "penalization") {
    pr.mode = EndpointMode::penalization;
    const FinalConfiguration f = make_final_configuration(cfg, pr.grid);
    pr.beta_weights = penalized_endpoint_kernel(pr.grid, f.image, cfg.beta, cfg.epsilon);
  } else {
    pr.mode = EndpointMode::constraint;
    if (cfg.coupling_preset == "file")
      pr.pi = load_coupling(pr.grid, cfg.coupling_file);
    else
      pr.pi = coupling_from_map(pr.grid, make_final_configuration(cfg, pr.grid),
                                cfg.coupling_tolerance);
  }
  return pr;
}

struct Manifest {
  nlohmann::json j;
  std::string path;
};

// Run one experiment into cfg.output_dir. On solver failure the manifest is
// still written, marked failed.
inline Manifest run_experiment(const RunConfig& cfg, const std::string& config_text = "") {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const auto artifact = [&](const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
  };

  nlohmann::json man;
  man["version"] = version_string();
  man["config"] = {{"dim", cfg.dim},
                   {"periodic", cfg.periodic},
                   {"m", cfg.m},
                   {"horizon", cfg.horizon},
                   {"steps", cfg.steps},
                   {"epsilon", cfg.epsilon},
                   {"kernel_mode", cfg.kernel_mode},
                   {"coupling_preset", cfg.coupling_preset},
                   {"endpoint_mode", cfg.endpoint_mode},
                   {"beta", cfg.beta},
                   {"eta", cfg.eta},
                   {"max_sweeps", cfg.max_sweeps},
                   {"seed", cfg.seed},
                   {"threads", cfg.threads}};
  if (!config_text.empty()) man["config_text"] = config_text;
  man["artifacts"] = nlohmann::json::object();
  man["normalization"] = nlohmann::json::object();

  const auto t0 = std::chrono::steady_clock::now();
  const auto finish = [&](bool failed, const std::string& error) {
    man["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    man["failed"] = failed;
    if (!error.empty()) man["error"] = error;
    Manifest out;
    out.path = artifact("manifest.json");
    std::ofstream f(out.path);
    f << man.dump(2) << "\n";
    out.j = man;
    return out;
  };

  try {
    const Problem pr = make_problem(cfg);
    const Solution sol = run(pr);

    man["converged"] = sol.converged;
    man["sweeps"] = sol.sweeps;
    man["max_marginal_gap"] = sol.max_marginal_gap;
    man["endpoint_gap"] = sol.endpoint_gap;

    const auto add = [&](const std::string& name) {
      man["artifacts"][name] = file_hash(artifact(name));
    };

    write_trace_csv(artifact("trace.csv"), sol.trace);
    add("trace.csv");
    save_potentials(artifact("potentials.bin"), pr, sol.pot);
    add("potentials.bin");

    for (int k : cfg.slice_list()) {
      const TwoPointMarginal tp = two_point_marginal(pr, sol.pot, k);
      std::ostringstream tag;
      tag << "slice" << k;
      if (cfg.dim == 1) {
        const std::string pgm = tag.str() + ".pgm";
        man["normalization"][pgm] = write_two_point_pgm(artifact(pgm), tp.P);
        add(pgm);
        const std::string csv = tag.str() + ".csv";
        write_pair_csv(artifact(csv), tp.P);
        add(csv);
      } else {
        const ColorFields cf = color_fields_from(pr.grid, tp);
        const ColorFields classical = beltrami::classical_color_tracking(
            cfg.horizon * k / cfg.steps, pr.grid);
        const std::string base = tag.str();
        write_rgb_ppm(artifact(base + "_classical.ppm"), classical, pr.grid);
        add(base + "_classical.ppm");
        write_rgb_ppm(artifact(base + "_sum.ppm"), cf, pr.grid);
        add(base + "_sum.ppm");
        man["normalization"][base + "_red.ppm"] =
            write_color_ppm(artifact(base + "_red.ppm"), cf.red, pr.grid, 1, 0, 0);
        add(base + "_red.ppm");
        man["normalization"][base + "_green.ppm"] =
            write_color_ppm(artifact(base + "_green.ppm"), cf.green, pr.grid, 0, 1, 0);
        add(base + "_green.ppm");
        man["normalization"][base + "_blue.ppm"] =
            write_color_ppm(artifact(base + "_blue.ppm"), cf.blue, pr.grid, 0, 0, 1);
        add(base + "_blue.ppm");
        write_field_csv(artifact(base + "_red.csv"), cf.red);
        add(base + "_red.csv");
        write_field_csv(artifact(base + "_green.csv"), cf.green);
        add(base + "_green.csv");
        write_field_csv(artifact(base + "_blue.csv"), cf.blue);
        add(base + "_blue.csv");
      }
    }
    return finish(false, "");
  } catch (const std::exception& e) {
    return finish(true, e.what());
  }
}

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
};

// Machine-readable invariant checks. "fast" covers grid and kernel
// invariants; "full" adds the small dense-oracle-free solver checks.
inline std::vector<CheckResult> run_checks(const std::string& suite) {
  if (suite != "fast" && suite != "full")
    throw std::invalid_argument("run_checks: suite must be fast or full");
  std::vector<CheckResult> out;
  const auto record = [&](const std::string& name, double value, double threshold, bool pass) {
    out.push_back({name, pass, value, threshold});
  };

  { // grid reflection closure and distance bound on the torus
    Grid g(Domain{1, true, 1.0}, 16);
    bool closed = true;
    for (int i = 0; i < g.cells(); ++i) {
      const double rx = g.domain.side - g.point(i)[0];
      if (std::fabs(g.point(g.reflect(i))[0] - rx) > 1e-12) closed = false;
    }
    record("grid.reflection_closure", closed ? 0.0 : 1.0, 0.5, closed);
    double dmax = 0.0;
    for (int i = 0; i < g.cells(); ++i)
      for (int j = 0; j < g.cells(); ++j)
        dmax = std::max(dmax, distance(g.point(i), g.point(j), g.domain));
    record("grid.torus_half_period_bound", dmax, 0.5 + 1e-12, dmax <= 0.5 + 1e-12);
  }
  { // heat-kernel row stochasticity and symmetry
    Grid g(Domain{1, true, 1.0}, 64);
    const ProductKernel pk = heat_kernel(g, 0.01);
    double worst = 0.0;
    for (int i = 0; i < g.m; ++i)
      worst = std::max(worst, std::fabs(pk.axes[0].weighted_row_sum(i, g.spacing()) - 1.0));
    record("kernels.heat_row_stochastic", worst, 1e-10, worst <= 1e-10);
    double asym = 0.0;
    for (int i = 0; i < g.m; ++i)
      for (int j = 0; j < g.m; ++j)
        asym = std::max(asym, std::fabs(pk.axes[0].at(i, j) - pk.axes[0].at(j, i)));
    record("kernels.axis_symmetry", asym, 0.0, asym == 0.0);
  }
  { // sandwich constants at small times
    Grid g(Domain{1, true, 1.0}, 64);
    const auto [lo, hi] = kernel_sandwich_check(g, {1e-4, 1e-3, 1e-2, 1e-1});
    record("kernels.sandwich_lambda_hat", lo, 1.0, lo >= 1.0 - 1e-12);
    record("kernels.sandwich_Lambda_hat", hi, 3.0, hi <= 3.0);
  }
  if (suite == "full") {
    // small reflection solve: feasibility after convergence
    RunConfig cfg;
    cfg.dim = 1;
    cfg.m = 24;
    cfg.steps = 4;
    cfg.epsilon = 1e-2;
    cfg.kernel_mode = "gaussian";
    cfg.coupling_preset = "reflection";
    const Problem pr = make_problem(cfg);
    const Solution sol = run(pr);
    record("sinkhorn.converged", sol.converged ? 0.0 : 1.0, 0.5, sol.converged);
    record("sinkhorn.endpoint_gap", sol.endpoint_gap, 1e-10, sol.endpoint_gap <= 1e-10);
    record("sinkhorn.interior_gap", sol.max_marginal_gap, 1e-3, sol.max_marginal_gap <= 1e-3);
  }
  return out;
}

} // namespace gflow
