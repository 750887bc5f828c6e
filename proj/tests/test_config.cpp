#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "gflow/config.hpp"

using namespace gflow;

#ifndef GFLOW_PRESET_DIR
#define GFLOW_PRESET_DIR "presets"
#endif

TEST_CASE("the fig3 preset file parses to the 1D reflection experiment") {
  const RunConfig cfg = load_config(std::string(GFLOW_PRESET_DIR) + "/fig3.cfg");
  CHECK(cfg.dim == 1);
  CHECK_FALSE(cfg.periodic);
  CHECK(cfg.m == 200);
  CHECK(cfg.epsilon == 1e-3);
  CHECK(cfg.steps == 16);
  CHECK(cfg.eta == 1e-4);
  CHECK(cfg.coupling_preset == "reflection");
  CHECK(cfg.kernel_mode == "gaussian");
  CHECK(cfg.endpoint_mode == "constraint");
}

TEST_CASE("every shipped preset parses") {
  for (const char* name : {"fig3", "fig4", "fig5", "beltrami09", "beltrami13",
                           "beltrami09-desk", "beltrami13-desk"}) {
    CHECK_NOTHROW(load_config(std::string(GFLOW_PRESET_DIR) + "/" + name + ".cfg"));
  }
}

TEST_CASE("defaults and comments") {
  const RunConfig cfg = parse_config("# just a comment\n\n  grid.m = 50 # trailing\n");
  CHECK(cfg.m == 50);
  CHECK(cfg.dim == 1);
  CHECK(cfg.eta == 1e-4);
  CHECK(cfg.max_sweeps == 10000);
  CHECK(cfg.threads == 1);
  CHECK(cfg.hilbert_include_b);
}

TEST_CASE("slice list defaults to every slice") {
  RunConfig cfg = parse_config("time.steps = 4\n");
  CHECK(cfg.slice_list() == std::vector<int>{0, 1, 2, 3, 4});
  cfg = parse_config("time.steps = 4\noutput.slices = 0, 2, 4\n");
  CHECK(cfg.slice_list() == std::vector<int>{0, 2, 4});
}

TEST_CASE("rejections") {
  CHECK_THROWS_AS(parse_config("kernel.mode = heat\ndomain.periodic = false\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_config("epsilon = 0\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("epsilon = -1e-3\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("no.such.key = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("grid.m = 100\ngrid.m = 100\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("grid.m = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("grid.m = 12.5\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("domain.dim = 3\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("domain.periodic = maybe\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("this is not key value\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("coupling.preset = beltrami\ndomain.dim = 1\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_config("coupling.preset = discontinuous\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("coupling.preset = file\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("endpoint.mode = penalization\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("time.steps = 4\noutput.slices = 0,5\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("stopping.eta = 0\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("threads = 0\n"), std::invalid_argument);
  CHECK_THROWS_AS(load_config("no/such/file.cfg"), std::runtime_error);
}

TEST_CASE("penalization config accepted with beta") {
  const RunConfig cfg =
      parse_config("endpoint.mode = penalization\nendpoint.beta = 100\n");
  CHECK(cfg.endpoint_mode == "penalization");
  CHECK(cfg.beta == 100.0);
}
