#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace rcdens {

//! Batch-run configuration: defaults, overridden by a key=value config file,
//! overridden by command-line flags (CLI wins).
struct RunConfig {
  enum class Command { simulate, fit, band, cv, importance, marginal };
  Command command = Command::fit;

  std::string input_path;
  std::string output_dir = ".";
  int K1 = 3;
  int K2 = 3;
  double sigma_t = 1.0;
  int M = 1;
  std::string mode = "plain";  // plain | orthogonal_w
  int n_trees = 2000;
  int min_leaf = 5;
  std::uint64_t seed = 0;
  double alpha = 0.1;
  std::string test_point = "median";  // "median" or comma-separated vector
  std::string grid = "-8:8:0.05";     // lo:hi:step

  // simulate
  std::string kind = "dgp1";
  int n = 1000;
  int p = 10;
  int reps = 1;

  // cv
  std::string k2_grid = "3,5,7";
  std::string sigma_grid = "1";

  int w_average_max = 0;
};

//! Parses command + flags (+ optional --config file). Throws ConfigError on
//! unknown keys, type mismatches or out-of-range values.
RunConfig parse_config(int argc, const char* const* argv);

//! "lo:hi:step" -> inclusive uniform grid.
Eigen::VectorXd parse_grid_spec(const std::string& spec);

//! Executes the configured command; returns the process exit code
//! (0 success, 2 config, 3 data, 4 numeric failure).
int run_command(const RunConfig& config);

}  // namespace rcdens
