#include "rcdens/cli_config.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "rcdens/errors.hpp"

namespace rcdens {

namespace {

RunConfig::Command command_from_name(const std::string& name) {
  if (name == "simulate") return RunConfig::Command::simulate;
  if (name == "fit") return RunConfig::Command::fit;
  if (name == "band") return RunConfig::Command::band;
  if (name == "cv") return RunConfig::Command::cv;
  if (name == "importance") return RunConfig::Command::importance;
  if (name == "marginal") return RunConfig::Command::marginal;
  throw ConfigError("unknown command '" + name +
                    "' (expected simulate|fit|band|cv|importance|marginal)");
}

std::string strip(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

//! key = value lines, '#' comments, UTF-8.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + " is not 'key = value'");
    }
    result[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
  }
  return result;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  if constexpr (std::is_floating_point_v<T>) {
    char* end = nullptr;
    value = static_cast<T>(std::strtod(text.c_str(), &end));
    if (end != text.c_str() + text.size() || text.empty()) {
      throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
    }
  } else {
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw ConfigError("config key '" + key + "': expected an integer, got '" + text + "'");
    }
  }
  return value;
}

void apply_file_values(RunConfig& config, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    if (key == "input") config.input_path = value;
    else if (key == "output_dir") config.output_dir = value;
    else if (key == "K1") config.K1 = parse_number<int>(key, value);
    else if (key == "K2") config.K2 = parse_number<int>(key, value);
    else if (key == "sigma_t") config.sigma_t = parse_number<double>(key, value);
    else if (key == "M") config.M = parse_number<int>(key, value);
    else if (key == "mode") config.mode = value;
    else if (key == "n_trees") config.n_trees = parse_number<int>(key, value);
    else if (key == "min_leaf") config.min_leaf = parse_number<int>(key, value);
    else if (key == "seed") config.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "alpha") config.alpha = parse_number<double>(key, value);
    else if (key == "test_point") config.test_point = value;
    else if (key == "grid") config.grid = value;
    else if (key == "kind") config.kind = value;
    else if (key == "n") config.n = parse_number<int>(key, value);
    else if (key == "p") config.p = parse_number<int>(key, value);
    else if (key == "reps") config.reps = parse_number<int>(key, value);
    else if (key == "k2_grid") config.k2_grid = value;
    else if (key == "sigma_grid") config.sigma_grid = value;
    else if (key == "w_average_max") config.w_average_max = parse_number<int>(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

void validate(const RunConfig& config) {
  const bool needs_input = config.command != RunConfig::Command::simulate;
  if (needs_input && config.input_path.empty()) {
    throw ConfigError("missing required key 'input' for this command");
  }
  if (config.K1 < 1 || config.K2 < 1) throw ConfigError("K1 and K2 must be >= 1");
  if (!(config.sigma_t > 0.0)) throw ConfigError("sigma_t must be positive");
  if (config.M < 1) throw ConfigError("M must be >= 1");
  if (config.mode != "plain" && config.mode != "orthogonal_w") {
    throw ConfigError("mode must be 'plain' or 'orthogonal_w'");
  }
  if (config.n_trees < 1) throw ConfigError("n_trees must be >= 1");
  if (config.min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
  if (!(config.alpha > 0.0 && config.alpha <= 0.5)) {
    throw ConfigError("alpha must be in (0, 0.5]");
  }
  if (config.kind != "dgp1" && config.kind != "dgp2") {
    throw ConfigError("kind must be 'dgp1' or 'dgp2'");
  }
  if (config.n < 1) throw ConfigError("n must be >= 1");
  if (config.p < 3) throw ConfigError("p must be >= 3");
  if (config.reps < 1) throw ConfigError("reps must be >= 1");
  parse_grid_spec(config.grid);
}

}  // namespace

Eigen::VectorXd parse_grid_spec(const std::string& spec) {
  const auto c1 = spec.find(':');
  const auto c2 = spec.rfind(':');
  if (c1 == std::string::npos || c2 == c1) {
    throw ConfigError("grid spec must be lo:hi:step, got '" + spec + "'");
  }
  const double lo = parse_number<double>("grid", spec.substr(0, c1));
  const double hi = parse_number<double>("grid", spec.substr(c1 + 1, c2 - c1 - 1));
  const double step = parse_number<double>("grid", spec.substr(c2 + 1));
  if (!(step > 0.0) || !(hi > lo)) throw ConfigError("grid spec needs hi > lo and step > 0");
  const int count = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
  Eigen::VectorXd grid(count);
  for (int i = 0; i < count; ++i) grid(i) = lo + step * i;
  return grid;
}

RunConfig parse_config(int argc, const char* const* argv) {
  if (argc < 2) throw ConfigError("usage: rcdens <command> [--config FILE] [--key value ...]");
  RunConfig config;
  config.command = command_from_name(argv[1]);

  CLI::App app{"conditional random-coefficient density estimation"};
  std::string config_file;
  app.add_option("--config", config_file, "key = value config file (CLI flags win)");
  app.add_option("--input", config.input_path);
  app.add_option("--output_dir", config.output_dir);
  app.add_option("--K1", config.K1);
  app.add_option("--K2", config.K2);
  app.add_option("--sigma_t", config.sigma_t);
  app.add_option("--M", config.M);
  app.add_option("--mode", config.mode);
  app.add_option("--n_trees", config.n_trees);
  app.add_option("--min_leaf", config.min_leaf);
  app.add_option("--seed", config.seed);
  app.add_option("--alpha", config.alpha);
  app.add_option("--test_point", config.test_point);
  app.add_option("--grid", config.grid);
  app.add_option("--kind", config.kind);
  app.add_option("--n", config.n);
  app.add_option("--p", config.p);
  app.add_option("--reps", config.reps);
  app.add_option("--k2_grid", config.k2_grid);
  app.add_option("--sigma_grid", config.sigma_grid);
  app.add_option("--w_average_max", config.w_average_max);

  std::vector<std::string> args;
  for (int i = argc - 1; i >= 2; --i) args.emplace_back(argv[i]);

  // Two passes: locate --config first, apply the file, then let CLI override.
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    throw ConfigError(std::string("argument error: ") + e.what());
  }
  if (!config_file.empty()) {
    RunConfig base;
    base.command = config.command;
    apply_file_values(base, read_config_file(config_file));
    config = base;
    std::vector<std::string> again;
    for (int i = argc - 1; i >= 2; --i) again.emplace_back(argv[i]);
    try {
      app.parse(again);
    } catch (const CLI::ParseError& e) {
      throw ConfigError(std::string("argument error: ") + e.what());
    }
  }
  validate(config);
  return config;
}

}  // namespace rcdens
