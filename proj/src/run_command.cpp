#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rcdens/cli_config.hpp"
#include "rcdens/csv.hpp"
#include "rcdens/errors.hpp"
#include "rcdens/inference.hpp"
#include "rcdens/pipeline.hpp"
#include "rcdens/simlab.hpp"
#include "rcdens/tuning.hpp"

namespace rcdens {

namespace {

namespace fs = std::filesystem;

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("expected comma-separated numbers, got '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("expected a nonempty number list, got '" + text + "'");
  return out;
}

Eigen::VectorXd column_medians(const Eigen::MatrixXd& x) {
  Eigen::VectorXd med(x.cols());
  std::vector<double> column(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) column[i] = x(i, j);
    std::sort(column.begin(), column.end());
    const std::size_t n = column.size();
    med(j) = n % 2 == 1 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return med;
}

Eigen::VectorXd resolve_test_point(const RunConfig& config, const Dataset& data) {
  if (config.test_point == "median") return column_medians(data.x);
  const std::vector<double> values = parse_number_list(config.test_point);
  if (static_cast<Eigen::Index>(values.size()) != data.dim()) {
    throw ConfigError("test_point has " + std::to_string(values.size()) +
                      " entries but the data has " + std::to_string(data.dim()) + " controls");
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
}

FitConfig to_fit_config(const RunConfig& config, bool inference) {
  FitConfig fit;
  fit.K1 = config.K1;
  fit.K2 = config.K2;
  fit.sigma_t = config.sigma_t;
  fit.M = config.M;
  fit.mode = config.mode == "orthogonal_w" ? FitConfig::Mode::orthogonal_w
                                           : FitConfig::Mode::plain;
  fit.inference = inference;
  fit.seed = config.seed;
  fit.n_trees = config.n_trees;
  fit.min_leaf = config.min_leaf;
  fit.w_average_max = config.w_average_max;
  return fit;
}

//! Tracks emitted files so a numeric failure leaves no partial output behind.
struct OutputTracker {
  std::vector<fs::path> written;

  fs::path target(const RunConfig& config, const std::string& name) {
    fs::create_directories(config.output_dir);
    fs::path p = fs::path(config.output_dir) / name;
    written.push_back(p);
    return p;
  }

  void remove_partial() {
    for (const auto& p : written) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
};

void write_metadata(OutputTracker& tracker, const RunConfig& config,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
  std::ofstream out(tracker.target(config, "metadata.txt"));
  auto put = [&out](const std::string& key, const std::string& value) {
    out << key << " = " << value << "\n";
  };
  const char* names[] = {"simulate", "fit", "band", "cv", "importance", "marginal"};
  put("command", names[static_cast<int>(config.command)]);
  if (!config.input_path.empty()) put("input", config.input_path);
  put("output_dir", config.output_dir);
  put("K1", std::to_string(config.K1));
  put("K2", std::to_string(config.K2));
  put("sigma_t", format_double(config.sigma_t));
  put("M", std::to_string(config.M));
  put("mode", config.mode);
  put("n_trees", std::to_string(config.n_trees));
  put("min_leaf", std::to_string(config.min_leaf));
  put("seed", std::to_string(config.seed));
  put("grid", config.grid);
  for (const auto& [key, value] : extra) put(key, value);
  if (!out) throw DataError("failed writing metadata.txt");
}

std::string vector_to_string(const Eigen::VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += format_double(v(i));
  }
  return s;
}

using Extras = std::vector<std::pair<std::string, std::string>>;

Extras model_diagnostics(const ConditionalDensityModel& model) {
  return {{"q_min_eig", format_double(model.q().min_eig)},
          {"q_ridge_used", format_double(model.q().ridge_used)}};
}

void run_simulate(const RunConfig& config, OutputTracker& tracker) {
  DgpSpec spec;
  spec.kind = config.kind == "dgp2" ? DgpSpec::Kind::dgp2 : DgpSpec::Kind::dgp1;
  spec.n = config.n;
  spec.p = config.p;
  spec.seed = config.seed;

  if (config.reps >= 2) {
    const Eigen::VectorXd grid = parse_grid_spec(config.grid);
    const Eigen::VectorXd test_point = default_test_point(config.p);
    const McReport report =
        run_monte_carlo(spec, to_fit_config(config, false), config.reps, test_point, grid);
    CsvWriter writer(tracker.target(config, "mc_report.csv").string(),
                     {"b1", "truth", "median", "q05", "q95"});
    for (Eigen::Index j = 0; j < grid.size(); ++j) {
      writer.row({grid(j), report.true_density(j), report.median_curve(j), report.q05_curve(j),
                  report.q95_curve(j)});
    }
    writer.close();
    Extras extra{{"kind", config.kind},
                 {"n", std::to_string(config.n)},
                 {"reps", std::to_string(config.reps)},
                 {"failed_reps", std::to_string(report.failed_reps)},
                 {"test_point_resolved", vector_to_string(default_test_point(config.p))},
                 {"median_ise", format_double(report.ise.size() ? report.ise(report.ise.size() / 2) : 0.0)}};
    write_metadata(tracker, config, extra);
    return;
  }

  write_dataset_csv(tracker.target(config, "data.csv").string(), generate(spec));
  write_metadata(tracker, config,
                 {{"kind", config.kind},
                  {"n", std::to_string(config.n)},
                  {"p", std::to_string(config.p)}});
}

void run_fit(const RunConfig& config, OutputTracker& tracker) {
  const Dataset data = load_dataset_csv(config.input_path);
  const Eigen::VectorXd x = resolve_test_point(config, data);
  const ConditionalDensityModel model = fit_conditional_density(data, to_fit_config(config, false));
  const Eigen::VectorXd grid = parse_grid_spec(config.grid);
  const DensityEvaluation eval = evaluate_density(model, x, grid, grid);

  CsvWriter writer(tracker.target(config, "density.csv").string(), {"b0", "b1", "value"});
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    for (Eigen::Index j = 0; j < grid.size(); ++j) {
      writer.row({grid(i), grid(j), eval.values(i, j)});
    }
  }
  writer.close();

  Extras extra = model_diagnostics(model);
  extra.emplace_back("test_point_resolved", vector_to_string(x));
  extra.emplace_back("imag_residual", format_double(eval.imag_residual));
  write_metadata(tracker, config, extra);
}

void run_band(const RunConfig& config, OutputTracker& tracker) {
  const Dataset data = load_dataset_csv(config.input_path);
  const Eigen::VectorXd x = resolve_test_point(config, data);
  const ConditionalDensityModel model = fit_conditional_density(data, to_fit_config(config, true));
  const Eigen::VectorXd grid = parse_grid_spec(config.grid);
  const DensityBand band = confidence_band(model, x, grid, config.alpha);

  CsvWriter writer(tracker.target(config, "band.csv").string(),
                   {"b1", "point", "lower", "upper"});
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    writer.row({grid(j), band.point(j), band.lower(j), band.upper(j)});
  }
  writer.close();

  Extras extra = model_diagnostics(model);
  extra.emplace_back("test_point_resolved", vector_to_string(x));
  extra.emplace_back("alpha", format_double(config.alpha));
  write_metadata(tracker, config, extra);
}

void run_cv(const RunConfig& config, OutputTracker& tracker) {
  const Dataset data = load_dataset_csv(config.input_path);
  const Eigen::VectorXd x = resolve_test_point(config, data);
  std::vector<int> k2_values;
  for (double v : parse_number_list(config.k2_grid)) k2_values.push_back(static_cast<int>(v));
  const std::vector<double> sigma_values = parse_number_list(config.sigma_grid);
  const TuningGrid grid = select_tuning(data, k2_values, sigma_values, x, to_fit_config(config, false));

  CsvWriter writer(tracker.target(config, "cv_table.csv").string(), {"K2", "sigma_t", "J"});
  for (std::size_t i = 0; i < k2_values.size(); ++i) {
    for (std::size_t j = 0; j < sigma_values.size(); ++j) {
      writer.row({static_cast<double>(k2_values[i]), sigma_values[j],
                  grid.criterion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))});
    }
  }
  writer.raw_row("selected," + std::to_string(grid.selected_K2) + "," +
                 format_double(grid.selected_sigma_t));
  writer.close();

  write_metadata(tracker, config,
                 {{"test_point_resolved", vector_to_string(x)},
                  {"selected_K2", std::to_string(grid.selected_K2)},
                  {"selected_sigma_t", format_double(grid.selected_sigma_t)}});
}

void run_importance(const RunConfig& config, OutputTracker& tracker) {
  const Dataset data = load_dataset_csv(config.input_path);
  const ConditionalDensityModel model = fit_conditional_density(data, to_fit_config(config, false));
  const VariableImportance vi = variable_importance(model);

  CsvWriter writer(tracker.target(config, "importance.csv").string(),
                   {"feature", "VI_shape", "VI_mean"});
  for (Eigen::Index j = 0; j < vi.shape.size(); ++j) {
    writer.raw_row("X" + std::to_string(j + 1) + "," + format_double(vi.shape(j)) + "," +
                   format_double(vi.mean(j)));
  }
  writer.close();
  write_metadata(tracker, config, model_diagnostics(model));
}

void run_marginal(const RunConfig& config, OutputTracker& tracker) {
  const Dataset data = load_dataset_csv(config.input_path);
  const ConditionalDensityModel model = fit_conditional_density(data, to_fit_config(config, false));
  const Eigen::VectorXd grid = parse_grid_spec(config.grid);
  const MarginalResult marginal = marginal_density(model, data, grid);

  CsvWriter writer(tracker.target(config, "marginal.csv").string(), {"b1", "value"});
  for (Eigen::Index j = 0; j < grid.size(); ++j) writer.row({grid(j), marginal.curve(j)});
  writer.close();

  Extras extra = model_diagnostics(model);
  extra.emplace_back("degenerate_out_of_fold", std::to_string(marginal.degenerate_count));
  write_metadata(tracker, config, extra);
}

}  // namespace

int run_command(const RunConfig& config) {
  OutputTracker tracker;
  try {
    switch (config.command) {
      case RunConfig::Command::simulate: run_simulate(config, tracker); break;
      case RunConfig::Command::fit: run_fit(config, tracker); break;
      case RunConfig::Command::band: run_band(config, tracker); break;
      case RunConfig::Command::cv: run_cv(config, tracker); break;
      case RunConfig::Command::importance: run_importance(config, tracker); break;
      case RunConfig::Command::marginal: run_marginal(config, tracker); break;
    }
    return 0;
  } catch (const ConfigError& e) {
    tracker.remove_partial();
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    tracker.remove_partial();
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    tracker.remove_partial();
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace rcdens
