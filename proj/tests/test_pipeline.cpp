#include "rcdens/pipeline.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "dgp1_oracle.hpp"
#include "rcdens/errors.hpp"
#include "rcdens/simlab.hpp"

using namespace rcdens;

namespace {

Eigen::VectorXd uniform_grid(double lo, double hi, double step) {
  const int n = static_cast<int>(std::round((hi - lo) / step)) + 1;
  Eigen::VectorXd grid(n);
  for (int i = 0; i < n; ++i) grid(i) = lo + step * i;
  return grid;
}

Dataset linear_outcome_data(int n, int d, unsigned seed, double intercept, double slope) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset data;
  data.x.resize(n, d);
  data.w.resize(n);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.x(i, j) = gauss(rng);
    data.w(i) = gauss(rng);
    data.y(i) = intercept + slope * data.w(i);
  }
  return data;
}

//! B independent of X: B0 ~ N(0, 0.5), B1 the dgp1 mixture, W ~ N(0,1).
Dataset independent_coefficients_data(int n, int d, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset data;
  data.x.resize(n, d);
  data.w.resize(n);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.x(i, j) = gauss(rng);
    data.w(i) = gauss(rng);
    const double b0 = 0.5 * gauss(rng);
    const double b1 = unif(rng) < 0.5 ? -1.5 + gauss(rng) : 1.5 + std::sqrt(0.5) * gauss(rng);
    data.y(i) = b0 + b1 * data.w(i);
  }
  return data;
}

FitConfig small_config(std::uint64_t seed, int n_trees = 150, int K1 = 2, int K2 = 2) {
  FitConfig config;
  config.K1 = K1;
  config.K2 = K2;
  config.n_trees = n_trees;
  config.seed = seed;
  return config;
}

std::vector<double> strict_local_maxima(const Eigen::VectorXd& grid, const Eigen::VectorXd& f) {
  std::vector<double> modes;
  for (Eigen::Index j = 1; j + 1 < grid.size(); ++j) {
    if (f(j) > f(j - 1) && f(j) > f(j + 1)) modes.push_back(grid(j));
  }
  return modes;
}

}  // namespace

TEST_CASE("estimate_beta on a deterministic linear model") {
  const Dataset data = linear_outcome_data(2000, 5, 21, 2.0, 3.0);
  RegressorParams params;
  params.n_trees = 500;
  params.seed = 5;
  const BetaModel beta = estimate_beta(data, params);
  const auto est = beta.estimate(Eigen::VectorXd::Zero(5));
  CHECK(std::abs(est.beta0 - 2.0) < 0.15);
  CHECK(std::abs(est.beta1 - 3.0) < 0.15);
  CHECK_FALSE(est.denominator_guarded);
}

TEST_CASE("estimate_beta is flat when coefficients are independent of X") {
  const Dataset data = independent_coefficients_data(2000, 4, 22);
  RegressorParams params;
  params.n_trees = 400;
  params.seed = 6;
  const BetaModel beta = estimate_beta(data, params);
  for (double shift : {-0.5, 0.0, 0.5}) {
    const auto est = beta.estimate(Eigen::VectorXd::Constant(4, shift));
    CHECK(std::abs(est.beta1) < 0.25);
  }
}

TEST_CASE("estimate_beta recovers the dgp1 conditional slope mean") {
  std::vector<double> errors;
  for (int rep = 0; rep < 20; ++rep) {
    const Dataset data = generate_dgp1(4000, 10, 4000 + rep);
    RegressorParams params;
    params.n_trees = 500;
    params.seed = 40 + rep;
    const BetaModel beta = estimate_beta(data, params);
    errors.push_back(beta.estimate(default_test_point(10)).beta1 - 0.3);
  }
  std::sort(errors.begin(), errors.end(),
            [](double a, double b) { return std::abs(a) < std::abs(b); });
  CHECK(std::abs(errors[10]) < 0.25);
}

TEST_CASE("estimate_beta guards a degenerate conditional variance") {
  // A constant regressor collapses E[W^2|x] - E[W|x]^2 to exactly zero; the
  // floor must flag the point and still return finite values.
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset data;
  const int n = 400;
  data.x.resize(n, 3);
  data.w = Eigen::VectorXd::Constant(n, 1.3);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) data.x(i, j) = gauss(rng);
    data.y(i) = 2.0 + 3.0 * data.w(i);
  }
  RegressorParams params;
  params.n_trees = 100;
  params.seed = 3;
  const BetaModel beta = estimate_beta(data, params);
  const auto est = beta.estimate(Eigen::VectorXd::Zero(3));
  CHECK(est.denominator_guarded);
  CHECK(std::isfinite(est.beta1));
  CHECK(std::isfinite(est.beta0));
}

TEST_CASE("split discipline and subsample partitions") {
  const Dataset data = generate_dgp1(300, 5, 11);
  FitConfig config = small_config(77, 80, 2, 2);
  config.M = 3;
  config.inference = true;
  const ConditionalDensityModel model = fit_conditional_density(data, config);

  for (int m = 0; m < model.n_splits(); ++m) {
    const SplitRecord& split = model.split(m);
    std::set<int> d_set(split.d_indices.begin(), split.d_indices.end());
    for (int i : split.r_indices) CHECK(d_set.count(i) == 0);
    CHECK(split.d_indices.size() + split.r_indices.size() == 300);
    CHECK(split.d_indices.size() == 150);

    // Disjoint per-coefficient subsamples covering floor(|R|/K) each.
    const int K = model.basis().size();
    std::vector<int> counts(K, 0);
    for (int label : split.coef_subsample) {
      if (label >= 0) ++counts[label];
    }
    for (int k = 0; k < K; ++k) CHECK(counts[k] == 150 / K);
  }
}

TEST_CASE("inference mode rejects blocks too small to fit") {
  const Dataset data = generate_dgp1(100, 5, 12);
  FitConfig config = small_config(78, 60, 3, 3);
  config.inference = true;
  CHECK_THROWS_WITH_AS(fit_conditional_density(data, config),
                       doctest::Contains("requires n"), ConfigError);
}

TEST_CASE("degenerate outcome concentrates the density at the origin") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset data;
  const int n = 300;
  data.x.resize(n, 4);
  data.w.resize(n);
  data.y = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) data.x(i, j) = gauss(rng);
    data.w(i) = gauss(rng);
  }
  FitConfig config = small_config(5, 100, 3, 3);
  const ConditionalDensityModel model = fit_conditional_density(data, config);
  const Eigen::VectorXd grid = uniform_grid(-2.0, 2.0, 0.1);
  const DensityEvaluation eval =
      evaluate_density(model, Eigen::VectorXd::Zero(4), grid, grid);
  Eigen::Index i0 = 0;
  Eigen::Index i1 = 0;
  eval.values.maxCoeff(&i0, &i1);
  CHECK(std::abs(grid(i0)) <= 0.3);
  CHECK(std::abs(grid(i1)) <= 0.3);
}

TEST_CASE("dgp1 fit at the paper scale: bimodal with unit slope mass") {
  const Dataset data = generate_dgp1(1000, 10, 314);
  FitConfig config;
  config.K1 = 3;
  config.K2 = 3;
  config.sigma_t = 1.0;
  config.M = 1;
  config.n_trees = 2000;
  config.seed = 2718;
  const ConditionalDensityModel model = fit_conditional_density(data, config);
  const Eigen::VectorXd x = default_test_point(10);

  const Eigen::VectorXd grid = uniform_grid(-5.0, 5.0, 0.05);
  const Eigen::VectorXd slope = evaluate_slope_density(model, x, grid);
  const std::vector<double> modes = strict_local_maxima(grid, slope);
  CHECK(modes.size() == 2);

  // Slope marginal mass within the no-normalization diagnostic bound.
  const Eigen::VectorXd wide = default_b1_grid();
  const Eigen::VectorXd slope_wide = evaluate_slope_density(model, x, wide);
  double mass = 0.0;
  for (Eigen::Index j = 0; j + 1 < wide.size(); ++j) {
    mass += 0.5 * (slope_wide(j) + slope_wide(j + 1)) * (wide(j + 1) - wide(j));
  }
  CHECK(std::abs(mass - 1.0) <= 0.15);

  // Imaginary residual diagnostic of the bivariate evaluation.
  const Eigen::VectorXd b0_grid = uniform_grid(-6.0, 6.0, 0.1);
  const DensityEvaluation eval = evaluate_density(model, x, b0_grid, grid);
  CHECK(eval.imag_residual < 0.10);

  // The analytic intercept integral agrees with numeric b0-integration.
  Eigen::VectorXd numeric = Eigen::VectorXd::Zero(grid.size());
  const Eigen::VectorXd b0_fine = uniform_grid(-9.0, 9.0, 0.05);
  const DensityEvaluation fine = evaluate_density(model, x, b0_fine, grid);
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    for (Eigen::Index i = 0; i + 1 < b0_fine.size(); ++i) {
      numeric(j) += 0.5 * 0.05 * (fine.values(i, j) + fine.values(i + 1, j));
    }
  }
  CHECK((numeric - slope).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("shift equivariance with an injected outcome oracle") {
  const double shift = 1.5;
  Dataset data = generate_dgp1(400, 5, 99);
  FitConfig config = small_config(31, 100, 2, 2);
  config.hooks.m_override = [](const Eigen::VectorXd& x, double w) {
    return std::sin(x(0)) + (x(1) + 0.5 * x(2) + 0.25 * x(1) * x(2)) * w;
  };
  const ConditionalDensityModel base = fit_conditional_density(data, config);

  Dataset shifted = data;
  shifted.y.array() += shift;
  FitConfig shifted_config = config;
  shifted_config.hooks.m_override = [=](const Eigen::VectorXd& x, double w) {
    return shift + std::sin(x(0)) + (x(1) + 0.5 * x(2) + 0.25 * x(1) * x(2)) * w;
  };
  const ConditionalDensityModel moved = fit_conditional_density(shifted, shifted_config);

  // The demeaned outcomes agree to rounding, so the oracle-level targets are
  // invariant; the coefficient records differ only through epsilon-level
  // split flips in the forests.
  auto m0 = [](const Eigen::VectorXd& xr, double w) {
    return std::sin(xr(0)) + (xr(1) + 0.5 * xr(2) + 0.25 * xr(1) * xr(2)) * w;
  };
  double worst = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const Eigen::VectorXd xr = data.x.row(i).transpose();
    const double base_resid = data.y(i) - m0(xr, data.w(i));
    const double moved_resid = shifted.y(i) - (shift + m0(xr, data.w(i)));
    worst = std::max(worst, std::abs(base_resid - moved_resid));
  }
  CHECK(worst < 1e-12);

  const Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
  const Eigen::VectorXcd pi_base = base.pi_record(0, x).pi;
  const Eigen::VectorXcd pi_moved = moved.pi_record(0, x).pi;
  CHECK((pi_base - pi_moved).cwiseAbs().maxCoeff() < 0.02);

  // The fitted intercept absorbs the shift up to the noise the shifted
  // moment targets add to the beta forests.
  CHECK(std::abs(moved.beta(x).beta0 - base.beta(x).beta0 - shift) < 0.6);
}

TEST_CASE("density is linear in the coefficient vector") {
  const Dataset data = generate_dgp1(300, 4, 55);
  const HermiteBasis basis(2, 2);
  Eigen::VectorXcd pi0(basis.size());
  pi0 << std::complex<double>(0.8, 0.1), std::complex<double>(-0.2, 0.3),
      std::complex<double>(0.05, -0.4), std::complex<double>(0.6, 0.0);

  FitConfig config = small_config(8, 80, 2, 2);
  config.hooks.pi_override = [&](const Eigen::VectorXd&) { return pi0; };
  const ConditionalDensityModel one = fit_conditional_density(data, config);

  FitConfig doubled_config = config;
  doubled_config.hooks.pi_override = [&](const Eigen::VectorXd&) {
    return Eigen::VectorXcd(2.0 * pi0);
  };
  const ConditionalDensityModel two = fit_conditional_density(data, doubled_config);

  const Eigen::VectorXd grid = uniform_grid(-3.0, 3.0, 0.25);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
  const DensityEvaluation f1 = evaluate_density(one, x, grid, grid);
  const DensityEvaluation f2 = evaluate_density(two, x, grid, grid);
  CHECK((f2.values - 2.0 * f1.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross-fitting stabilizes the estimate") {
  const Eigen::VectorXd grid = uniform_grid(-4.0, 4.0, 0.5);
  const Eigen::VectorXd x = default_test_point(5);
  Eigen::MatrixXd single(10, grid.size());
  Eigen::MatrixXd crossfit(10, grid.size());
  for (int rep = 0; rep < 10; ++rep) {
    const Dataset data = generate_dgp1(400, 5, 600 + rep);
    FitConfig config = small_config(100 + rep, 100, 2, 2);
    config.M = 1;
    single.row(rep) = evaluate_slope_density(fit_conditional_density(data, config), x, grid);
    config.M = 10;
    crossfit.row(rep) = evaluate_slope_density(fit_conditional_density(data, config), x, grid);
  }
  // Median pointwise variance across seeds drops under cross-fitting.
  std::vector<double> ratio;
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    const double v1 = (single.col(j).array() - single.col(j).mean()).square().sum();
    const double v10 = (crossfit.col(j).array() - crossfit.col(j).mean()).square().sum();
    ratio.push_back(v10 / std::max(v1, 1e-300));
  }
  std::sort(ratio.begin(), ratio.end());
  CHECK(ratio[ratio.size() / 2] < 1.0);
}

TEST_CASE("orthogonal_w with a constant oracle matches the shifted plain Q") {
  const Dataset data = independent_coefficients_data(400, 3, 33);
  const double g_const = 0.0;
  FitConfig config = small_config(41, 80, 2, 2);
  config.mode = FitConfig::Mode::orthogonal_w;
  config.hooks.g_override = [=](const Eigen::VectorXd&) { return g_const; };
  const ConditionalDensityModel model = fit_conditional_density(data, config);

  const SplitRecord& split = model.split(0);
  Eigen::VectorXd w_r(split.r_indices.size());
  for (std::size_t i = 0; i < split.r_indices.size(); ++i) {
    w_r(static_cast<Eigen::Index>(i)) = data.w(split.r_indices[i]) - g_const;
  }
  const QMatrix direct = q_matrix(model.basis(), model.measure(), w_r);
  CHECK((model.split(0).qinv.entries - direct.entries).cwiseAbs().maxCoeff() < 1e-12);

  // Hold-out averaging uses the residualized hold-out W values.
  CHECK(split.w_avg_values.size() == static_cast<Eigen::Index>(split.r_indices.size()));
}

TEST_CASE("marginal density: linearity, out-of-fold discipline, independence case") {
  const Eigen::VectorXd grid = uniform_grid(-4.0, 4.0, 0.25);

  SUBCASE("mean of per-observation curves, valid fold choice") {
    const Dataset data = independent_coefficients_data(200, 3, 71);
    FitConfig config = small_config(51, 80, 2, 2);
    config.M = 3;
    config.w_average_max = 32;
    const ConditionalDensityModel model = fit_conditional_density(data, config);
    const MarginalResult marginal = marginal_density(model, data, grid, true);

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(grid.size());
    for (int i = 0; i < 200; ++i) mean += marginal.per_observation.row(i).transpose();
    mean /= 200.0;
    CHECK((mean - marginal.curve).cwiseAbs().maxCoeff() < 1e-14);

    int expected_degenerate = 0;
    for (int i = 0; i < 200; ++i) {
      bool always_in_r = true;
      for (int m = 0; m < model.n_splits(); ++m) {
        const auto& r = model.split(m).r_indices;
        if (std::find(r.begin(), r.end(), i) == r.end()) {
          always_in_r = false;
          break;
        }
      }
      if (always_in_r) {
        ++expected_degenerate;
      } else {
        const auto& r = model.split(marginal.split_used[i]).r_indices;
        CHECK(std::find(r.begin(), r.end(), i) == r.end());
      }
    }
    CHECK(marginal.degenerate_count == expected_degenerate);
  }

  SUBCASE("coincides with the conditional density when B is independent of X") {
    std::vector<double> sup_diffs;
    for (int rep = 0; rep < 10; ++rep) {
      const Dataset data = independent_coefficients_data(600, 3, 900 + rep);
      FitConfig config = small_config(70 + rep, 150, 3, 3);
      config.M = 4;
      config.w_average_max = 32;
      const ConditionalDensityModel model = fit_conditional_density(data, config);
      const MarginalResult marginal = marginal_density(model, data, grid);
      const Eigen::VectorXd conditional =
          evaluate_slope_density(model, Eigen::VectorXd::Zero(3), grid);
      sup_diffs.push_back((marginal.curve - conditional).cwiseAbs().maxCoeff());
    }
    std::sort(sup_diffs.begin(), sup_diffs.end());
    CHECK(sup_diffs[5] < 0.1);
  }
}

TEST_CASE("marginal density matches the simulated slope histogram") {
  // Truth: histogram density of B1 over 10^6 draws of the design.
  const GeneratedSample big = generate_full({DgpSpec::Kind::dgp1, 1000000, 3, 424242});
  const Eigen::VectorXd grid = uniform_grid(-6.0, 6.0, 0.25);
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(grid.size());
  const double half_bin = 0.125;
  for (int i = 0; i < big.b1.size(); ++i) {
    const int at = static_cast<int>(std::round((big.b1(i) + 6.0) / 0.25));
    if (at >= 0 && at < grid.size()) hist(at) += 1.0;
  }
  hist /= big.b1.size() * 2.0 * half_bin;

  const Dataset data = generate_dgp1(1500, 5, 52);
  FitConfig config;
  config.K1 = 3;
  config.K2 = 3;
  config.M = 5;
  config.n_trees = 400;
  config.seed = 90;
  config.w_average_max = 64;
  const ConditionalDensityModel model = fit_conditional_density(data, config);
  const MarginalResult marginal = marginal_density(model, data, grid);
  CHECK(integrated_squared_error(grid, marginal.curve, hist) < 0.02);
}

TEST_CASE("feasible fit is dominated by the infeasible coefficient oracle") {
  const Eigen::VectorXd grid = default_b1_grid();
  const Eigen::VectorXd x = default_test_point(10);
  int infeasible_wins = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const DgpSpec rep_spec{DgpSpec::Kind::dgp1, 800, 10, 3500 + static_cast<unsigned>(rep)};
    const Dataset data = generate(rep_spec);
    const Eigen::VectorXd truth = true_conditional_density(rep_spec, x, grid);

    FitConfig config = small_config(200 + rep, 300, 3, 3);
    const ConditionalDensityModel feasible = fit_conditional_density(data, config);
    const double ise_feasible =
        integrated_squared_error(grid, evaluate_slope_density(feasible, x, grid), truth);

    FitConfig oracle_config = config;
    const Eigen::VectorXcd pi = dgp1_oracle::true_pi(feasible.basis(), feasible.measure());
    oracle_config.hooks.pi_override = [pi](const Eigen::VectorXd&) { return pi; };
    const ConditionalDensityModel infeasible = fit_conditional_density(data, oracle_config);
    const double ise_infeasible =
        integrated_squared_error(grid, evaluate_slope_density(infeasible, x, grid), truth);

    if (ise_infeasible < ise_feasible) ++infeasible_wins;
  }
  CHECK(infeasible_wins >= 6);
}

TEST_CASE("variable importance normalization and structure") {
  SUBCASE("sums to one") {
    const Dataset data = generate_dgp1(300, 6, 17);
    const ConditionalDensityModel model =
        fit_conditional_density(data, small_config(61, 80, 2, 2));
    const VariableImportance vi = variable_importance(model);
    CHECK(vi.shape.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(vi.mean.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(vi.shape.minCoeff() >= 0.0);
    CHECK(vi.mean.minCoeff() >= 0.0);
  }

  SUBCASE("dgp1 concentrates on the structural controls") {
    std::vector<double> shape_mass, mean_mass, max_noise;
    for (int rep = 0; rep < 10; ++rep) {
      const Dataset data = generate_dgp1(800, 10, 7000 + rep);
      FitConfig config = small_config(300 + rep, 200, 3, 3);
      const ConditionalDensityModel model = fit_conditional_density(data, config);
      const VariableImportance vi = variable_importance(model);
      shape_mass.push_back(vi.shape(0) + vi.shape(1) + vi.shape(2));
      mean_mass.push_back(vi.mean(1) + vi.mean(2));
      max_noise.push_back(vi.shape.tail(7).maxCoeff());
    }
    std::sort(shape_mass.begin(), shape_mass.end());
    std::sort(mean_mass.begin(), mean_mass.end());
    std::sort(max_noise.begin(), max_noise.end());
    CHECK(shape_mass[5] > 0.4);
    CHECK(mean_mass[5] > 0.4);
    CHECK(max_noise[5] < 0.1);
  }

  SUBCASE("duplicating a noise column preserves structural mass") {
    const Dataset base_data = generate_dgp1(800, 10, 888);
    Dataset duplicated = base_data;
    duplicated.x.conservativeResize(Eigen::NoChange, 11);
    duplicated.x.col(10) = base_data.x.col(5);

    std::vector<double> deltas;
    for (int rep = 0; rep < 5; ++rep) {
      FitConfig config = small_config(400 + rep, 150, 3, 3);
      const VariableImportance a =
          variable_importance(fit_conditional_density(base_data, config));
      const VariableImportance b =
          variable_importance(fit_conditional_density(duplicated, config));
      deltas.push_back(std::abs((b.shape(0) + b.shape(1) + b.shape(2)) -
                                (a.shape(0) + a.shape(1) + a.shape(2))));
    }
    std::sort(deltas.begin(), deltas.end());
    CHECK(deltas[2] <= 0.1);
  }
}
