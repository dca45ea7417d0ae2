#include "rcdens/forest.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <set>

using namespace rcdens;

namespace {

std::mt19937_64 rng_for(unsigned seed) { return std::mt19937_64(seed); }

Eigen::MatrixXd normal_matrix(int n, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = gauss(rng);
  return x;
}

RegressorParams small_forest(int n_trees, std::uint64_t seed) {
  RegressorParams p;
  p.n_trees = n_trees;
  p.seed = seed;
  return p;
}

}  // namespace

TEST_CASE("constant target predicts exactly") {
  auto rng = rng_for(1);
  const Eigen::MatrixXd x = normal_matrix(200, 4, rng);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(200, 3.7);
  const RegressorModel model = fit_regressor(x, y, small_forest(100, 5));
  for (int i = 0; i < 10; ++i) {
    CHECK(model.predict(x.row(i).transpose()) == 3.7);
  }
  CHECK(model.predict_variance(x.row(0).transpose()) <= 1e-12);
}

TEST_CASE("pure first-feature signal: accuracy and importance") {
  auto rng = rng_for(2);
  const Eigen::MatrixXd x = normal_matrix(2000, 10, rng);
  const Eigen::VectorXd y = x.col(0);
  const RegressorModel model = fit_regressor(x, y, small_forest(2000, 7));

  const Eigen::MatrixXd fresh = normal_matrix(100, 10, rng);
  double sse = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double err = model.predict(fresh.row(i).transpose()) - fresh(i, 0);
    sse += err * err;
  }
  CHECK(std::sqrt(sse / 100.0) < 0.15);
  CHECK(model.split_importance()(0) > 0.5);
}

TEST_CASE("permuting feature columns permutes importance") {
  auto rng = rng_for(3);
  const Eigen::MatrixXd x = normal_matrix(600, 5, rng);
  const Eigen::VectorXd y =
      (x.col(0).array().sin() + 0.5 * x.col(3).array()).matrix();
  const RegressorModel base = fit_regressor(x, y, small_forest(300, 11));

  Eigen::MatrixXd permuted = x;
  permuted.col(0) = x.col(3);
  permuted.col(3) = x.col(0);
  const RegressorModel swapped = fit_regressor(permuted, y, small_forest(300, 11));

  const Eigen::VectorXd imp = base.split_importance();
  const Eigen::VectorXd imp_swapped = swapped.split_importance();
  CHECK(imp(0) == doctest::Approx(imp_swapped(3)).epsilon(1e-12));
  CHECK(imp(3) == doctest::Approx(imp_swapped(0)).epsilon(1e-12));
  CHECK(imp(1) == doctest::Approx(imp_swapped(1)).epsilon(1e-12));
}

TEST_CASE("single tree with a single leaf averages the estimation half") {
  auto rng = rng_for(4);
  const Eigen::MatrixXd x = normal_matrix(60, 3, rng);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) y(i) = std::sin(0.37 * i);

  RegressorParams p = small_forest(1, 13);
  p.trees_per_group = 1;
  p.min_leaf = 30;  // structure half is smaller than 2*min_leaf: leaf-only tree
  p.keep_index_sets = true;
  const RegressorModel model = fit_regressor(x, y, p);
  const auto& est = model.estimation_sets().at(0);
  REQUIRE(!est.empty());
  double mean = 0.0;
  for (int i : est) mean += y(i);
  mean /= static_cast<double>(est.size());
  CHECK(model.predict(x.row(5).transpose()) == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("knn baseline with k = 1 returns the training response") {
  auto rng = rng_for(5);
  const Eigen::MatrixXd x = normal_matrix(80, 4, rng);
  Eigen::VectorXd y(80);
  for (int i = 0; i < 80; ++i) y(i) = 0.1 * i;
  RegressorParams p;
  p.kind = RegressorParams::Kind::knn_baseline;
  p.knn_k = 1;
  const RegressorModel model = fit_regressor(x, y, p);
  CHECK(model.predict(x.row(17).transpose()) == y(17));
  CHECK_THROWS_AS(model.split_importance(), std::logic_error);
  CHECK_THROWS_AS(model.predict_variance(x.row(0).transpose()), std::logic_error);
}

TEST_CASE("smooth target: prediction near the truth at the center") {
  auto rng = rng_for(6);
  const Eigen::MatrixXd x = normal_matrix(4000, 5, rng);
  const Eigen::VectorXd y = x.col(0).array().sin().matrix();
  const RegressorModel model = fit_regressor(x, y, small_forest(500, 17));
  CHECK(std::abs(model.predict(Eigen::VectorXd::Zero(5))) < 0.1);
}

TEST_CASE("honesty: structure and estimation halves are disjoint") {
  auto rng = rng_for(7);
  const Eigen::MatrixXd x = normal_matrix(300, 4, rng);
  const Eigen::VectorXd y = x.col(1);
  RegressorParams p = small_forest(50, 19);
  p.keep_index_sets = true;
  const RegressorModel model = fit_regressor(x, y, p);
  for (std::size_t t = 0; t < model.structure_sets().size(); ++t) {
    std::set<int> structure(model.structure_sets()[t].begin(),
                            model.structure_sets()[t].end());
    for (int i : model.estimation_sets()[t]) CHECK(structure.count(i) == 0);
  }
}

TEST_CASE("determinism: identical seed and data, any thread count") {
  auto rng = rng_for(8);
  const Eigen::MatrixXd x = normal_matrix(400, 6, rng);
  const Eigen::VectorXd y = (x.col(0).array() * x.col(1).array()).matrix();

  setenv("RCDENS_THREADS", "1", 1);
  const RegressorModel serial = fit_regressor(x, y, small_forest(120, 23));
  setenv("RCDENS_THREADS", "4", 1);
  const RegressorModel threaded = fit_regressor(x, y, small_forest(120, 23));
  unsetenv("RCDENS_THREADS");

  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd q = x.row(i).transpose();
    CHECK(serial.predict(q) == threaded.predict(q));
  }
  CHECK((serial.split_importance() - threaded.split_importance()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("split importance: engineered single-feature splits") {
  auto rng = rng_for(9);
  Eigen::MatrixXd x = normal_matrix(400, 6, rng);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int i = 0; i < 400; ++i) x(i, 3) = coin(rng);
  const Eigen::VectorXd y = x.col(3);
  const RegressorModel model = fit_regressor(x, y, small_forest(200, 29));
  const Eigen::VectorXd imp = model.split_importance();
  CHECK(imp(3) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(imp.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("split importance: no spurious concentration on pure noise") {
  auto rng = rng_for(10);
  const Eigen::MatrixXd x = normal_matrix(2000, 10, rng);
  Eigen::VectorXd y(2000);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) y(i) = gauss(rng);
  const RegressorModel model = fit_regressor(x, y, small_forest(500, 31));
  const Eigen::VectorXd imp = model.split_importance();
  CHECK(imp.maxCoeff() < 0.5);
  CHECK(imp.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("split importance concentrates on structural features") {
  auto rng = rng_for(11);
  const Eigen::MatrixXd x = normal_matrix(2000, 10, rng);
  const Eigen::VectorXd y = (x.col(0).array().sin() + x.col(1).array().square() +
                             x.col(2).array())
                                .matrix();
  const RegressorModel model = fit_regressor(x, y, small_forest(500, 37));
  const Eigen::VectorXd imp = model.split_importance();
  CHECK(imp(0) + imp(1) + imp(2) > 0.5);
}

TEST_CASE("variance calibration against refit Monte Carlo") {
  const int refits = 50;
  const int n = 2000;
  const Eigen::VectorXd query = Eigen::VectorXd::Zero(5);
  std::vector<double> predictions(refits);
  std::vector<double> estimates;
  for (int r = 0; r < refits; ++r) {
    auto rng = rng_for(100 + r);
    const Eigen::MatrixXd x = normal_matrix(n, 5, rng);
    Eigen::VectorXd y(n);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n; ++i) y(i) = gauss(rng);
    const RegressorModel model = fit_regressor(x, y, small_forest(500, 1000 + r));
    predictions[r] = model.predict(query);
    if (r < 10) estimates.push_back(model.predict_variance(query));
  }
  double mean = 0.0;
  for (double p : predictions) mean += p;
  mean /= refits;
  double mc_var = 0.0;
  for (double p : predictions) mc_var += (p - mean) * (p - mean);
  mc_var /= refits - 1;

  std::sort(estimates.begin(), estimates.end());
  const double median_estimate = estimates[estimates.size() / 2];
  CHECK(median_estimate > 0.2 * mc_var);
  CHECK(median_estimate < 5.0 * mc_var);
}

TEST_CASE("variance shrinks as the sample grows") {
  std::vector<double> var_small, var_large;
  for (int r = 0; r < 20; ++r) {
    for (int n : {1000, 4000}) {
      auto rng = rng_for(300 + r);
      const Eigen::MatrixXd x = normal_matrix(n, 4, rng);
      const Eigen::VectorXd y =
          (x.col(0).array() + 0.5 * x.col(1).array().square()).matrix();
      const RegressorModel model = fit_regressor(x, y, small_forest(250, 41 + r));
      const double v = model.predict_variance(Eigen::VectorXd::Zero(4));
      (n == 1000 ? var_small : var_large).push_back(v);
    }
  }
  std::sort(var_small.begin(), var_small.end());
  std::sort(var_large.begin(), var_large.end());
  CHECK(var_large[10] < var_small[10]);
}

TEST_CASE("monotone consistency: RMSE falls as n doubles") {
  std::vector<double> rmse_by_n;
  for (int n : {500, 1000, 2000}) {
    std::vector<double> rmses;
    for (int s = 0; s < 10; ++s) {
      auto rng = rng_for(500 + s);
      const Eigen::MatrixXd x = normal_matrix(n, 5, rng);
      const Eigen::VectorXd y = x.col(0).array().sin().matrix();
      const RegressorModel model = fit_regressor(x, y, small_forest(200, 53 + s));
      const Eigen::MatrixXd fresh = normal_matrix(200, 5, rng);
      double sse = 0.0;
      for (int i = 0; i < 200; ++i) {
        const double err = model.predict(fresh.row(i).transpose()) - std::sin(fresh(i, 0));
        sse += err * err;
      }
      rmses.push_back(std::sqrt(sse / 200.0));
    }
    std::sort(rmses.begin(), rmses.end());
    rmse_by_n.push_back(0.5 * (rmses[4] + rmses[5]));
  }
  CHECK(rmse_by_n[1] < rmse_by_n[0]);
  CHECK(rmse_by_n[2] < rmse_by_n[1]);
}

TEST_CASE("fit input validation") {
  auto rng = rng_for(12);
  const Eigen::MatrixXd x = normal_matrix(8, 3, rng);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(8);
  RegressorParams p = small_forest(10, 1);
  p.min_leaf = 5;
  CHECK_THROWS_AS(fit_regressor(x, y, p), std::invalid_argument);

  Eigen::MatrixXd bad = normal_matrix(100, 3, rng);
  bad(4, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_regressor(bad, Eigen::VectorXd::Ones(100), small_forest(10, 1)),
                  std::invalid_argument);

  const RegressorModel ok = fit_regressor(normal_matrix(100, 3, rng),
                                          Eigen::VectorXd::Ones(100), small_forest(10, 1));
  CHECK_THROWS_AS(ok.predict(Eigen::VectorXd::Zero(5)), std::invalid_argument);
}
