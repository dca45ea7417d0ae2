#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

#include "rcdens/dataset.hpp"
#include "rcdens/pipeline.hpp"

namespace rcdens {

struct DgpSpec {
  enum class Kind { dgp1, dgp2 };
  Kind kind = Kind::dgp1;
  int n = 1000;
  int p = 10;
  std::uint64_t seed = 0;
};

//! Generated observations plus the latent coefficient draws (the latter are
//! test oracles; estimation code never sees them).
struct GeneratedSample {
  Dataset data;
  Eigen::VectorXd b0;
  Eigen::VectorXd b1;
};

//! Y = B0 + B1 W with B0 = sin(X1) + A0, B1 = X2 + 0.5 X3 + 0.25 X2 X3 + A1,
//! W = 1 + X3 + (1 + X3^2) V; X iid standard normal, A0, V standard normal,
//! A1 an equal-weight mixture of N(-1.5, 1) and N(1.5, sd = sqrt(1/2)).
Dataset generate_dgp1(int n, int p, std::uint64_t seed);

//! As dgp1 but B1 is the mixture itself with weights Phi(X2) on the
//! N(-1.5, 1) component and 1 - Phi(X2) on the N(1.5, sqrt(1/2)) component.
Dataset generate_dgp2(int n, int p, std::uint64_t seed);

Dataset generate(const DgpSpec& spec);
GeneratedSample generate_full(const DgpSpec& spec);

//! One draw of the dgp2 slope for a fixed value of X2 (stratum tests).
double draw_dgp2_slope(double x2, std::mt19937_64& rng);

//! Closed-form conditional slope density f_{B1 | X = x} on b1_grid.
Eigen::VectorXd true_conditional_density(const DgpSpec& spec, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& b1_grid);

//! Default test point x = (0, 0.3, 0, ..., 0).
Eigen::VectorXd default_test_point(int p);

//! Uniform grid [-8, 8] at step 0.05 (the ISE convention of this project).
Eigen::VectorXd default_b1_grid();

//! Trapezoid integral of (a - b)^2 over grid.
double integrated_squared_error(const Eigen::VectorXd& grid, const Eigen::VectorXd& a,
                                const Eigen::VectorXd& b);

struct McReport {
  Eigen::VectorXd b1_grid;
  Eigen::VectorXd true_density;
  Eigen::VectorXd median_curve;
  Eigen::VectorXd q05_curve;
  Eigen::VectorXd q95_curve;
  Eigen::VectorXd ise;        // per successful rep
  Eigen::MatrixXd curves;     // rep-by-grid estimates
  int requested_reps = 0;
  int failed_reps = 0;
};

//! Replication harness: per-rep data generation + fit + slope-density curve
//! at the test point, pointwise median/5%/95% aggregation and per-rep ISE.
//! Deterministic given the spec's master seed (per-rep seeds derived).
McReport run_monte_carlo(const DgpSpec& spec, const FitConfig& fit_config, int reps,
                         const Eigen::VectorXd& test_point, const Eigen::VectorXd& b1_grid);

}  // namespace rcdens
