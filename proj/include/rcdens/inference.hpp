#pragma once

#include <Eigen/Core>

#include "rcdens/pipeline.hpp"

namespace rcdens {

//! Pointwise band for the conditional slope density along b1_grid.
struct DensityBand {
  Eigen::VectorXd b1_grid;
  Eigen::VectorXd point;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double alpha = 0.1;
  int M_used = 1;
  Eigen::VectorXd se;  // v-hat_n values; filled for M = 1 only
};

//! Diagonal of Sigma-hat_n(x) for split m: per-coefficient variance
//! sigma^2_dm,k = Var(Re-forest) + Var(Im-forest). Requires a model fitted in
//! inference mode (disjoint per-coefficient subsamples).
Eigen::VectorXd sigma_matrix(const ConditionalDensityModel& model, int m,
                             const Eigen::VectorXd& x);

//! v-hat_n(b, x) = || q^K(b - beta-hat(x))' Q-hat^{-1} Sigma-hat_n(x) ||_E in
//! complex arithmetic (modulus norm), for the bivariate density at b.
double standard_error(const ConditionalDensityModel& model, int m, const Eigen::VectorXd& x,
                      double b0, double b1);

//! Same functional for the slope marginal at b1 (intercept integrated out).
double slope_standard_error(const ConditionalDensityModel& model, int m,
                            const Eigen::VectorXd& x, double b1);

//! M = 1: f-hat +- z_{1-alpha/2} v-hat. M > 1: per-split intervals at the
//! discounted level 1 - alpha/2, aggregated by the lower median of lower ends
//! and the upper median of upper ends.
DensityBand confidence_band(const ConditionalDensityModel& model, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& b1_grid, double alpha);

double lower_median(std::vector<double> values);
double upper_median(std::vector<double> values);

}  // namespace rcdens
