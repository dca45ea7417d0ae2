#include "rcdens/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rcdens/stats.hpp"

namespace rcdens {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  // Acklam's approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double z;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    z = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement against the exact CDF.
  const double e = normal_cdf(z) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * z * z);
  return z - u / (1.0 + 0.5 * z * u);
}

namespace {

void require_inference_mode(const ConditionalDensityModel& model) {
  if (!model.config().inference) {
    throw std::logic_error("inference: model was not fitted in inference mode");
  }
}

//! sqrt(sum_k row_k^2 sigma2_k): the norm of the coefficient functional row
//! scaled by the per-coefficient standard deviations.
double weighted_norm(const Eigen::VectorXd& row, const Eigen::VectorXd& sigma2) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < row.size(); ++k) acc += row(k) * row(k) * sigma2(k);
  return std::sqrt(acc);
}

}  // namespace

double lower_median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

double upper_median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return values[values.size() / 2];
}

Eigen::VectorXd sigma_matrix(const ConditionalDensityModel& model, int m,
                             const Eigen::VectorXd& x) {
  require_inference_mode(model);
  return model.pi_record(m, x).sigma2;
}

double standard_error(const ConditionalDensityModel& model, int m, const Eigen::VectorXd& x,
                      double b0, double b1) {
  require_inference_mode(model);
  const auto beta = model.beta(x);
  const Eigen::VectorXd q = model.basis().eval(b0 - beta.beta0, b1 - beta.beta1);
  const Eigen::VectorXd row = model.split(m).qinv.real_inverse * q;
  return weighted_norm(row, sigma_matrix(model, m, x));
}

double slope_standard_error(const ConditionalDensityModel& model, int m,
                            const Eigen::VectorXd& x, double b1) {
  require_inference_mode(model);
  const HermiteBasis& basis = model.basis();
  const auto beta = model.beta(x);
  const Eigen::VectorXd h1 = hermite_eval_all(basis.K2 - 1, b1 - beta.beta1);
  Eigen::VectorXd q(basis.size());
  for (int k2 = 0; k2 < basis.K2; ++k2) {
    for (int k1 = 0; k1 < basis.K1; ++k1) {
      q(basis.flat_index(k1, k2)) = hermite_integral(k1) * h1(k2);
    }
  }
  const Eigen::VectorXd row = model.split(m).qinv.real_inverse * q;
  return weighted_norm(row, sigma_matrix(model, m, x));
}

DensityBand confidence_band(const ConditionalDensityModel& model, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& b1_grid, double alpha) {
  require_inference_mode(model);
  if (!(alpha > 0.0 && alpha <= 0.5)) {
    throw std::invalid_argument("confidence_band: alpha must be in (0, 0.5]");
  }
  const int M = model.n_splits();
  const Eigen::Index nb = b1_grid.size();

  DensityBand band;
  band.b1_grid = b1_grid;
  band.alpha = alpha;
  band.M_used = M;
  band.point = evaluate_slope_density(model, x, b1_grid);
  band.lower.resize(nb);
  band.upper.resize(nb);

  if (M == 1) {
    const double z = normal_quantile(1.0 - alpha / 2.0);
    band.se.resize(nb);
    for (Eigen::Index j = 0; j < nb; ++j) {
      band.se(j) = slope_standard_error(model, 0, x, b1_grid(j));
      band.lower(j) = band.point(j) - z * band.se(j);
      band.upper(j) = band.point(j) + z * band.se(j);
    }
    return band;
  }

  // Discounted per-split level 1 - alpha/2, median aggregation.
  const double z = normal_quantile(1.0 - alpha / 4.0);
  std::vector<Eigen::VectorXd> curves(M);
  std::vector<Eigen::VectorXd> ses(M);
  for (int m = 0; m < M; ++m) {
    curves[m] = evaluate_slope_density_split(model, m, x, b1_grid);
    ses[m].resize(nb);
    for (Eigen::Index j = 0; j < nb; ++j) ses[m](j) = slope_standard_error(model, m, x, b1_grid(j));
  }
  std::vector<double> lowers(M), uppers(M);
  for (Eigen::Index j = 0; j < nb; ++j) {
    for (int m = 0; m < M; ++m) {
      lowers[m] = curves[m](j) - z * ses[m](j);
      uppers[m] = curves[m](j) + z * ses[m](j);
    }
    band.lower(j) = lower_median(lowers);
    band.upper(j) = upper_median(uppers);
  }
  return band;
}

}  // namespace rcdens
