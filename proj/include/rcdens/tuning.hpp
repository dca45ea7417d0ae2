#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "rcdens/pipeline.hpp"

namespace rcdens {

//! Gaussian-kernel density of W with Silverman bandwidth 1.06 sigma n^{-1/5}
//! and a positive floor so divisions by f_W stay safe in the far tails.
class KernelDensityW {
 public:
  static KernelDensityW fit(const Eigen::VectorXd& w_samples);

  double operator()(double w) const;
  double bandwidth() const { return bandwidth_; }
  double floor() const { return floor_; }

 private:
  double raw(double w) const;

  Eigen::VectorXd samples_;
  double bandwidth_ = 0.0;
  double floor_ = 0.0;
};

struct TuningGrid {
  std::vector<int> K2_values;
  std::vector<double> sigma_t_values;
  //! criterion(i, j) = J-hat at (K2_values[i], sigma_t_values[j]).
  Eigen::MatrixXd criterion;
  int selected_K2 = 0;
  double selected_sigma_t = 0.0;
};

//! Leave-split-out CV criterion J-hat = int f-hat^2 db - 2 E-hat[int f-hat f db]
//! at the model's (K2, sigma_t). The cross term regresses the scalar targets
//! Re{V(Y_i, W_i)' Q-hat^{-1} Pi-hat(x)} on (X_i, W_i) over sample D of each
//! split and averages predictions at (x, W_r) over the split's hold-out W.
//! f_w is the plug-in density of W (kernel estimate, or an oracle in tests).
double cv_criterion(const Dataset& data, const ConditionalDensityModel& model,
                    const Eigen::VectorXd& x, const std::function<double(double)>& f_w);

//! Argmin over the filled criterion grid, skipping non-finite cells; ties
//! break toward smaller K2, then smaller sigma_t (row-major scan order).
std::pair<int, int> select_from_grid(const Eigen::MatrixXd& criterion);

//! Fills the criterion over the grid (K1 held fixed) and selects the argmin.
TuningGrid select_tuning(const Dataset& data, const std::vector<int>& K2_values,
                         const std::vector<double>& sigma_t_values, const Eigen::VectorXd& x,
                         const FitConfig& base_config);

//! Simpson integral of the squared aggregated density estimate over a wide
//! product grid (the criterion's first term; exposed for white-box tests).
double squared_density_integral(const ConditionalDensityModel& model, const Eigen::VectorXd& x);

}  // namespace rcdens
