#pragma once

#include <Eigen/Core>
#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "rcdens/dataset.hpp"
#include "rcdens/forest.hpp"
#include "rcdens/hermite.hpp"
#include "rcdens/transforms.hpp"

namespace rcdens {

//! Test-only injection points replacing fitted nuisance functions by oracles.
struct FitHooks {
  std::function<double(const Eigen::VectorXd&, double)> m_override;        // m(x, w)
  std::function<double(const Eigen::VectorXd&)> g_override;                // g(x)
  std::function<Eigen::VectorXcd(const Eigen::VectorXd&)> pi_override;     // Pi(x)
};

struct FitConfig {
  int K1 = 3;
  int K2 = 3;
  double sigma_t = 1.0;
  int M = 1;
  enum class Mode { plain, orthogonal_w };
  Mode mode = Mode::plain;
  //! K-way subsample partition of R for per-coefficient variances.
  bool inference = false;
  int nu_nodes = 64;
  double ridge = 0.0;  // 0 -> automatic spectral floor when near-singular
  std::uint64_t seed = 0;

  int n_trees = 2000;
  int min_leaf = 5;
  double subsample_fraction = 0.5;
  bool honesty = true;
  int trees_per_group = 2;

  //! Pi-hat averages ML predictions over sample W values: the full sample by
  //! default (the paper's practice), or only the hold-out sample R.
  bool w_average_holdout_only = false;
  //! Cap on the number of W values averaged over (0 = all, strided subset).
  int w_average_max = 0;
  //! Optional post-hoc clip-at-zero-and-renormalize of density output.
  bool clip_negative = false;

  FitHooks hooks;
};

//! Conditional means of intercept and slope via the local moment ratio
//!   beta1(x) = (E[YW|x] - E[Y|x] E[W|x]) / max(Var(W|x), eps),
//! with four conditional-expectation forests fit on the full sample.
class BetaModel {
 public:
  struct Estimate {
    double beta0 = 0.0;
    double beta1 = 0.0;
    bool denominator_guarded = false;
  };

  static BetaModel fit(const Dataset& data, const RegressorParams& params);
  Estimate estimate(const Eigen::VectorXd& x) const;

  const RegressorModel& ey() const { return ey_; }
  const RegressorModel& ew() const { return ew_; }
  const RegressorModel& eyw() const { return eyw_; }
  const RegressorModel& eww() const { return eww_; }

 private:
  RegressorModel ey_, ew_, eyw_, eww_;
  double denom_floor_ = 0.0;
};

//! Per-coefficient complex point estimates and (inference mode) variances at
//! one test point.
struct PiRecord {
  Eigen::VectorXcd pi;
  Eigen::VectorXd sigma2;  // Re-forest variance + Im-forest variance, per k
};

//! One cross-fit split: its index sets, nuisance fits and coefficient forests.
struct SplitRecord {
  std::vector<int> d_indices;
  std::vector<int> r_indices;
  //! Position r in r_indices belongs to coefficient subsample R_k
  //! (inference mode); -1 when unassigned or partitioning is off.
  std::vector<int> coef_subsample;
  std::optional<RegressorModel> m_hat;
  std::optional<RegressorModel> g_hat;
  std::vector<RegressorModel> re_forests;  // K
  std::vector<RegressorModel> im_forests;  // K
  QMatrix qinv;                  // per-split in orthogonal_w mode, shared otherwise
  Eigen::VectorXd w_avg_values;  // W (or residualized W) values averaged over
};

struct DensityEvaluation {
  Eigen::MatrixXd values;      // b0_grid.size() x b1_grid.size()
  double imag_residual = 0.0;  // max |Im| / max |Re| over the grid
};

//! Fitted two-stage sieve estimator of the conditional RC density.
class ConditionalDensityModel {
 public:
  const HermiteBasis& basis() const { return basis_; }
  const WeightingMeasure& measure() const { return measure_; }
  const FitConfig& config() const { return config_; }
  const BetaModel& beta_model() const { return beta_; }
  int n_splits() const { return static_cast<int>(splits_.size()); }
  const SplitRecord& split(int m) const { return splits_.at(m); }
  //! Q-hat of the plain mode (split 0's in orthogonal_w mode).
  const QMatrix& q() const { return splits_.front().qinv; }

  BetaModel::Estimate beta(const Eigen::VectorXd& x) const;

  //! Pi-hat_{dm,m}(x): cached per test point.
  const PiRecord& pi_record(int m, const Eigen::VectorXd& x) const;
  //! Q-hat^{-1} Pi-hat_{dm,m}(x).
  Eigen::VectorXcd coefficient_vector(int m, const Eigen::VectorXd& x) const;

  friend ConditionalDensityModel fit_conditional_density(const Dataset&, const FitConfig&);

 private:
  HermiteBasis basis_;
  WeightingMeasure measure_;
  FitConfig config_;
  BetaModel beta_;
  std::vector<SplitRecord> splits_;

  struct Cache {
    std::mutex mutex;
    std::map<std::vector<double>, std::vector<PiRecord>> by_point;
  };
  std::unique_ptr<Cache> cache_ = std::make_unique<Cache>();
};

BetaModel estimate_beta(const Dataset& data, const RegressorParams& params);

//! Steps 1-4 with M-fold cross-fitting (paper's estimation procedure).
ConditionalDensityModel fit_conditional_density(const Dataset& data, const FitConfig& config);

//! f-hat(b | x) on a product grid, averaged over splits; the imaginary
//! residual of the complex accumulation is reported as a diagnostic.
DensityEvaluation evaluate_density(const ConditionalDensityModel& model,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& b0_grid,
                                   const Eigen::VectorXd& b1_grid);

//! Slope marginal f-hat_{B1|X=x}: the intercept direction integrated out in
//! closed form (int h_j db = sqrt(2pi) i^j h_j(0)).
Eigen::VectorXd evaluate_slope_density(const ConditionalDensityModel& model,
                                       const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& b1_grid);

//! Same, restricted to one split (per-split curves for inference/marginals).
Eigen::VectorXd evaluate_slope_density_split(const ConditionalDensityModel& model, int m,
                                             const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& b1_grid);

struct MarginalResult {
  Eigen::VectorXd curve;
  //! Out-of-fold split used per observation.
  std::vector<int> split_used;
  //! Per-observation curves (rows), kept only when requested.
  Eigen::MatrixXd per_observation;
  int degenerate_count = 0;  // observations with no out-of-fold split
};

//! Marginal slope density by averaging out-of-fold conditional estimates over
//! the sample (leave-one-out approximation; M = 1 degenerates with a warning).
MarginalResult marginal_density(const ConditionalDensityModel& model, const Dataset& data,
                                const Eigen::VectorXd& b1_grid, bool keep_per_observation = false);

struct VariableImportance {
  Eigen::VectorXd shape;  // over the d controls
  Eigen::VectorXd mean;   // over the d controls
};

//! VI_shape: split importance averaged over the 2K coefficient forests and M
//! splits (the W feature's share dropped, X-shares renormalized);
//! VI_mean: averaged over the four beta forests.
VariableImportance variable_importance(const ConditionalDensityModel& model);

}  // namespace rcdens
