#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace rcdens {

struct RegressorParams {
  enum class Kind { honest_forest, knn_baseline };
  Kind kind = Kind::honest_forest;
  int n_trees = 2000;
  double subsample_fraction = 0.5;
  int min_leaf = 5;
  bool honesty = true;
  //! Trees per little-bag group; each group shares one half-sample of the
  //! training data, which is what makes the grouped jackknife variance work.
  int trees_per_group = 2;
  //! Features considered per split; 0 means all.
  int mtry = 0;
  int knn_k = 5;
  std::uint64_t seed = 0;
  //! Retain per-tree structure/estimation index sets (white-box tests only).
  bool keep_index_sets = false;
};

//! Fitted conditional-expectation regressor: an honest subsampled random
//! forest (default) or a k-nearest-neighbor baseline for oracle testing.
//!
//! Honest trees choose splits on a structure half of the tree sample and
//! average responses of the disjoint estimation half in the leaves, so no
//! estimation-half response ever influences a split.
class RegressorModel {
 public:
  //! Trains on X (n x d, one row per observation). Deterministic given
  //! params.seed: every tree derives its own RNG stream from the seed, so
  //! results do not depend on evaluation order or thread count.
  static RegressorModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const RegressorParams& params);

  double predict(const Eigen::VectorXd& x) const;
  Eigen::VectorXd predict_many(const Eigen::MatrixXd& points) const;

  //! Mean prediction over a set of query points (one linear functional of the
  //! forest, e.g. the W-average behind a sieve coefficient).
  double predict_averaged(const Eigen::MatrixXd& points) const;

  struct MeanAndVariance {
    double mean = 0.0;
    double variance = 0.0;
  };

  //! Grouped half-sample ("little bags") jackknife for the averaged
  //! prediction: between-group variance of group ensemble means, debiased by
  //! the within-group Monte Carlo variance, floored at zero.
  MeanAndVariance predict_averaged_with_variance(const Eigen::MatrixXd& points) const;
  double predict_variance(const Eigen::VectorXd& x) const;

  //! Gain-weighted split importance: each split credits its variance
  //! reduction to the splitting feature, normalized to sum one; uniform if
  //! the forest never split. Unsupported for the baseline.
  Eigen::VectorXd split_importance() const;

  int feature_dim() const { return feature_dim_; }
  RegressorParams::Kind kind() const { return params_.kind; }
  const RegressorParams& params() const { return params_; }

  // White-box accessors (populated only with params.keep_index_sets).
  const std::vector<std::vector<int>>& structure_sets() const { return structure_sets_; }
  const std::vector<std::vector<int>>& estimation_sets() const { return estimation_sets_; }

  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

 private:
  double tree_predict(const std::vector<Node>& tree, const double* x) const;
  double tree_average_rows(const std::vector<Node>& tree, const double* rows,
                           Eigen::Index n_rows, Eigen::Index n_cols) const;
  void check_query(Eigen::Index dim) const;

  RegressorParams params_;
  int feature_dim_ = 0;
  int n_train_ = 0;
  std::vector<std::vector<Node>> trees_;
  Eigen::VectorXd importance_;
  std::vector<std::vector<int>> structure_sets_;
  std::vector<std::vector<int>> estimation_sets_;

  // knn baseline keeps its training data.
  Eigen::MatrixXd knn_x_;
  Eigen::VectorXd knn_y_;
};

//! Convenience free function mirroring the model-centric API.
inline RegressorModel fit_regressor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                    const RegressorParams& params) {
  return RegressorModel::fit(x, y, params);
}

//! Deterministic 64-bit stream derivation (seed, stream, substream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream);

}  // namespace rcdens
