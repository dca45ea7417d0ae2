#pragma once

#include <Eigen/Core>
#include <stdexcept>

namespace rcdens {

//! Observations (Y_i, W_i, X_i) with X_i in R^d. Fold labels are attached by
//! the fitting pipeline; -1 means unassigned.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::VectorXd w;
  Eigen::MatrixXd x;  // n x d
  Eigen::VectorXi folds;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index dim() const { return x.cols(); }

  //! Shape and finiteness checks; min_n is the documented floor of the
  //! splitting scheme (50 for estimation paths, 1 for raw generation).
  void validate(Eigen::Index min_n = 1) const {
    if (y.size() != w.size() || y.size() != x.rows()) {
      throw std::invalid_argument("Dataset: Y, W, X must have equal length");
    }
    if (y.size() < min_n) {
      throw std::invalid_argument("Dataset: needs at least " + std::to_string(min_n) +
                                  " observations");
    }
    if (!y.allFinite() || !w.allFinite() || !x.allFinite()) {
      throw std::invalid_argument("Dataset: missing or non-finite values");
    }
  }
};

}  // namespace rcdens
