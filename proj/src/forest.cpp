#include "rcdens/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "rcdens/threading.hpp"

namespace rcdens {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Mutable state for one tree build; scratch buffers are reused across nodes.
struct TreeBuilder {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  int min_leaf;
  int mtry;
  std::mt19937_64 rng;

  std::vector<int> structure;   // indices, partitioned in place per node
  std::vector<int> estimation;
  std::vector<RegressorModel::Node> nodes;
  std::vector<double> importance;
  std::vector<std::pair<double, double>> scratch;  // (feature value, response)
  std::vector<int> feature_pool;

  double mean_of(const std::vector<int>& idx, int begin, int end) const {
    if (begin == end) return std::numeric_limits<double>::quiet_NaN();
    // Centered accumulation: exact for constant responses.
    const double base = y(idx[begin]);
    double acc = 0.0;
    for (int i = begin; i < end; ++i) acc += y(idx[i]) - base;
    return base + acc / (end - begin);
  }

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = -1.0;
  };

  Split best_split(int s_begin, int s_end) {
    const int n = s_end - s_begin;
    Split best;
    double total = 0.0;
    for (int i = s_begin; i < s_end; ++i) total += y(structure[i]);
    const double parent_score = total * total / n;

    int n_features = static_cast<int>(x.cols());
    int take = (mtry > 0 && mtry < n_features) ? mtry : n_features;
    feature_pool.resize(n_features);
    std::iota(feature_pool.begin(), feature_pool.end(), 0);
    if (take < n_features) {
      for (int j = 0; j < take; ++j) {
        std::uniform_int_distribution<int> pick(j, n_features - 1);
        std::swap(feature_pool[j], feature_pool[pick(rng)]);
      }
    }

    scratch.resize(n);
    for (int fj = 0; fj < take; ++fj) {
      const int f = feature_pool[fj];
      for (int i = 0; i < n; ++i) {
        const int row = structure[s_begin + i];
        scratch[i] = {x(row, f), y(row)};
      }
      std::sort(scratch.begin(), scratch.end());
      double left_sum = 0.0;
      for (int i = 0; i + 1 < n; ++i) {
        left_sum += scratch[i].second;
        if (scratch[i].first == scratch[i + 1].first) continue;
        const int nl = i + 1;
        const int nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double right_sum = total - left_sum;
        const double gain =
            left_sum * left_sum / nl + right_sum * right_sum / nr - parent_score;
        // Cross-feature ties (identical response partitions) break on the
        // threshold value, which keeps trees equivariant under feature
        // permutations.
        const double threshold = 0.5 * (scratch[i].first + scratch[i + 1].first);
        if (gain > best.gain ||
            (gain == best.gain && best.feature >= 0 && threshold < best.threshold)) {
          best.feature = f;
          best.threshold = threshold;
          best.gain = gain;
        }
      }
    }
    return best;
  }

  // Partitions idx[begin, end) so rows with x(., f) <= thr come first;
  // returns the boundary. Keeps relative order for determinism.
  int partition(std::vector<int>& idx, int begin, int end, int f, double thr) {
    auto mid = std::stable_partition(idx.begin() + begin, idx.begin() + end,
                                     [&](int row) { return x(row, f) <= thr; });
    return static_cast<int>(mid - idx.begin());
  }

  int build(int s_begin, int s_end, int e_begin, int e_end, int depth, double fallback) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();

    double value = mean_of(estimation, e_begin, e_end);
    if (std::isnan(value)) value = fallback;

    const int n = s_end - s_begin;
    Split split;
    if (n >= 2 * min_leaf) split = best_split(s_begin, s_end);
    if (split.feature < 0 || !(split.gain > 1e-12)) {
      nodes[id].value = value;
      return id;
    }

    // Shallow splits carry the reliable signal; deep splits in low
    // signal-to-noise regressions are mostly noise, so they are excluded
    // (split counts decayed by depth, capped at depth 3).
    if (depth <= 3) importance[split.feature] += std::pow(0.5, depth);
    const int s_mid = partition(structure, s_begin, s_end, split.feature, split.threshold);
    const int e_mid = partition(estimation, e_begin, e_end, split.feature, split.threshold);
    nodes[id].feature = split.feature;
    nodes[id].threshold = split.threshold;
    const int left = build(s_begin, s_mid, e_begin, e_mid, depth + 1, value);
    const int right = build(s_mid, s_end, e_mid, e_end, depth + 1, value);
    nodes[id].left = left;
    nodes[id].right = right;
    return id;
  }
};

std::vector<int> sample_without_replacement(std::vector<int> pool, int count,
                                            std::mt19937_64& rng) {
  const int n = static_cast<int>(pool.size());
  count = std::min(count, n);
  for (int j = 0; j < count; ++j) {
    std::uniform_int_distribution<int> pick(j, n - 1);
    std::swap(pool[j], pool[static_cast<int>(pick(rng))]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ substream);
}

RegressorModel RegressorModel::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                   const RegressorParams& params) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  if (n != y.size()) throw std::invalid_argument("fit_regressor: X/y length mismatch");
  if (d < 1) throw std::invalid_argument("fit_regressor: no features");
  if (!x.allFinite() || !y.allFinite()) {
    throw std::invalid_argument("fit_regressor: missing or non-finite values");
  }

  RegressorModel model;
  model.params_ = params;
  model.feature_dim_ = d;
  model.n_train_ = n;

  if (params.kind == RegressorParams::Kind::knn_baseline) {
    if (params.knn_k < 1) throw std::invalid_argument("fit_regressor: knn_k must be >= 1");
    model.knn_x_ = x;
    model.knn_y_ = y;
    return model;
  }

  if (params.n_trees < 1) throw std::invalid_argument("fit_regressor: n_trees must be >= 1");
  if (params.min_leaf < 1) throw std::invalid_argument("fit_regressor: min_leaf must be >= 1");
  if (!(params.subsample_fraction > 0.0 && params.subsample_fraction < 1.0)) {
    throw std::invalid_argument("fit_regressor: subsample_fraction must be in (0,1)");
  }
  if (n < 2 * params.min_leaf) {
    throw std::invalid_argument("fit_regressor: sample too small for min_leaf");
  }
  const int group_size = std::max(1, params.trees_per_group);
  if (params.n_trees % group_size != 0) {
    throw std::invalid_argument("fit_regressor: n_trees must divide into whole tree groups");
  }

  const int n_trees = params.n_trees;
  model.trees_.resize(n_trees);
  if (params.keep_index_sets) {
    model.structure_sets_.resize(n_trees);
    model.estimation_sets_.resize(n_trees);
  }
  std::vector<Eigen::VectorXd> tree_importance(n_trees);

  const int half = (n + 1) / 2;
  const int tree_sample =
      std::max(2 * params.min_leaf, static_cast<int>(std::ceil(params.subsample_fraction * n)));

  parallel_for(n_trees, [&](int t) {
    const int group = t / group_size;
    std::mt19937_64 group_rng(derive_seed(params.seed, 0x67726F75ULL, group));
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    std::vector<int> half_sample = sample_without_replacement(all, half, group_rng);
    std::sort(half_sample.begin(), half_sample.end());

    std::mt19937_64 tree_rng(derive_seed(params.seed, 0x74726565ULL, t));
    std::vector<int> sample =
        sample_without_replacement(half_sample, std::min(tree_sample, half), tree_rng);

    TreeBuilder builder{x, y, params.min_leaf, params.mtry,
                        std::mt19937_64(derive_seed(params.seed, 0x6E6F6465ULL, t))};
    if (params.honesty) {
      std::shuffle(sample.begin(), sample.end(), tree_rng);
      const int s_half = static_cast<int>(sample.size()) / 2;
      builder.structure.assign(sample.begin(), sample.begin() + s_half);
      builder.estimation.assign(sample.begin() + s_half, sample.end());
    } else {
      builder.structure = sample;
      builder.estimation = sample;
    }
    builder.importance.assign(d, 0.0);
    builder.nodes.reserve(64);

    const double root_fallback =
        builder.mean_of(builder.estimation, 0, static_cast<int>(builder.estimation.size()));
    const double safe_fallback =
        std::isnan(root_fallback)
            ? builder.mean_of(builder.structure, 0, static_cast<int>(builder.structure.size()))
            : root_fallback;
    builder.build(0, static_cast<int>(builder.structure.size()), 0,
                  static_cast<int>(builder.estimation.size()), 0, safe_fallback);

    model.trees_[t] = std::move(builder.nodes);
    tree_importance[t] =
        Eigen::Map<Eigen::VectorXd>(builder.importance.data(), d);
    if (params.keep_index_sets) {
      model.structure_sets_[t] = builder.structure;
      model.estimation_sets_[t] = builder.estimation;
    }
  });

  Eigen::VectorXd importance = Eigen::VectorXd::Zero(d);
  for (int t = 0; t < n_trees; ++t) importance += tree_importance[t];
  const double total = importance.sum();
  model.importance_ = total > 0.0 ? Eigen::VectorXd(importance / total)
                                  : Eigen::VectorXd::Constant(d, 1.0 / d);
  return model;
}

double RegressorModel::tree_predict(const std::vector<Node>& tree, const double* x) const {
  int at = 0;
  while (tree[at].feature >= 0) {
    at = x[tree[at].feature] <= tree[at].threshold ? tree[at].left : tree[at].right;
  }
  return tree[at].value;
}

namespace {
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}

double RegressorModel::tree_average_rows(const std::vector<Node>& tree, const double* rows,
                                         Eigen::Index n_rows, Eigen::Index n_cols) const {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    acc += tree_predict(tree, rows + i * n_cols);
  }
  return acc / static_cast<double>(n_rows);
}

void RegressorModel::check_query(Eigen::Index dim) const {
  if (dim != feature_dim_) throw std::invalid_argument("predict: feature dimension mismatch");
}

double RegressorModel::predict(const Eigen::VectorXd& x) const {
  check_query(x.size());
  if (params_.kind == RegressorParams::Kind::knn_baseline) {
    const int k = std::min(params_.knn_k, n_train_);
    std::vector<std::pair<double, int>> dist(n_train_);
    for (int i = 0; i < n_train_; ++i) {
      dist[i] = {(knn_x_.row(i).transpose() - x).squaredNorm(), i};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += knn_y_(dist[i].second);
    return acc / k;
  }
  const double base = tree_predict(trees_[0], x.data());
  double acc = 0.0;
  for (std::size_t t = 1; t < trees_.size(); ++t) acc += tree_predict(trees_[t], x.data()) - base;
  return base + acc / static_cast<double>(trees_.size());
}

Eigen::VectorXd RegressorModel::predict_many(const Eigen::MatrixXd& points) const {
  check_query(points.cols());
  if (params_.kind == RegressorParams::Kind::knn_baseline) {
    Eigen::VectorXd out(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) out(i) = predict(points.row(i).transpose());
    return out;
  }
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(points.rows());
  const RowMajorMatrix pts = points;
  for (const auto& tree : trees_) {
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      acc(i) += tree_predict(tree, pts.data() + i * pts.cols());
    }
  }
  return acc / static_cast<double>(trees_.size());
}

double RegressorModel::predict_averaged(const Eigen::MatrixXd& points) const {
  check_query(points.cols());
  if (params_.kind == RegressorParams::Kind::knn_baseline) {
    return predict_many(points).mean();
  }
  const RowMajorMatrix pts = points;
  const double base = tree_average_rows(trees_[0], pts.data(), pts.rows(), pts.cols());
  double acc = 0.0;
  for (std::size_t t = 1; t < trees_.size(); ++t) {
    acc += tree_average_rows(trees_[t], pts.data(), pts.rows(), pts.cols()) - base;
  }
  return base + acc / static_cast<double>(trees_.size());
}

RegressorModel::MeanAndVariance RegressorModel::predict_averaged_with_variance(
    const Eigen::MatrixXd& points) const {
  check_query(points.cols());
  if (params_.kind == RegressorParams::Kind::knn_baseline) {
    throw std::logic_error("predict_variance: unsupported for knn_baseline");
  }
  const int n_trees = static_cast<int>(trees_.size());
  const int ell = params_.trees_per_group;
  const int groups = n_trees / std::max(1, ell);
  if (n_trees < 50) throw std::invalid_argument("predict_variance: needs at least 50 trees");
  if (ell < 2 || groups < 2) {
    throw std::invalid_argument("predict_variance: needs >= 2 groups of >= 2 trees");
  }

  const RowMajorMatrix pts = points;
  std::vector<double> theta(n_trees);
  for (int t = 0; t < n_trees; ++t) {
    theta[t] = tree_average_rows(trees_[t], pts.data(), pts.rows(), pts.cols());
  }
  const double base = theta[0];

  double mean_acc = 0.0;
  for (int t = 0; t < n_trees; ++t) mean_acc += theta[t] - base;
  const double mean = base + mean_acc / n_trees;

  // Between-group variance of group means, minus within-group noise / ell.
  double between = 0.0;
  double within = 0.0;
  for (int g = 0; g < groups; ++g) {
    double gsum = 0.0;
    for (int j = 0; j < ell; ++j) gsum += theta[g * ell + j];
    const double gmean = gsum / ell;
    between += (gmean - mean) * (gmean - mean);
    double ss = 0.0;
    for (int j = 0; j < ell; ++j) {
      const double dev = theta[g * ell + j] - gmean;
      ss += dev * dev;
    }
    within += ss / (ell - 1);
  }
  between /= groups - 1;
  within /= groups;

  MeanAndVariance out;
  out.mean = mean;
  out.variance = std::max(0.0, between - within / ell);
  return out;
}

double RegressorModel::predict_variance(const Eigen::VectorXd& x) const {
  return predict_averaged_with_variance(x.transpose()).variance;
}

Eigen::VectorXd RegressorModel::split_importance() const {
  if (params_.kind == RegressorParams::Kind::knn_baseline) {
    throw std::logic_error("split_importance: unsupported for knn_baseline");
  }
  return importance_;
}

}  // namespace rcdens
