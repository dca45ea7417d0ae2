#include "rcdens/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "rcdens/errors.hpp"

namespace rcdens {

namespace {

Eigen::MatrixXd with_w_column(const Eigen::MatrixXd& x, const Eigen::VectorXd& w) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()) = w;
  return out;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& x, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

Eigen::VectorXd entries_of(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(idx[i]);
  return out;
}

//! Deterministic stride-subsample of a vector down to at most cap entries.
Eigen::VectorXd cap_values(const Eigen::VectorXd& v, int cap) {
  if (cap <= 0 || v.size() <= cap) return v;
  Eigen::VectorXd out(cap);
  for (int i = 0; i < cap; ++i) {
    out(i) = v(static_cast<Eigen::Index>(static_cast<double>(i) * v.size() / cap));
  }
  return out;
}

RegressorParams forest_params(const FitConfig& config, std::uint64_t stream,
                              std::uint64_t substream) {
  RegressorParams p;
  p.n_trees = config.n_trees;
  p.min_leaf = config.min_leaf;
  p.subsample_fraction = config.subsample_fraction;
  p.honesty = config.honesty;
  p.trees_per_group = config.trees_per_group;
  p.seed = derive_seed(config.seed, stream, substream);
  return p;
}

std::vector<double> point_key(const Eigen::VectorXd& x) {
  return {x.data(), x.data() + x.size()};
}

double trapezoid_mass(const Eigen::VectorXd& grid, const Eigen::VectorXd& values) {
  double mass = 0.0;
  for (Eigen::Index i = 0; i + 1 < grid.size(); ++i) {
    mass += 0.5 * (values(i) + values(i + 1)) * (grid(i + 1) - grid(i));
  }
  return mass;
}

}  // namespace

BetaModel BetaModel::fit(const Dataset& data, const RegressorParams& params) {
  data.validate(2 * params.min_leaf);
  BetaModel model;
  const Eigen::VectorXd yw = data.y.cwiseProduct(data.w);
  const Eigen::VectorXd ww = data.w.cwiseProduct(data.w);
  RegressorParams p = params;
  p.seed = derive_seed(params.seed, 0xB0ULL, 0);
  model.ey_ = RegressorModel::fit(data.x, data.y, p);
  p.seed = derive_seed(params.seed, 0xB0ULL, 1);
  model.ew_ = RegressorModel::fit(data.x, data.w, p);
  p.seed = derive_seed(params.seed, 0xB0ULL, 2);
  model.eyw_ = RegressorModel::fit(data.x, yw, p);
  p.seed = derive_seed(params.seed, 0xB0ULL, 3);
  model.eww_ = RegressorModel::fit(data.x, ww, p);
  const double mean_w = data.w.mean();
  const double var_w = (data.w.array() - mean_w).square().sum() / data.w.size();
  // Absolute fallback keeps the ratio finite even for a constant regressor.
  model.denom_floor_ = std::max(1e-6 * var_w, 1e-12);
  return model;
}

BetaModel::Estimate BetaModel::estimate(const Eigen::VectorXd& x) const {
  Estimate est;
  const double ey = ey_.predict(x);
  const double ew = ew_.predict(x);
  const double eyw = eyw_.predict(x);
  const double eww = eww_.predict(x);
  double denom = eww - ew * ew;
  if (denom < denom_floor_) {
    denom = denom_floor_;
    est.denominator_guarded = true;
  }
  est.beta1 = (eyw - ey * ew) / denom;
  est.beta0 = ey - est.beta1 * ew;
  return est;
}

BetaModel estimate_beta(const Dataset& data, const RegressorParams& params) {
  return BetaModel::fit(data, params);
}

ConditionalDensityModel fit_conditional_density(const Dataset& data, const FitConfig& config) {
  data.validate(50);
  if (config.M < 1) throw std::invalid_argument("fit: M must be >= 1");
  const int n = static_cast<int>(data.n());
  const int d = static_cast<int>(data.dim());

  ConditionalDensityModel model;
  model.basis_ = HermiteBasis(config.K1, config.K2);
  model.measure_ = build_measure(config.sigma_t, config.nu_nodes);
  model.config_ = config;
  const int K = model.basis_.size();

  // Step 1: beta-hat and (plain mode) Q-hat on the full sample.
  model.beta_ = BetaModel::fit(data, forest_params(config, 0xBE7AULL, 0));
  QMatrix shared_q;
  if (config.mode == FitConfig::Mode::plain) {
    shared_q = q_inverse(q_matrix(model.basis_, model.measure_, data.w), config.ridge);
  }

  const bool skip_coefficients = static_cast<bool>(config.hooks.pi_override);
  const int n_d = n / 2;

  for (int m = 0; m < config.M; ++m) {
    SplitRecord split;

    // Step 2: random equal split into D and R.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 split_rng(derive_seed(config.seed, 0x5B117ULL, m));
    std::shuffle(perm.begin(), perm.end(), split_rng);
    split.d_indices.assign(perm.begin(), perm.begin() + n_d);
    split.r_indices.assign(perm.begin() + n_d, perm.end());
    std::sort(split.d_indices.begin(), split.d_indices.end());
    std::sort(split.r_indices.begin(), split.r_indices.end());
    const int n_r = static_cast<int>(split.r_indices.size());

    // Step 3: learn m-hat (and g-hat in orthogonal_w mode) on D.
    const Eigen::MatrixXd x_d = rows_of(data.x, split.d_indices);
    const Eigen::VectorXd w_d = entries_of(data.w, split.d_indices);
    const Eigen::VectorXd y_d = entries_of(data.y, split.d_indices);
    if (!config.hooks.m_override && !skip_coefficients) {
      split.m_hat = RegressorModel::fit(with_w_column(x_d, w_d), y_d,
                                        forest_params(config, 0x3EULL, m));
    }
    if (config.mode == FitConfig::Mode::orthogonal_w && !config.hooks.g_override) {
      split.g_hat = RegressorModel::fit(x_d, w_d, forest_params(config, 0x9EULL, m));
    }

    auto g_at = [&](int i) -> double {
      if (config.mode != FitConfig::Mode::orthogonal_w) return 0.0;
      if (config.hooks.g_override) return config.hooks.g_override(data.x.row(i).transpose());
      return split.g_hat->predict(data.x.row(i).transpose());
    };
    auto m_at = [&](int i) -> double {
      if (config.hooks.m_override) {
        return config.hooks.m_override(data.x.row(i).transpose(), data.w(i));
      }
      Eigen::VectorXd q(d + 1);
      q.head(d) = data.x.row(i).transpose();
      q(d) = data.w(i);
      return split.m_hat->predict(q);
    };

    // Effective regressor on R (residualized in orthogonal_w mode).
    Eigen::VectorXd w_eff(n_r);
    for (int r = 0; r < n_r; ++r) {
      const int i = split.r_indices[r];
      w_eff(r) = data.w(i) - g_at(i);
    }

    // Orthogonal_w mode estimates Q on sample R as well (amended Step 4).
    if (config.mode == FitConfig::Mode::orthogonal_w) {
      split.qinv = q_inverse(q_matrix(model.basis_, model.measure_, w_eff), config.ridge);
    } else {
      split.qinv = shared_q;
    }

    if (config.w_average_holdout_only || config.mode == FitConfig::Mode::orthogonal_w) {
      split.w_avg_values = cap_values(w_eff, config.w_average_max);
    } else {
      split.w_avg_values = cap_values(data.w, config.w_average_max);
    }

    if (!skip_coefficients) {
      // Step 4: targets T_k(W_r, Y_r - m-hat) and per-coefficient regressions.
      Eigen::MatrixXd re_targets(n_r, K);
      Eigen::MatrixXd im_targets(n_r, K);
      for (int r = 0; r < n_r; ++r) {
        const int i = split.r_indices[r];
        const Eigen::VectorXcd t = t_operator(model.basis_, model.measure_, w_eff(r),
                                              data.y(i) - m_at(i));
        re_targets.row(r) = t.real();
        im_targets.row(r) = t.imag();
      }

      split.coef_subsample.assign(n_r, -1);
      if (config.inference) {
        const int block = n_r / K;
        if (block < 2 * config.min_leaf) {
          throw ConfigError(
              "fit: inference mode needs floor(|R|/K) >= " +
              std::to_string(2 * config.min_leaf) + "; with K = " + std::to_string(K) +
              " this requires n >= " + std::to_string(4 * K * config.min_leaf) +
              " (got n = " + std::to_string(n) + ")");
        }
        if (block < 100) {
          std::cerr << "[rcdens] warning: coefficient block size " << block
                    << " (= floor(|R|/K)) is below 100; variance estimates may be unstable\n";
        }
        std::vector<int> pos(n_r);
        std::iota(pos.begin(), pos.end(), 0);
        std::mt19937_64 part_rng(derive_seed(config.seed, 0x5B5ULL, m));
        std::shuffle(pos.begin(), pos.end(), part_rng);
        for (int k = 0; k < K; ++k) {
          for (int j = 0; j < block; ++j) split.coef_subsample[pos[k * block + j]] = k;
        }
      }

      const Eigen::MatrixXd features =
          with_w_column(rows_of(data.x, split.r_indices), w_eff);
      split.re_forests.reserve(K);
      split.im_forests.reserve(K);
      for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd feat_k = features;
        Eigen::VectorXd re_k = re_targets.col(k);
        Eigen::VectorXd im_k = im_targets.col(k);
        if (config.inference) {
          std::vector<int> members;
          for (int r = 0; r < n_r; ++r) {
            if (split.coef_subsample[r] == k) members.push_back(r);
          }
          feat_k = rows_of(features, members);
          re_k = entries_of(re_targets.col(k), members);
          im_k = entries_of(im_targets.col(k), members);
        }
        // Coefficient targets are low signal-to-noise, so their forests use
        // leaves that grow with the fitting sample.
        RegressorParams coef_params = forest_params(config, 0xC0EFULL, 4 * (m * K + k));
        coef_params.min_leaf =
            std::max(config.min_leaf, static_cast<int>(feat_k.rows()) / 12);
        split.re_forests.push_back(RegressorModel::fit(feat_k, re_k, coef_params));
        coef_params.seed = derive_seed(config.seed, 0xC0EFULL, 4 * (m * K + k) + 2);
        split.im_forests.push_back(RegressorModel::fit(feat_k, im_k, coef_params));
      }
    }

    model.splits_.push_back(std::move(split));
  }
  return model;
}

BetaModel::Estimate ConditionalDensityModel::beta(const Eigen::VectorXd& x) const {
  return beta_.estimate(x);
}

const PiRecord& ConditionalDensityModel::pi_record(int m, const Eigen::VectorXd& x) const {
  const SplitRecord& split = splits_.at(m);
  const int K = basis_.size();
  std::vector<double> key = point_key(x);

  {
    std::lock_guard<std::mutex> lock(cache_->mutex);
    auto it = cache_->by_point.find(key);
    if (it != cache_->by_point.end() && it->second[m].pi.size() == K) return it->second[m];
  }

  PiRecord record;
  record.pi.resize(K);
  record.sigma2 = Eigen::VectorXd::Zero(K);
  if (config_.hooks.pi_override) {
    record.pi = config_.hooks.pi_override(x);
  } else {
    Eigen::MatrixXd points(split.w_avg_values.size(), x.size() + 1);
    points.leftCols(x.size()).rowwise() = x.transpose();
    points.col(x.size()) = split.w_avg_values;
    for (int k = 0; k < K; ++k) {
      if (config_.inference) {
        const auto re = split.re_forests[k].predict_averaged_with_variance(points);
        const auto im = split.im_forests[k].predict_averaged_with_variance(points);
        record.pi(k) = {re.mean, im.mean};
        record.sigma2(k) = re.variance + im.variance;
      } else {
        record.pi(k) = {split.re_forests[k].predict_averaged(points),
                        split.im_forests[k].predict_averaged(points)};
      }
    }
  }

  std::lock_guard<std::mutex> lock(cache_->mutex);
  auto& slot = cache_->by_point[key];
  if (slot.empty()) slot.resize(splits_.size());
  if (slot[m].pi.size() != K) slot[m] = std::move(record);
  return slot[m];
}

Eigen::VectorXcd ConditionalDensityModel::coefficient_vector(int m,
                                                             const Eigen::VectorXd& x) const {
  // Sieve coefficients are real, so the projection solves the real-restricted
  // normal equations Re(Q) c = Re(Pi) (the one-sided nu system symmetrized
  // over +-t). This is exact for in-span densities and markedly better
  // conditioned than the unrestricted complex solve, which dumps estimation
  // noise of Pi-hat into the smallest eigendirections of Q.
  const SplitRecord& split = splits_.at(m);
  const Eigen::VectorXd real_coef = split.qinv.real_inverse * pi_record(m, x).pi.real();
  return real_coef.cast<std::complex<double>>();
}

namespace {

//! Coefficient vector averaged over splits, reshaped K1 x K2.
Eigen::MatrixXcd averaged_coefficients(const ConditionalDensityModel& model,
                                       const Eigen::VectorXd& x, int only_split = -1) {
  const HermiteBasis& basis = model.basis();
  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(basis.size());
  int used = 0;
  for (int m = 0; m < model.n_splits(); ++m) {
    if (only_split >= 0 && m != only_split) continue;
    c += model.coefficient_vector(m, x);
    ++used;
  }
  c /= static_cast<double>(used);
  Eigen::MatrixXcd grid(basis.K1, basis.K2);
  for (int k2 = 0; k2 < basis.K2; ++k2)
    for (int k1 = 0; k1 < basis.K1; ++k1) grid(k1, k2) = c(basis.flat_index(k1, k2));
  return grid;
}

Eigen::MatrixXd hermite_design(int order_count, const Eigen::VectorXd& grid, double shift) {
  Eigen::MatrixXd design(grid.size(), order_count);
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    design.row(i) = hermite_eval_all(order_count - 1, grid(i) - shift).transpose();
  }
  return design;
}

Eigen::VectorXd slope_curve(const ConditionalDensityModel& model, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& b1_grid, int only_split) {
  const HermiteBasis& basis = model.basis();
  const auto beta = model.beta(x);
  const Eigen::MatrixXcd coef = averaged_coefficients(model, x, only_split);
  Eigen::VectorXd intercept_mass(basis.K1);
  for (int k1 = 0; k1 < basis.K1; ++k1) intercept_mass(k1) = hermite_integral(k1);
  const Eigen::VectorXcd slope_coef = coef.transpose() * intercept_mass;
  const Eigen::MatrixXd design = hermite_design(basis.K2, b1_grid, beta.beta1);
  Eigen::VectorXd curve = (design * slope_coef).real();
  if (model.config().clip_negative) {
    curve = curve.cwiseMax(0.0);
    const double mass = trapezoid_mass(b1_grid, curve);
    if (mass > 0.0) curve /= mass;
  }
  return curve;
}

}  // namespace

DensityEvaluation evaluate_density(const ConditionalDensityModel& model,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& b0_grid,
                                   const Eigen::VectorXd& b1_grid) {
  const HermiteBasis& basis = model.basis();
  const auto beta = model.beta(x);
  const Eigen::MatrixXcd coef = averaged_coefficients(model, x);
  const Eigen::MatrixXd design0 = hermite_design(basis.K1, b0_grid, beta.beta0);
  const Eigen::MatrixXd design1 = hermite_design(basis.K2, b1_grid, beta.beta1);
  const Eigen::MatrixXcd values = design0 * coef * design1.transpose();

  DensityEvaluation out;
  out.values = values.real();
  const double max_re = out.values.cwiseAbs().maxCoeff();
  const double max_im = values.imag().cwiseAbs().maxCoeff();
  out.imag_residual = max_re > 0.0 ? max_im / max_re : max_im;
  if (model.config().clip_negative) {
    out.values = out.values.cwiseMax(0.0);
    double mass = 0.0;
    for (Eigen::Index i = 0; i + 1 < b0_grid.size(); ++i) {
      for (Eigen::Index j = 0; j + 1 < b1_grid.size(); ++j) {
        const double cell = 0.25 * (out.values(i, j) + out.values(i + 1, j) +
                                    out.values(i, j + 1) + out.values(i + 1, j + 1));
        mass += cell * (b0_grid(i + 1) - b0_grid(i)) * (b1_grid(j + 1) - b1_grid(j));
      }
    }
    if (mass > 0.0) out.values /= mass;
  }
  return out;
}

Eigen::VectorXd evaluate_slope_density(const ConditionalDensityModel& model,
                                       const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& b1_grid) {
  return slope_curve(model, x, b1_grid, -1);
}

Eigen::VectorXd evaluate_slope_density_split(const ConditionalDensityModel& model, int m,
                                             const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& b1_grid) {
  if (m < 0 || m >= model.n_splits()) throw std::invalid_argument("split index out of range");
  return slope_curve(model, x, b1_grid, m);
}

MarginalResult marginal_density(const ConditionalDensityModel& model, const Dataset& data,
                                const Eigen::VectorXd& b1_grid, bool keep_per_observation) {
  const int n = static_cast<int>(data.n());
  const int M = model.n_splits();
  if (M == 1) {
    std::cerr << "[rcdens] warning: marginal density with M = 1 has no true out-of-fold "
                 "split for observations in R; using the single split for them\n";
  }

  std::vector<std::vector<bool>> in_r(M, std::vector<bool>(n, false));
  for (int m = 0; m < M; ++m) {
    for (int i : model.split(m).r_indices) in_r[m][i] = true;
  }

  MarginalResult out;
  out.split_used.resize(n, 0);
  if (keep_per_observation) out.per_observation.resize(n, b1_grid.size());
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(b1_grid.size());
  for (int i = 0; i < n; ++i) {
    int use = -1;
    for (int m = 0; m < M; ++m) {
      if (!in_r[m][i]) {
        use = m;
        break;
      }
    }
    if (use < 0) {
      use = 0;
      ++out.degenerate_count;
    }
    out.split_used[i] = use;
    const Eigen::VectorXd curve =
        evaluate_slope_density_split(model, use, data.x.row(i).transpose(), b1_grid);
    if (keep_per_observation) out.per_observation.row(i) = curve.transpose();
    acc += curve;
  }
  out.curve = acc / static_cast<double>(n);
  return out;
}

VariableImportance variable_importance(const ConditionalDensityModel& model) {
  const int K = model.basis().size();
  const int M = model.n_splits();
  if (M == 0 || model.split(0).re_forests.empty()) {
    throw std::logic_error("variable_importance: model has no coefficient forests");
  }
  const int d = model.split(0).re_forests[0].feature_dim() - 1;

  auto x_share = [d](const Eigen::VectorXd& imp) {
    Eigen::VectorXd head = imp.head(d);
    const double total = head.sum();
    return total > 0.0 ? Eigen::VectorXd(head / total)
                       : Eigen::VectorXd(Eigen::VectorXd::Constant(d, 1.0 / d));
  };

  VariableImportance vi;
  vi.shape = Eigen::VectorXd::Zero(d);
  for (int m = 0; m < M; ++m) {
    for (int k = 0; k < K; ++k) {
      vi.shape += x_share(model.split(m).re_forests[k].split_importance());
      vi.shape += x_share(model.split(m).im_forests[k].split_importance());
    }
  }
  vi.shape /= static_cast<double>(2 * K * M);

  const BetaModel& beta = model.beta_model();
  vi.mean = (beta.ey().split_importance() + beta.ew().split_importance() +
             beta.eyw().split_importance() + beta.eww().split_importance()) /
            4.0;
  return vi;
}

}  // namespace rcdens
