#include "rcdens/transforms.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rcdens {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

WeightingMeasure build_measure(double sigma_t, int n_nodes) {
  if (!(sigma_t > 0.0)) throw std::invalid_argument("build_measure: sigma_t must be positive");
  if (n_nodes < 8) throw std::invalid_argument("build_measure: need at least 8 nodes");
  const QuadratureRule gh = gauss_hermite(n_nodes);
  WeightingMeasure m;
  m.sigma_t = sigma_t;
  m.nodes.resize(n_nodes);
  m.weights.resize(n_nodes);
  // E[g(T)] with log T ~ N(0, sigma_t^2): substitute z = sqrt(2) x.
  for (int j = 0; j < n_nodes; ++j) {
    m.nodes(j) = std::exp(sigma_t * std::numbers::sqrt2 * gh.nodes(j));
    m.weights(j) = gh.weights(j) / std::sqrt(std::numbers::pi);
  }
  m.weights /= m.weights.sum();
  return m;
}

Eigen::VectorXcd t_operator(const HermiteBasis& basis, const WeightingMeasure& measure,
                            double w, double y) {
  if (!std::isfinite(w) || !std::isfinite(y)) {
    throw std::invalid_argument("t_operator: w and y must be finite");
  }
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(basis.size());
  for (Eigen::Index j = 0; j < measure.size(); ++j) {
    const double t = measure.nodes(j);
    const Eigen::VectorXd u = hermite_eval_all(basis.K1 - 1, t);
    const Eigen::VectorXd v = hermite_eval_all(basis.K2 - 1, t * w);
    const std::complex<double> phase =
        measure.weights(j) * kTwoPi * std::polar(1.0, t * y);
    for (int k2 = 0; k2 < basis.K2; ++k2) {
      for (int k1 = 0; k1 < basis.K1; ++k1) {
        out(basis.flat_index(k1, k2)) +=
            phase * std::conj(imaginary_power(k1 + k2)) * u(k1) * v(k2);
      }
    }
  }
  return out;
}

QMatrix q_matrix(const HermiteBasis& basis, const WeightingMeasure& measure,
                 const Eigen::VectorXd& w_samples) {
  if (w_samples.size() == 0) throw std::invalid_argument("q_matrix: empty sample");
  const int K = basis.size();
  // (F q_k)(t, tw) = 2pi i^{k1+k2} h_{k1}(t) h_{k2}(tw) = D * g with real g and
  // unitary phase diagonal D, so Q = D M D^H for the real symmetric moment
  // matrix M of g. Accumulating M keeps Q exactly Hermitian and shares its
  // spectrum with M.
  Eigen::MatrixXd moment = Eigen::MatrixXd::Zero(K, K);
  Eigen::VectorXd g(K);
  for (Eigen::Index i = 0; i < w_samples.size(); ++i) {
    for (Eigen::Index j = 0; j < measure.size(); ++j) {
      const double t = measure.nodes(j);
      const Eigen::VectorXd u = hermite_eval_all(basis.K1 - 1, t);
      const Eigen::VectorXd v = hermite_eval_all(basis.K2 - 1, t * w_samples(i));
      for (int k2 = 0; k2 < basis.K2; ++k2)
        for (int k1 = 0; k1 < basis.K1; ++k1) g(basis.flat_index(k1, k2)) = u(k1) * v(k2);
      moment.selfadjointView<Eigen::Lower>().rankUpdate(g, measure.weights(j));
    }
  }
  moment = moment.selfadjointView<Eigen::Lower>();
  moment *= kTwoPi * kTwoPi / static_cast<double>(w_samples.size());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigs(moment, Eigen::EigenvaluesOnly);
  QMatrix q;
  q.min_eig = eigs.eigenvalues().minCoeff();
  q.max_eig = eigs.eigenvalues().maxCoeff();
  q.entries.resize(K, K);
  for (int r = 0; r < K; ++r) {
    const auto [r1, r2] = basis.pair_index(r);
    for (int c = 0; c < K; ++c) {
      const auto [c1, c2] = basis.pair_index(c);
      q.entries(r, c) =
          imaginary_power(r1 + r2) * std::conj(imaginary_power(c1 + c2)) * moment(r, c);
    }
  }
  return q;
}

QMatrix q_inverse(const QMatrix& q, double ridge) {
  if (ridge < 0.0) throw std::invalid_argument("q_inverse: ridge must be nonnegative");
  QMatrix out = q;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eigs(q.entries);
  const Eigen::VectorXd& lambda = eigs.eigenvalues();
  out.min_eig = lambda.minCoeff();
  out.max_eig = lambda.maxCoeff();
  double used = ridge;
  if (used == 0.0 && out.min_eig < 1e-12 * out.max_eig) {
    used = 1e-10 * out.max_eig;
  }
  Eigen::VectorXd inv_lambda = (lambda.array() + used).inverse();
  out.inverse = eigs.eigenvectors() * inv_lambda.asDiagonal() *
                eigs.eigenvectors().adjoint();
  out.ridge_used = used;

  const Eigen::MatrixXd real_part = q.entries.real();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> real_eigs(real_part);
  Eigen::VectorXd real_inv_lambda = (real_eigs.eigenvalues().array() + used).inverse();
  out.real_inverse = real_eigs.eigenvectors() * real_inv_lambda.asDiagonal() *
                     real_eigs.eigenvectors().transpose();
  return out;
}

QuadratureRule default_v_rule() { return gauss_legendre(256, 0.0, 12.0); }

Eigen::VectorXd v_operator(const HermiteBasis& basis, double w, double y,
                           double fw_at_w, const QuadratureRule& t_rule) {
  if (!(fw_at_w > 0.0)) throw std::invalid_argument("v_operator: density value must be positive");
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(basis.size());
  for (Eigen::Index j = 0; j < t_rule.size(); ++j) {
    const double t = t_rule.nodes(j);
    const Eigen::VectorXd u = hermite_eval_all(basis.K1 - 1, t);
    const Eigen::VectorXd v = hermite_eval_all(basis.K2 - 1, t * w);
    const std::complex<double> phase =
        t_rule.weights(j) * t * kTwoPi * std::polar(1.0, t * y);
    for (int k2 = 0; k2 < basis.K2; ++k2) {
      for (int k1 = 0; k1 < basis.K1; ++k1) {
        acc(basis.flat_index(k1, k2)) +=
            phase * std::conj(imaginary_power(k1 + k2)) * u(k1) * v(k2);
      }
    }
  }
  const double scale = 1.0 / (std::numbers::pi * std::numbers::pi * fw_at_w);
  return scale * acc.real();
}

InversionResult fourier_inversion_oracle(const CharacteristicFn& phi,
                                         const Eigen::VectorXd& b_grid,
                                         const QuadratureRule& t_rule,
                                         const QuadratureRule& w_rule) {
  const Eigen::Index nb = b_grid.size();
  const Eigen::Index nt = t_rule.size();
  const Eigen::Index nw = w_rule.size();
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(nb, nb);
  Eigen::VectorXcd inner(nb);
  for (Eigen::Index jt = 0; jt < nt; ++jt) {
    const double t = t_rule.nodes(jt);
    // inner(b1) = sum_w omega_w phi(t, w) e^{-i b1 t w}
    inner.setZero();
    for (Eigen::Index jw = 0; jw < nw; ++jw) {
      const double w = w_rule.nodes(jw);
      const std::complex<double> c = w_rule.weights(jw) * phi(t, w);
      const double freq = t * w;
      for (Eigen::Index j1 = 0; j1 < nb; ++j1) {
        inner(j1) += c * std::polar(1.0, -b_grid(j1) * freq);
      }
    }
    const double wt = t_rule.weights(jt) * std::abs(t);
    for (Eigen::Index j0 = 0; j0 < nb; ++j0) {
      const std::complex<double> outer = wt * std::polar(1.0, -b_grid(j0) * t);
      acc.row(j0) += outer * inner.transpose();
    }
  }
  acc /= kTwoPi * kTwoPi;
  InversionResult result;
  result.values = acc.real();
  result.max_imag_residual = acc.imag().cwiseAbs().maxCoeff();
  return result;
}

}  // namespace rcdens
