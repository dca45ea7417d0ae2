#include "rcdens/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rcdens {

namespace {

// Golub-Welsch: nodes are the eigenvalues of the symmetric tridiagonal Jacobi
// matrix, weights are mu0 * (first eigenvector component)^2.
QuadratureRule golub_welsch(const Eigen::VectorXd& offdiag, double mu0) {
  const Eigen::Index n = offdiag.size() + 1;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    jacobi(i, i + 1) = offdiag(i);
    jacobi(i + 1, i) = offdiag(i);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigs(jacobi);
  QuadratureRule rule;
  rule.nodes = eigs.eigenvalues();
  rule.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v0 = eigs.eigenvectors()(0, i);
    rule.weights(i) = mu0 * v0 * v0;
  }
  return rule;
}

}  // namespace

namespace {

// Orthonormal (w.r.t. e^{-x^2}) Hermite polynomial values p_0..p_{k_max} at x.
// This is the Hermite-function recurrence with the Gaussian factor removed;
// values stay representable for the guarded node counts.
void scaled_hermite(int k_max, double x, Eigen::VectorXd& out) {
  out.resize(k_max + 1);
  out(0) = std::pow(std::numbers::pi, -0.25);
  if (k_max >= 1) out(1) = x * std::numbers::sqrt2 * out(0);
  for (int j = 2; j <= k_max; ++j) {
    out(j) = x * std::sqrt(2.0 / j) * out(j - 1) - std::sqrt((j - 1.0) / j) * out(j - 2);
  }
}

}  // namespace

QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
  if (n > 256) {
    // The Christoffel weight sum reaches e^{x_max^2} and overflows beyond this.
    throw std::invalid_argument("gauss_hermite: n > 256 not supported");
  }
  Eigen::VectorXd offdiag(n - 1);
  for (int i = 1; i < n; ++i) offdiag(i - 1) = std::sqrt(i / 2.0);
  QuadratureRule rule = golub_welsch(offdiag, std::sqrt(std::numbers::pi));

  // Polish the eigenvalue nodes by Newton on p_n and replace the eigenvector
  // weights by the Christoffel function 1 / sum_{k<n} p_k(x)^2: eigenvector
  // weights only carry absolute accuracy, which is not enough where the
  // weights themselves are ~e^{-x^2}.
  Eigen::VectorXd p;
  for (int i = 0; i < n; ++i) {
    double x = rule.nodes(i);
    for (int iter = 0; iter < 4; ++iter) {
      scaled_hermite(n, x, p);
      const double deriv = std::sqrt(2.0 * n) * p(n - 1);
      if (deriv == 0.0) break;
      x -= p(n) / deriv;
    }
    rule.nodes(i) = x;
    scaled_hermite(n - 1, x, p);
    rule.weights(i) = 1.0 / p.squaredNorm();
  }
  return rule;
}

QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
  if (!(a < b)) throw std::invalid_argument("gauss_legendre: need a < b");
  Eigen::VectorXd offdiag(n - 1);
  for (int i = 1; i < n; ++i) offdiag(i - 1) = i / std::sqrt(4.0 * i * i - 1.0);
  QuadratureRule ref = golub_welsch(offdiag, 2.0);
  QuadratureRule rule;
  rule.nodes = 0.5 * (b - a) * ref.nodes.array() + 0.5 * (a + b);
  rule.weights = 0.5 * (b - a) * ref.weights;
  return rule;
}

QuadratureRule composite_gauss_legendre(const std::vector<double>& edges, int order) {
  if (edges.size() < 2) throw std::invalid_argument("composite_gauss_legendre: need >= 2 edges");
  const std::size_t panels = edges.size() - 1;
  QuadratureRule rule;
  rule.nodes.resize(static_cast<Eigen::Index>(panels) * order);
  rule.weights.resize(static_cast<Eigen::Index>(panels) * order);
  Eigen::Index at = 0;
  for (std::size_t p = 0; p < panels; ++p) {
    QuadratureRule panel = gauss_legendre(order, edges[p], edges[p + 1]);
    rule.nodes.segment(at, order) = panel.nodes;
    rule.weights.segment(at, order) = panel.weights;
    at += order;
  }
  return rule;
}

QuadratureRule graded_symmetric(double range, double first_width, int order) {
  if (!(range > 0.0 && first_width > 0.0)) {
    throw std::invalid_argument("graded_symmetric: range and first_width must be positive");
  }
  std::vector<double> edges{0.0};
  double width = first_width;
  while (edges.back() < range) {
    edges.push_back(std::min(edges.back() + width, range));
    width *= 2.0;
  }
  std::vector<double> full(edges.rbegin(), edges.rend());
  for (double& e : full) e = -e;
  full.insert(full.end(), edges.begin() + 1, edges.end());
  return composite_gauss_legendre(full, order);
}

}  // namespace rcdens
