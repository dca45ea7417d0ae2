#include "rcdens/hermite.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rcdens {

namespace {

void check_order(int k, int limit) {
  if (k < 0) throw std::domain_error("hermite: order must be nonnegative");
  if (k > limit) {
    throw std::domain_error("hermite: order " + std::to_string(k) +
                            " exceeds guarded limit " + std::to_string(limit));
  }
}

double h0(double b) {
  static const double norm = std::pow(std::numbers::pi, -0.25);
  return norm * std::exp(-0.5 * b * b);
}

}  // namespace

double hermite_eval(int k, double b) {
  check_order(k, kMaxHermiteOrder);
  double prev = 0.0;
  double cur = h0(b);
  for (int j = 1; j <= k; ++j) {
    const double next = b * std::sqrt(2.0 / j) * cur - std::sqrt((j - 1.0) / j) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

Eigen::VectorXd hermite_eval_all(int k_max, double b) {
  check_order(k_max, kMaxHermiteOrder);
  Eigen::VectorXd out(k_max + 1);
  out(0) = h0(b);
  if (k_max >= 1) out(1) = b * std::sqrt(2.0) * out(0);
  for (int j = 2; j <= k_max; ++j) {
    out(j) = b * std::sqrt(2.0 / j) * out(j - 1) - std::sqrt((j - 1.0) / j) * out(j - 2);
  }
  return out;
}

double hermite_derivative(int k, double b) {
  check_order(k, kMaxHermiteOrder - 1);
  const Eigen::VectorXd h = hermite_eval_all(k + 1, b);
  double d = -std::sqrt((k + 1) / 2.0) * h(k + 1);
  if (k >= 1) d += std::sqrt(k / 2.0) * h(k - 1);
  return d;
}

double hermite_integral(int k) {
  check_order(k, kMaxHermiteOrder);
  if (k % 2 == 1) return 0.0;
  // sqrt(2pi) i^k h_k(0) with i^k (-1)^{k/2} = 1 for even k.
  return std::sqrt(2.0 * std::numbers::pi) * std::abs(hermite_eval(k, 0.0));
}

HermiteBasis::HermiteBasis(int k1, int k2) : K1(k1), K2(k2) {
  if (k1 < 1 || k2 < 1) throw std::invalid_argument("HermiteBasis: K1, K2 must be >= 1");
  check_order(k1 - 1, kMaxHermiteOrder);
  check_order(k2 - 1, kMaxHermiteOrder);
}

Eigen::VectorXd HermiteBasis::eval(double b0, double b1) const {
  const Eigen::VectorXd u = hermite_eval_all(K1 - 1, b0);
  const Eigen::VectorXd v = hermite_eval_all(K2 - 1, b1);
  Eigen::VectorXd out(size());
  for (int k2 = 0; k2 < K2; ++k2)
    for (int k1 = 0; k1 < K1; ++k1) out(flat_index(k1, k2)) = u(k1) * v(k2);
  return out;
}

Eigen::VectorXcd HermiteBasis::fourier_eval(double t, double s) const {
  const Eigen::VectorXd u = hermite_eval_all(K1 - 1, t);
  const Eigen::VectorXd v = hermite_eval_all(K2 - 1, s);
  const double two_pi = 2.0 * std::numbers::pi;
  Eigen::VectorXcd out(size());
  for (int k2 = 0; k2 < K2; ++k2)
    for (int k1 = 0; k1 < K1; ++k1)
      out(flat_index(k1, k2)) = two_pi * imaginary_power(k1 + k2) * u(k1) * v(k2);
  return out;
}

std::complex<double> imaginary_power(int m) {
  switch (((m % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

}  // namespace rcdens
