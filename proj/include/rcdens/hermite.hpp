#pragma once

#include <Eigen/Core>
#include <complex>

namespace rcdens {

//! Highest Hermite order the three-term recurrence is guarded for.
inline constexpr int kMaxHermiteOrder = 60;

//! L2-orthonormal Hermite function h_k(b) = H_k(b) e^{-b^2/2} / (pi^{1/4} sqrt(2^k k!)),
//! evaluated by the stable recurrence
//!   h_k(b) = b sqrt(2/k) h_{k-1}(b) - sqrt((k-1)/k) h_{k-2}(b),
//!   h_0(b) = pi^{-1/4} e^{-b^2/2}.
//! Eigenfunctions of the Fourier transform (F f)(t) = int e^{itb} f(b) db with
//! eigenvalue sqrt(2pi) i^k; k is ZERO-based throughout this codebase.
double hermite_eval(int k, double b);

//! All of h_0(b), ..., h_{k_max}(b) in one recurrence pass.
Eigen::VectorXd hermite_eval_all(int k_max, double b);

//! Derivative h_k'(b) = sqrt(k/2) h_{k-1}(b) - sqrt((k+1)/2) h_{k+1}(b)
//! (first term absent for k = 0).
double hermite_derivative(int k, double b);

//! Full-line integral int h_k(b) db = sqrt(2pi) i^k h_k(0); zero for odd k,
//! real and positive for even k. Used to integrate the intercept direction
//! out of tensor-product expansions.
double hermite_integral(int k);

//! Tensor-product Hermite basis of size K = K1 * K2 over (b0, b1).
//! Flat index k runs row-major with k1 fastest: k = k2 * K1 + k1.
struct HermiteBasis {
  int K1 = 1;
  int K2 = 1;

  HermiteBasis() = default;
  HermiteBasis(int k1, int k2);

  int size() const { return K1 * K2; }
  int flat_index(int k1, int k2) const { return k2 * K1 + k1; }
  std::pair<int, int> pair_index(int k) const { return {k % K1, k / K1}; }

  //! Entry k of q^K(b0, b1): h_{k1}(b0) * h_{k2}(b1).
  Eigen::VectorXd eval(double b0, double b1) const;

  //! Entry k of the bivariate Fourier transform (F q_k)(t, s)
  //! = 2pi i^{k1+k2} h_{k1}(t) h_{k2}(s).
  Eigen::VectorXcd fourier_eval(double t, double s) const;
};

//! i^m for integer m (zero-based powers of the imaginary unit).
std::complex<double> imaginary_power(int m);

}  // namespace rcdens
