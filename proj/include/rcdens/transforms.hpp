#pragma once

#include <Eigen/Core>
#include <complex>
#include <functional>

#include "rcdens/hermite.hpp"
#include "rcdens/quadrature.hpp"

namespace rcdens {

//! Discretized weighting measure nu ~ lognormal(0, sigma_t): fixed positive
//! nodes t_j with probability weights omega_j summing to one.
struct WeightingMeasure {
  double sigma_t = 1.0;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return nodes.size(); }
};

//! Gram matrix Q of the Fourier-transformed basis under (nu, empirical W),
//! with its regularized inverse. min_eig is the ill-posedness diagnostic.
//!
//! real_inverse inverts Re(Q) + ridge I. Re(Q) is the Gram matrix under the
//! symmetrized weighting measure (t and -t weighted equally), which is the
//! system the projection onto real sieve coefficients actually solves; its
//! smallest eigenvalue is never below Q's.
struct QMatrix {
  Eigen::MatrixXcd entries;
  Eigen::MatrixXcd inverse;
  Eigen::MatrixXd real_inverse;
  double ridge_used = 0.0;
  double min_eig = 0.0;
  double max_eig = 0.0;
};

//! Gauss-Hermite nodes mapped through t = exp(sigma_t * z), weights
//! normalized to sum exactly one. Deterministic for fixed inputs.
WeightingMeasure build_measure(double sigma_t, int n_nodes);

//! The operator T(w, y) = int (F q^K)(-t, -t w) e^{i t y} dnu(t); entry k is
//! sum_j omega_j 2pi (-i)^{k1+k2} h_{k1}(t_j) h_{k2}(t_j w) e^{i t_j y}.
Eigen::VectorXcd t_operator(const HermiteBasis& basis, const WeightingMeasure& measure,
                            double w, double y);

//! Sample Gram matrix Q-hat = (1/n) sum_i int (F q^K)(t, t W_i) (F q^K)^H dnu(t).
//! Hermitian PSD by construction; eigenvalue range recorded, inverse left empty.
QMatrix q_matrix(const HermiteBasis& basis, const WeightingMeasure& measure,
                 const Eigen::VectorXd& w_samples);

//! Populate the inverse of (Q + ridge I) by Hermitian eigendecomposition.
//! With ridge = 0 and min_eig < 1e-12 * max_eig, an automatic spectral floor
//! of 1e-10 * max_eig is applied and recorded in ridge_used.
QMatrix q_inverse(const QMatrix& q, double ridge);

//! Default t-rule for v_operator: 256 Gauss-Legendre nodes on (0, 12].
//! Hermite factors decay like e^{-t^2/2}, so the truncated tail is negligible.
QuadratureRule default_v_rule();

//! The CV kernel V(y, w): entry k is
//!   (1/pi^2) Re{ int_0^inf t e^{ity} 2pi (-i)^{k1+k2} h_{k1}(t) h_{k2}(tw) dt } / f_W(w),
//! the half-line fold of a conjugate-symmetric full-line integral.
Eigen::VectorXd v_operator(const HermiteBasis& basis, double w, double y,
                           double fw_at_w, const QuadratureRule& t_rule);

//! Conditional characteristic function phi_{Y|X,W}(t | x, w) as a callable in
//! (t, w); the x is baked in by the caller.
using CharacteristicFn = std::function<std::complex<double>(double t, double w)>;

struct InversionResult {
  //! values(i, j) is the density at (b_grid[i], b_grid[j]).
  Eigen::MatrixXd values;
  double max_imag_residual = 0.0;
};

//! Identification oracle: truncated double integral
//!   f(b) = (1/(2pi)^2) int int |t| e^{-i b'(t, tw)} phi(t, w) dt dw
//! over the supplied rules. Test oracle only; not on the estimation path.
InversionResult fourier_inversion_oracle(const CharacteristicFn& phi,
                                         const Eigen::VectorXd& b_grid,
                                         const QuadratureRule& t_rule,
                                         const QuadratureRule& w_rule);

}  // namespace rcdens
