#pragma once

#include <Eigen/Core>
#include <vector>

namespace rcdens {

//! A one-dimensional quadrature rule: sum_j weights[j] * f(nodes[j]).
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return nodes.size(); }
};

//! Gauss-Hermite rule for weight exp(-x^2) on (-inf, inf), computed by
//! Golub-Welsch from the Jacobi matrix of the (physicists') Hermite
//! polynomials. Exact for polynomials up to degree 2n - 1.
QuadratureRule gauss_hermite(int n);

//! Gauss-Legendre rule on [a, b].
QuadratureRule gauss_legendre(int n, double a, double b);

//! Composite Gauss-Legendre rule: one panel per consecutive edge pair,
//! `order` nodes each.
QuadratureRule composite_gauss_legendre(const std::vector<double>& edges, int order);

//! Symmetric rule on [-range, range] with panel widths growing geometrically
//! away from the origin (edges 0, first_width, 2*first_width, 4*, ... capped
//! at range, mirrored to the negative axis). Suited to integrands that are
//! increasingly smooth/flat far from zero.
QuadratureRule graded_symmetric(double range, double first_width, int order);

}  // namespace rcdens
