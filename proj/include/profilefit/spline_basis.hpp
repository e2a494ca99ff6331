#ifndef PROFILEFIT_SPLINE_BASIS_HPP
#define PROFILEFIT_SPLINE_BASIS_HPP

#include <Eigen/Dense>

#include <vector>

namespace profilefit {

/// Clamped B-spline basis on [lo, hi].  order = 4 is the cubic default; the
/// basis dimension is K = interior knots + order.  Immutable after
/// construction and freely shared across threads.
class SplineBasis {
public:
    SplineBasis() = default;
    SplineBasis(std::vector<double> interior_knots, int order = 4, double lo = -1.0,
                double hi = 1.0);

    /// Interior knot positions for an edge-thinned layout: uniform abscissae
    /// pushed through the odd map t(u) = (1-w) u + w u^5 on [-1, 1], with
    /// w = (f - 1)/(f + 4) so the outermost gap is ~f times the innermost one
    /// (f = edge_thinning; f = 1 gives uniform knots).  The result is mapped
    /// affinely onto (lo, hi) and is exactly symmetric about the midpoint.
    static std::vector<double> make_knots(int n_interior, double edge_thinning,
                                          double lo = -1.0, double hi = 1.0);

    int size() const { return num_basis_; }
    int order() const { return order_; }
    double lo() const { return knots_.empty() ? 0.0 : knots_.front(); }
    double hi() const { return knots_.empty() ? 0.0 : knots_.back(); }
    const std::vector<double>& knots() const { return knots_; }
    std::vector<double> interior_knots() const;

    /// Values of the `order` basis functions supported at x, written to
    /// out[0..order-1]; returns the index of the first one.  Throws
    /// DomainError for x outside [lo, hi].
    int eval_window(double x, double* out) const;

    /// Rows 0..nders of out hold the d-th derivatives of the same window
    /// (row-major, order columns per row).  Returns the first basis index.
    int derivatives_window(double x, int nders, double* out) const;

    /// All K basis values at x (zeros outside the active window).
    Eigen::VectorXd eval_dense(double x) const;

    /// Exact Gram matrix of third derivatives, S_kl = integral B_k''' B_l'''.
    /// Third derivatives of an order-4 spline are piecewise constant, so the
    /// integral is a finite sum over knot intervals; higher orders use a
    /// Gauss rule of sufficient degree.  Symmetric PSD; for order >= 4 the
    /// null space is exactly the quadratic polynomials (dimension 3).
    Eigen::MatrixXd penalty_matrix() const;

private:
    int find_span(double x) const;

    std::vector<double> knots_; // clamped: order copies of lo and hi
    int order_ = 0;
    int num_basis_ = 0;
};

} // namespace profilefit

#endif
