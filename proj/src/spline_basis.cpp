#include "profilefit/spline_basis.hpp"
#include "profilefit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace profilefit {

SplineBasis::SplineBasis(std::vector<double> interior_knots, int order, double lo, double hi)
    : order_(order) {
    if (order < 2 || order > 12)
        throw ValidationError("spline order must be in [2, 12]");
    if (!(hi > lo))
        throw ValidationError("spline domain must satisfy hi > lo");
    std::sort(interior_knots.begin(), interior_knots.end());
    for (std::size_t i = 0; i < interior_knots.size(); ++i) {
        if (!(interior_knots[i] > lo && interior_knots[i] < hi))
            throw ValidationError("interior knots must lie strictly inside the domain");
        if (i > 0 && !(interior_knots[i] > interior_knots[i - 1]))
            throw ValidationError("interior knots must be strictly increasing");
    }
    knots_.assign(order, lo);
    knots_.insert(knots_.end(), interior_knots.begin(), interior_knots.end());
    knots_.insert(knots_.end(), order, hi);
    num_basis_ = int(interior_knots.size()) + order;
}

std::vector<double> SplineBasis::make_knots(int n_interior, double edge_thinning, double lo,
                                            double hi) {
    if (n_interior < 1)
        throw ValidationError("make_knots requires n_interior >= 1");
    if (!(edge_thinning >= 1.0))
        throw ValidationError("make_knots requires edge_thinning >= 1");
    const double w = (edge_thinning - 1.0) / (edge_thinning + 4.0);
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    std::vector<double> knots(n_interior);
    for (int i = 1; i <= n_interior; ++i) {
        // u = (2i - (n+1))/(n+1) is exactly antisymmetric in i, and the odd
        // map preserves that, so the layout mirrors bit-exactly.
        const double u = double(2 * i - (n_interior + 1)) / double(n_interior + 1);
        const double u2 = u * u;
        const double t = (1.0 - w) * u + w * (u2 * u2 * u);
        knots[i - 1] = mid + half * t;
    }
    return knots;
}

std::vector<double> SplineBasis::interior_knots() const {
    return std::vector<double>(knots_.begin() + order_, knots_.end() - order_);
}

int SplineBasis::find_span(double x) const {
    const int n_knots = int(knots_.size());
    const int last_span = n_knots - order_ - 1; // start of last nonempty span
    // Right-closed at the boundary: x == hi evaluates in the last span.
    if (x >= knots_[last_span])
        return last_span;
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
    return int(it - knots_.begin()) - 1;
}

int SplineBasis::eval_window(double x, double* out) const {
    if (!(x >= lo() && x <= hi())) {
        std::ostringstream msg;
        msg << "evaluation point " << x << " outside spline domain [" << lo() << ", " << hi()
            << "]";
        throw DomainError(msg.str());
    }
    const int span = find_span(x);
    const int p = order_ - 1;
    double left[16], right[16];
    out[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = x - knots_[span + 1 - j];
        right[j] = knots_[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
    return span - p;
}

int SplineBasis::derivatives_window(double x, int nders, double* out) const {
    if (!(x >= lo() && x <= hi()))
        throw DomainError("evaluation point outside spline domain");
    const int span = find_span(x);
    const int p = order_ - 1;
    const int n = std::min(nders, p);

    double ndu[16][16], a[2][16], left[16], right[16];
    ndu[0][0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = x - knots_[span + 1 - j];
        right[j] = knots_[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    for (int j = 0; j <= p; ++j)
        out[j] = ndu[j][p];
    for (int k = 1; k <= nders; ++k)
        for (int j = 0; j <= p; ++j)
            out[k * order_ + j] = 0.0;

    for (int r = 0; r <= p; ++r) {
        int s1 = 0, s2 = 1;
        a[0][0] = 1.0;
        for (int k = 1; k <= n; ++k) {
            double d = 0.0;
            const int rk = r - k, pk = p - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            const int j1 = rk >= -1 ? 1 : -rk;
            const int j2 = r - 1 <= pk ? k - 1 : p - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                d += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            out[k * order_ + r] = d;
            std::swap(s1, s2);
        }
    }
    double factor = double(p);
    for (int k = 1; k <= n; ++k) {
        for (int j = 0; j <= p; ++j)
            out[k * order_ + j] *= factor;
        factor *= double(p - k);
    }
    return span - p;
}

Eigen::VectorXd SplineBasis::eval_dense(double x) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(num_basis_);
    double w[16];
    const int first = eval_window(x, w);
    for (int j = 0; j < order_; ++j)
        v[first + j] = w[j];
    return v;
}

namespace {

// Gauss-Legendre nodes/weights on [-1, 1] for n = 1..5.
struct GaussRule {
    int n;
    const double* nodes;
    const double* weights;
};

const double g1n[] = {0.0};
const double g1w[] = {2.0};
const double g2n[] = {-0.5773502691896257, 0.5773502691896257};
const double g2w[] = {1.0, 1.0};
const double g3n[] = {-0.7745966692414834, 0.0, 0.7745966692414834};
const double g3w[] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
const double g4n[] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                      0.8611363115940526};
const double g4w[] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                      0.3478548451374538};
const double g5n[] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                      0.9061798459386640};
const double g5w[] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                      0.4786286704993665, 0.2369268850561891};

GaussRule gauss_rule(int n) {
    switch (n) {
    case 1: return {1, g1n, g1w};
    case 2: return {2, g2n, g2w};
    case 3: return {3, g3n, g3w};
    case 4: return {4, g4n, g4w};
    default: return {5, g5n, g5w};
    }
}

} // namespace

Eigen::MatrixXd SplineBasis::penalty_matrix() const {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(num_basis_, num_basis_);
    if (order_ < 4)
        return S; // third derivative vanishes almost everywhere

    // On each knot interval the third derivatives are polynomials of degree
    // order-4, so a rule exact to degree 2(order-4) integrates the products
    // with no quadrature error; for the cubic default this is the midpoint.
    const GaussRule rule = gauss_rule(std::max(1, order_ - 3));
    double ders[4 * 16];
    for (std::size_t i = order_ - 1; i + order_ < knots_.size(); ++i) {
        const double a = knots_[i], b = knots_[i + 1];
        if (!(b > a))
            continue;
        for (int q = 0; q < rule.n; ++q) {
            const double x = 0.5 * (a + b) + 0.5 * (b - a) * rule.nodes[q];
            const double wq = 0.5 * (b - a) * rule.weights[q];
            const int first = derivatives_window(x, 3, ders);
            const double* d3 = ders + 3 * order_;
            for (int r = 0; r < order_; ++r)
                for (int c = 0; c < order_; ++c)
                    S(first + r, first + c) += wq * d3[r] * d3[c];
        }
    }
    // Numerical symmetrization; construction is already symmetric up to
    // rounding.
    S = 0.5 * (S + S.transpose()).eval();
    return S;
}

} // namespace profilefit
