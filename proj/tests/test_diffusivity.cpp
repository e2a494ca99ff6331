#include "profilefit/diffusivity.hpp"
#include "profilefit/errors.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace profilefit;

namespace {

SplineBasis chi_basis(int knots = 8) {
    return SplineBasis(SplineBasis::make_knots(knots, 1.0, 0.0, 1.0), 4, 0.0, 1.0);
}

FittedModel chi_model_from(const SplineBasis& basis,
                           const std::function<double(double)>& log_chi) {
    FittedModel m = testutil::make_model(
        basis, {{std::string(kIntercept), log_chi}}, {});
    m.kind = "diffusivity";
    return m;
}

DischargeConditions flat_conditions(double n0 = 2.0, double s0 = 800.0, double edge = 100.0,
                                    double a = 1.0) {
    DischargeConditions c;
    c.id = "d0";
    c.psi_grid = {0.0, 0.5, 1.0};
    c.density = {n0, n0, n0};
    c.source = {s0, s0, s0};
    c.edge_temp = edge;
    c.minor_radius = a;
    return c;
}

} // namespace

TEST_CASE("conditions validation") {
    auto good = flat_conditions();
    CHECK_NOTHROW(good.validate());

    auto bad = good;
    bad.psi_grid = {0.0, 0.5, 0.9}; // does not reach the edge
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = good;
    bad.density[1] = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = good;
    bad.edge_temp = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("constant-coefficient cylinder matches the analytic solution") {
    const double chi0 = 1.7, n0 = 2.0, s0 = 800.0, edge = 100.0, a = 1.2;
    const FittedModel chi = chi_model_from(chi_basis(), [&](double) { return std::log(chi0); });
    const auto cond = flat_conditions(n0, s0, edge, a);

    const ForwardSolution sol = forward_temperature(chi, cond, 64);
    for (std::size_t k = 0; k < sol.psi.size(); ++k) {
        const double r = a * sol.psi[k];
        const double expected = edge + s0 * (a * a - r * r) / (4.0 * n0 * chi0);
        CHECK(sol.temperature[k] == doctest::Approx(expected).epsilon(1e-12));
    }

    // no source: temperature pinned at the edge value everywhere
    auto cold = cond;
    cold.source = {0.0, 0.0, 0.0};
    const ForwardSolution flat = forward_temperature(chi, cold, 64);
    for (double t : flat.temperature)
        CHECK(t == doctest::Approx(edge).epsilon(1e-14));

    CHECK_THROWS_AS(forward_temperature(chi, cond, 8), ValidationError);
    auto vac = cond;
    vac.density = {0.0, 0.0, 0.0};
    CHECK_THROWS_AS(forward_temperature(chi, vac, 64), NumericalError);
}

TEST_CASE("grid convergence is second order") {
    // gaussian chi profile has a closed-form solution:
    // T = edge + s0 / (4 n0 chi0 beta) (exp(-beta r^2) - exp(-beta a^2))
    const double chi0 = 1.0, beta = 1.1, n0 = 2.0, s0 = 900.0, edge = 120.0, a = 1.0;
    const FittedModel chi =
        chi_model_from(chi_basis(10), [&](double psi) { return std::log(chi0) + beta * psi * psi; });
    const auto cond = flat_conditions(n0, s0, edge, a);

    auto max_err = [&](int grid) {
        const ForwardSolution sol = forward_temperature(chi, cond, grid);
        double err = 0.0;
        for (std::size_t k = 0; k < sol.psi.size(); ++k) {
            const double r = a * sol.psi[k];
            const double exact =
                edge + s0 / (4.0 * n0 * chi0 * beta) *
                           (std::exp(-beta * r * r) - std::exp(-beta * a * a));
            err = std::max(err, std::abs(sol.temperature[k] - exact));
        }
        return err;
    };

    // the spline reproduces the quadratic log-chi exactly, so the remaining
    // error is pure quadrature
    const double e64 = max_err(64), e128 = max_err(128), e256 = max_err(256);
    CHECK(std::log2(e64 / e128) >= 1.9);
    CHECK(std::log2(e128 / e256) >= 1.9);
}

TEST_CASE("jacobian matches finite differences") {
    const SplineBasis basis = chi_basis(6);
    FittedModel chi = chi_model_from(basis, [](double psi) { return 0.3 - 0.5 * psi * psi; });
    auto cond = flat_conditions();
    cond.source = {900.0, 700.0, 100.0}; // non-flat source
    std::vector<double> points = {0.05, 0.2, 0.45, 0.7, 0.92};

    const Eigen::MatrixXd J = forward_jacobian_at_points(chi, cond, points, 129);
    const double h = 1e-6;
    for (int c = 0; c < basis.size(); ++c) {
        FittedModel up = chi, dn = chi;
        up.terms[0].coefficients[c] += h;
        dn.terms[0].coefficients[c] -= h;
        const auto tu = forward_at_points(up, cond, points, 129);
        const auto td = forward_at_points(dn, cond, points, 129);
        for (std::size_t p = 0; p < points.size(); ++p) {
            const double fd = (tu[p] - td[p]) / (2.0 * h);
            CHECK(std::abs(J(int(p), c) - fd) < 1e-5 * (1.0 + std::abs(J(int(p), c))));
        }
    }
}

namespace {

// Synthetic discharges solved with a known chi, sampled into profile records.
struct ChiTruthData {
    ProfileSet set;
    std::vector<DischargeConditions> conditions;
};

ChiTruthData make_chi_truth(const FittedModel& chi_truth, int n_discharges) {
    ChiTruthData data;
    for (int i = 0; i < n_discharges; ++i) {
        DischargeConditions c;
        c.id = "d" + std::to_string(i);
        c.psi_grid = {0.0, 0.3, 0.6, 1.0};
        const double n0 = 1.5 + 0.5 * i;
        c.density = {n0 + 0.4, n0 + 0.3, n0 + 0.1, n0};
        const double s0 = 700.0 + 150.0 * i;
        c.source = {s0, 0.8 * s0, 0.5 * s0, 0.1 * s0};
        c.edge_temp = 90.0 + 10.0 * i;
        c.minor_radius = 1.0 + 0.05 * i;
        data.conditions.push_back(c);

        const ForwardSolution sol = forward_temperature(chi_truth, c, 257);
        ProfileRecord rec;
        rec.id = c.id;
        for (int j = 0; j < 45; ++j) {
            const double psi = 0.02 + 0.96 * double(j) / 44.0;
            const double side = (j % 2 == 0) ? 1.0 : -1.0;
            double t = 0.0;
            {
                const double pos = psi * 256.0;
                const int k = std::min(int(pos), 255);
                const double frac = pos - double(k);
                t = (1.0 - frac) * sol.temperature[k] + frac * sol.temperature[k + 1];
            }
            rec.psi.push_back(side * psi);
            rec.temp.push_back(t);
            rec.sigma.push_back(1.0); // noiseless, nominal error bars
        }
        rec.augmented.assign(rec.psi.size(), 0);
        data.set.records.push_back(rec);
    }
    data.set.normalization = compute_normalization(data.set.records);
    return data;
}

} // namespace

TEST_CASE("noiseless round trip recovers a constant log-diffusivity") {
    const double g0 = std::log(1.6);
    const FittedModel truth = chi_model_from(chi_basis(), [&](double) { return g0; });
    const ChiTruthData data = make_chi_truth(truth, 3);

    AdditiveModelSpec structure;
    structure.basis = chi_basis();
    structure.terms = {{kIntercept, Constraint::free_term}};
    const ChiFitResult result = fit_chi(data.set, data.conditions, structure, {1e-4});

    CHECK(result.converged);
    for (double psi : {0.1, 0.3, 0.5, 0.7, 0.9})
        CHECK(std::abs(result.model.term_value(0, psi) - g0) < 1e-2);
}

TEST_CASE("noiseless round trip recovers a flat-core parabolic-edge shape") {
    auto shape = [](double psi) {
        const double rise = std::max(0.0, psi - 0.6);
        return std::log(1.2) + 2.0 * rise * rise / 0.16;
    };
    const FittedModel truth = chi_model_from(chi_basis(10), shape);
    const ChiTruthData data = make_chi_truth(truth, 3);

    AdditiveModelSpec structure;
    structure.basis = chi_basis(10);
    structure.terms = {{kIntercept, Constraint::free_term}};
    const ChiFitResult result = fit_chi(data.set, data.conditions, structure, {1e-5});

    double worst = 0.0;
    for (double psi = 0.1; psi <= 0.9 + 1e-9; psi += 0.02)
        worst = std::max(worst,
                         std::abs(result.model.term_value(0, psi) - truth.term_value(0, psi)));
    CHECK(worst < 0.05);
}

TEST_CASE("noiseless round trip recovers a covariate exponent") {
    // truth: log chi = g0 + c * log(Ip/ref) with a constant c
    const double g0 = std::log(1.3), c_true = 0.3;
    const std::vector<double> currents = {1.2, 2.0, 3.1, 4.6};
    const double ip_ref = std::pow(1.2 * 2.0 * 3.1 * 4.6, 0.25);

    std::vector<DischargeConditions> conds;
    ProfileSet set;
    const SplineBasis basis = chi_basis();
    for (std::size_t i = 0; i < currents.size(); ++i) {
        FittedModel chi;
        chi.kind = "diffusivity";
        chi.basis = basis;
        FittedTerm t;
        t.covariate = kIntercept;
        t.constraint = Constraint::free_term;
        t.coefficients = Eigen::VectorXd::Constant(
            basis.size(), g0 + c_true * std::log(currents[i] / ip_ref));
        chi.terms = {t};

        DischargeConditions c;
        c.id = "ip" + std::to_string(i);
        c.psi_grid = {0.0, 0.5, 1.0};
        c.density = {2.4, 2.1, 1.7};
        c.source = {900.0, 650.0, 120.0};
        c.edge_temp = 100.0;
        c.minor_radius = 1.1;
        conds.push_back(c);

        const ForwardSolution sol = forward_temperature(chi, c, 257);
        ProfileRecord rec;
        rec.id = c.id;
        rec.covariates = {{"Ip", currents[i]}};
        for (int j = 0; j < 40; ++j) {
            const double psi = 0.02 + 0.95 * double(j) / 39.0;
            const double pos = psi * 256.0;
            const int k = std::min(int(pos), 255);
            const double frac = pos - double(k);
            rec.psi.push_back(psi);
            rec.temp.push_back((1.0 - frac) * sol.temperature[k] +
                               frac * sol.temperature[k + 1]);
            rec.sigma.push_back(1.0);
        }
        rec.augmented.assign(rec.psi.size(), 0);
        set.records.push_back(std::move(rec));
    }
    set.normalization = compute_normalization(set.records);

    AdditiveModelSpec structure;
    structure.basis = basis;
    structure.terms = {{kIntercept, Constraint::free_term}, {"Ip", Constraint::constant}};
    const ChiFitResult fit = fit_chi(set, conds, structure, {1e-4, 0.0});
    REQUIRE(fit.model.terms.size() == 2);
    CHECK(fit.model.terms[1].coefficients[0] == doctest::Approx(c_true).epsilon(0.15));
    for (double psi : {0.2, 0.5, 0.8})
        CHECK(std::abs(fit.model.term_value(0, psi) - g0) < 0.02);
}

TEST_CASE("fit_chi input validation") {
    AdditiveModelSpec structure;
    structure.basis = chi_basis();
    structure.terms = {{kIntercept, Constraint::free_term}};

    ProfileSet empty;
    CHECK_THROWS_AS(fit_chi(empty, {}, structure, {1e-4}), ValidationError);

    const FittedModel truth = chi_model_from(chi_basis(), [](double) { return 0.0; });
    ChiTruthData data = make_chi_truth(truth, 1);
    CHECK_THROWS_AS(fit_chi(data.set, {}, structure, {1e-4}), ValidationError); // no conditions

    AdditiveModelSpec wrong;
    wrong.basis = SplineBasis(SplineBasis::make_knots(8, 1.0), 4); // [-1, 1] domain
    wrong.terms = {{kIntercept, Constraint::free_term}};
    CHECK_THROWS_AS(fit_chi(data.set, data.conditions, wrong, {1e-4}), ValidationError);
}

TEST_CASE("chi stays positive for any coefficients") {
    Rng rng(97);
    const SplineBasis basis = chi_basis();
    FittedModel chi;
    chi.kind = "diffusivity";
    chi.basis = basis;
    FittedTerm t;
    t.covariate = kIntercept;
    t.constraint = Constraint::free_term;
    t.coefficients = Eigen::VectorXd(basis.size());
    for (int trial = 0; trial < 20; ++trial) {
        for (int k = 0; k < basis.size(); ++k)
            t.coefficients[k] = 6.0 * rng.normal();
        chi.terms = {t};
        for (double psi = 0.0; psi <= 1.0; psi += 0.05)
            CHECK(chi.predict(psi, {}) > 0.0);
    }
}

TEST_CASE("source shape moves the predicted profile; temperature models ignore it") {
    const FittedModel chi = chi_model_from(chi_basis(), [](double) { return 0.4; });
    auto peaked = flat_conditions();
    peaked.source = {1500.0, 400.0, 0.0};
    auto broad = flat_conditions();
    broad.source = {600.0, 600.0, 600.0};

    const ForwardSolution tp = forward_temperature(chi, peaked, 129);
    const ForwardSolution tb = forward_temperature(chi, broad, 129);
    // normalized shapes differ when the deposition moves
    double max_shape_gap = 0.0;
    for (std::size_t k = 0; k < tp.psi.size(); ++k)
        max_shape_gap = std::max(
            max_shape_gap, std::abs(tp.temperature[k] / tp.temperature[0] -
                                    tb.temperature[k] / tb.temperature[0]));
    CHECK(max_shape_gap > 0.01);

    // a fitted log-temperature model has no source argument at all: its
    // prediction is a function of (psi, u) only
    const FittedModel temp_model = testutil::make_model(
        SplineBasis(SplineBasis::make_knots(8, 1.0), 4),
        {{std::string(kIntercept), [](double psi) { return 7.0 - psi * psi; }}}, {});
    CHECK(temp_model.predict(0.5, {}) == temp_model.predict(0.5, {}));
}
