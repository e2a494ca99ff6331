// Compares the OpenMP kernels against their serial reference on the main
// hot paths: design assembly, smoothing-parameter search, a forward-selection
// stage, and per-discharge transport solves.  Results must be bit-identical
// between modes; the tool reports timings and an equality check.

#include "profilefit/additive_design.hpp"
#include "profilefit/diffusivity.hpp"
#include "profilefit/parallel.hpp"
#include "profilefit/reference.hpp"
#include "profilefit/selection.hpp"
#include "profilefit/simulate.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

using namespace profilefit;

namespace {

double time_ms(const std::function<void()>& fn, int repeats) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i)
        fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-24s serial %9.2f ms   openmp %9.2f ms   speedup %5.2fx   identical %s\n",
                name, serial_ms, parallel_ms, serial_ms / parallel_ms,
                identical ? "yes" : "NO");
}

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool same(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.size() == b.size() && (a.array() == b.array()).all();
}

} // namespace

int main() {
    std::printf("workers available: %d\n", worker_count());

    const FittedModel ref = jet_reference_model();
    SimulationConfig sim;
    sim.seed = 20;
    const ProfileSet set = simulate_profiles(ref, sim);

    AdditiveModelSpec spec;
    spec.basis = SplineBasis(SplineBasis::make_knots(20, 2.0), 4);
    spec.terms = {{kIntercept, Constraint::free_term},
                  {"Ip", Constraint::free_term},
                  {"Bt", Constraint::free_term},
                  {"nbar", Constraint::free_term},
                  {"qgeo", Constraint::free_term}};

    // 1. design assembly
    {
        set_parallel_enabled(false);
        DesignSystem serial_sys = build_design(set, spec);
        const double ts = time_ms([&] { build_design(set, spec); }, 5);
        set_parallel_enabled(true);
        DesignSystem par_sys = build_design(set, spec);
        const double tp = time_ms([&] { build_design(set, spec); }, 5);
        report("design assembly", ts, tp,
               same(serial_sys.C, par_sys.C) && same(serial_sys.X, par_sys.X) &&
                   same(serial_sys.Xt_D_y, par_sys.Xt_D_y));
    }

    // 2. smoothing-parameter search
    {
        const DesignSystem sys = build_design(set, spec);
        set_parallel_enabled(false);
        const LambdaChoice serial_choice = optimize_lambdas(sys, Criterion::rice);
        const double ts = time_ms([&] { optimize_lambdas(sys, Criterion::rice); }, 1);
        set_parallel_enabled(true);
        const LambdaChoice par_choice = optimize_lambdas(sys, Criterion::rice);
        const double tp = time_ms([&] { optimize_lambdas(sys, Criterion::rice); }, 1);
        report("lambda search", ts, tp,
               serial_choice.lambdas == par_choice.lambdas &&
                   serial_choice.criterion_value == par_choice.criterion_value);
    }

    // 3. one forward-selection stage over six candidates
    {
        ForwardSelectOptions opts;
        opts.max_stages = 1;
        const std::vector<std::string> candidates = {"Ip", "Bt", "nbar", "q95", "qgeo", "kappa"};
        set_parallel_enabled(false);
        const SelectionTrace serial_trace = forward_select(set, candidates, opts);
        const double ts = time_ms([&] { forward_select(set, candidates, opts); }, 1);
        set_parallel_enabled(true);
        const SelectionTrace par_trace = forward_select(set, candidates, opts);
        const double tp = time_ms([&] { forward_select(set, candidates, opts); }, 1);
        report("selection stage", ts, tp,
               serial_trace.chosen == par_trace.chosen &&
                   serial_trace.stages.size() == par_trace.stages.size() &&
                   serial_trace.stages[0].winner_value == par_trace.stages[0].winner_value);
    }

    // 4. per-discharge transport solves through a one-iteration chi fit
    {
        FittedModel chi;
        chi.kind = "diffusivity";
        chi.basis = SplineBasis(SplineBasis::make_knots(8, 1.0, 0.0, 1.0), 4, 0.0, 1.0);
        chi.terms.push_back({kIntercept, Constraint::free_term,
                             Eigen::VectorXd::Zero(chi.basis.size()), 0.0});

        std::vector<DischargeConditions> conditions;
        ProfileSet chi_set;
        for (int i = 0; i < 24; ++i) {
            DischargeConditions c;
            c.id = "bench-" + std::to_string(i);
            c.psi_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
            c.density = {3.0, 2.8, 2.5, 2.0, 1.5};
            c.source = {1.2e3, 1.0e3, 8.0e2, 4.0e2, 1.0e2};
            c.edge_temp = 120.0;
            c.minor_radius = 1.1;
            conditions.push_back(c);

            const auto sol = forward_temperature(chi, c, 129);
            ProfileRecord rec;
            rec.id = c.id;
            for (int j = 4; j < 125; j += 3) {
                rec.psi.push_back(sol.psi[j]);
                rec.temp.push_back(sol.temperature[j]);
                rec.sigma.push_back(0.02 * sol.temperature[j]);
            }
            rec.augmented.assign(rec.psi.size(), 0);
            chi_set.records.push_back(rec);
        }
        chi_set.normalization = compute_normalization(chi_set.records);

        AdditiveModelSpec structure;
        structure.basis = chi.basis;
        structure.terms = {{kIntercept, Constraint::free_term}};
        const std::vector<double> lambdas = {1e-4};

        set_parallel_enabled(false);
        const ChiFitResult serial_fit = fit_chi(chi_set, conditions, structure, lambdas);
        const double ts = time_ms([&] { fit_chi(chi_set, conditions, structure, lambdas); }, 1);
        set_parallel_enabled(true);
        const ChiFitResult par_fit = fit_chi(chi_set, conditions, structure, lambdas);
        const double tp = time_ms([&] { fit_chi(chi_set, conditions, structure, lambdas); }, 1);
        report("chi fit", ts, tp, serial_fit.objective == par_fit.objective &&
                                      serial_fit.iterations == par_fit.iterations);
    }
    return 0;
}
