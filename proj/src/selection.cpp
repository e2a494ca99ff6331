#include "profilefit/selection.hpp"
#include "profilefit/errors.hpp"
#include "profilefit/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace profilefit {

using nlohmann::json;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::string criterion_name(Criterion c) { return c == Criterion::rice ? "rice" : "gcv"; }

Criterion criterion_from_name(const std::string& name) {
    if (name == "rice") return Criterion::rice;
    if (name == "gcv") return Criterion::gcv;
    throw ValidationError("unknown criterion '" + name + "' (expected rice or gcv)");
}

std::vector<double> LambdaGrid::factors() const {
    if (n < 1 || !(lo > 0.0) || !(hi >= lo))
        throw ValidationError("lambda grid requires 0 < lo <= hi and n >= 1");
    std::vector<double> f(n);
    if (n == 1) {
        f[0] = lo;
        return f;
    }
    const double step = std::log(hi / lo) / double(n - 1);
    for (int i = 0; i < n; ++i)
        f[i] = lo * std::exp(step * double(i));
    return f;
}

namespace {

double criterion_value(Criterion criterion, const FitResult& fit, const Eigen::MatrixXd& K,
                       int n_measured) {
    try {
        return criterion == Criterion::rice ? rice(fit, K, n_measured) : gcv(fit, K, n_measured);
    } catch (const NumericalError&) {
        return kInf; // inadmissible grid point, skipped by the search
    }
}

} // namespace

LambdaChoice optimize_lambdas(const DesignSystem& sys, Criterion criterion,
                              const LambdaGrid& grid) {
    const std::vector<double> factors = grid.factors();
    const std::size_t n_terms = sys.spec.terms.size();

    // Per-term lambda scale: ratio of the data curvature to the penalty
    // curvature in that block.
    std::vector<double> scale(n_terms, 0.0);
    std::vector<int> index(n_terms, -1); // current grid index per spline term
    for (std::size_t t = 0; t < n_terms; ++t) {
        if (!sys.layout[t].is_spline)
            continue;
        const auto& lay = sys.layout[t];
        const double tr_c = sys.C.block(lay.offset, lay.offset, lay.count, lay.count).trace();
        const double tr_s = lay.penalty.trace();
        scale[t] = tr_s > 0.0 ? tr_c / tr_s : 1.0;
        if (!(scale[t] > 0.0) || !std::isfinite(scale[t]))
            scale[t] = 1.0;
        index[t] = int(factors.size()) - 1; // start at maximal smoothing
    }

    auto lambdas_for = [&](const std::vector<int>& idx) {
        std::vector<double> lam(n_terms, 0.0);
        for (std::size_t t = 0; t < n_terms; ++t)
            if (idx[t] >= 0)
                lam[t] = scale[t] * factors[idx[t]];
        return lam;
    };

    auto evaluate = [&](const std::vector<int>& idx, FitResult* out) {
        try {
            FitResult fit = solve(sys, lambdas_for(idx));
            const double v = criterion_value(criterion, fit, sys.K, sys.n_measured);
            if (out)
                *out = std::move(fit);
            return v;
        } catch (const NumericalError&) {
            return kInf;
        }
    };

    FitResult best_fit;
    double best_value = evaluate(index, &best_fit);
    bool saw_admissible = std::isfinite(best_value);

    const int max_passes = 10;
    for (int pass = 0; pass < max_passes; ++pass) {
        bool changed = false;
        for (std::size_t t = 0; t < n_terms; ++t) {
            if (index[t] < 0)
                continue;
            // All grid points of this coordinate are independent solves.
            std::vector<double> values(factors.size());
            std::vector<FitResult> fits(factors.size());
            parallel_for(std::ptrdiff_t(factors.size()), [&](std::ptrdiff_t g) {
                std::vector<int> idx = index;
                idx[t] = int(g);
                values[g] = evaluate(idx, &fits[g]);
            });
            int best_g = index[t];
            for (std::size_t g = 0; g < values.size(); ++g) {
                if (std::isfinite(values[g]))
                    saw_admissible = true;
                if (values[g] < values[best_g] ||
                    (values[g] == values[best_g] && int(g) > best_g))
                    best_g = int(g); // ties resolve toward heavier smoothing
            }
            if (best_g != index[t] && std::isfinite(values[best_g]) &&
                values[best_g] < best_value) {
                index[t] = best_g;
                best_value = values[best_g];
                best_fit = std::move(fits[best_g]);
                changed = true;
            }
        }
        if (pass == 0 && !saw_admissible)
            throw OverParameterizationError(
                "no admissible smoothing parameter: the model is too rich for the data");
        if (!changed)
            break;
    }

    if (!std::isfinite(best_value))
        throw OverParameterizationError(
            "no admissible smoothing parameter: the model is too rich for the data");

    LambdaChoice choice;
    choice.lambdas = lambdas_for(index);
    choice.criterion_value = best_value;
    choice.fit = std::move(best_fit);
    return choice;
}

namespace {

AdditiveModelSpec spec_for_covariates(const std::vector<std::string>& covariates,
                                      const SplineBasis& basis) {
    AdditiveModelSpec spec;
    spec.basis = basis;
    spec.terms.push_back({kIntercept, Constraint::free_term});
    for (const auto& c : covariates)
        spec.terms.push_back({c, Constraint::free_term});
    spec.validate();
    return spec;
}

// Variables the selection flags when chosen: they reduce the criterion only
// through the shared discharge programming, not through physics.
const std::set<std::string>& discouraged_variables() {
    static const std::set<std::string> names = {"time"};
    return names;
}

} // namespace

SelectionTrace forward_select(const ProfileSet& set, const std::vector<std::string>& candidates,
                              const ForwardSelectOptions& options) {
    if (candidates.empty())
        throw ValidationError("forward_select needs a nonempty candidate list");
    {
        std::set<std::string> uniq(candidates.begin(), candidates.end());
        if (uniq.size() != candidates.size())
            throw ValidationError("duplicate covariate in candidate list");
    }

    const SplineBasis basis(
        SplineBasis::make_knots(options.n_interior_knots, options.edge_thinning), 4);

    SelectionTrace trace;
    trace.criterion = options.criterion;

    auto fit_value = [&](const std::vector<std::string>& covs, double* dof) {
        const DesignSystem sys =
            build_design(set, spec_for_covariates(covs, basis), options.scale, options.corr);
        const LambdaChoice choice = optimize_lambdas(sys, options.criterion, options.grid);
        if (dof)
            *dof = choice.fit.tr_kg;
        return choice.criterion_value;
    };

    trace.intercept_value = fit_value({}, nullptr);
    double current_value = trace.intercept_value;

    std::vector<std::string> remaining = candidates;
    for (int stage = 0; stage < options.max_stages && !remaining.empty(); ++stage) {
        SelectionStage st;
        std::vector<double> values(remaining.size(), kInf);
        std::vector<double> dofs(remaining.size(), kInf);
        // Candidate fits within a stage are independent.
        parallel_for(std::ptrdiff_t(remaining.size()), [&](std::ptrdiff_t c) {
            std::vector<std::string> covs = trace.chosen;
            covs.push_back(remaining[c]);
            try {
                values[c] = fit_value(covs, &dofs[c]);
            } catch (const OverParameterizationError&) {
                values[c] = kInf; // marked inadmissible, stage continues
            }
        });

        int best = -1;
        for (std::size_t c = 0; c < remaining.size(); ++c) {
            st.candidate_values[remaining[c]] =
                std::isfinite(values[c]) ? values[c] : std::numeric_limits<double>::quiet_NaN();
            if (std::isfinite(values[c]))
                st.candidate_dof[remaining[c]] = dofs[c];
            if (std::isfinite(values[c]) && (best < 0 || values[c] < values[best]))
                best = int(c);
        }
        if (best >= 0) {
            // near-degenerate candidates: prefer the representation that
            // spends fewer effective degrees of freedom
            const double band =
                values[best] + options.tie_tolerance * std::abs(values[best]);
            for (std::size_t c = 0; c < remaining.size(); ++c)
                if (std::isfinite(values[c]) && values[c] <= band && dofs[c] < dofs[best])
                    best = int(c);
        }

        if (best < 0) {
            trace.stages.push_back(std::move(st));
            trace.stop_reason = "all-inadmissible";
            return trace;
        }

        st.winner = remaining[best];
        st.winner_value = values[best];
        const double improvement = (current_value - st.winner_value) / current_value;
        if (!(improvement >= options.min_relative_improvement)) {
            st.accepted = false;
            trace.stages.push_back(std::move(st));
            trace.stop_reason = "no-improvement";
            return trace;
        }

        st.accepted = true;
        trace.chosen.push_back(st.winner);
        current_value = st.winner_value;
        if (discouraged_variables().count(st.winner))
            trace.warnings.push_back("'" + st.winner +
                                     "' was selected; it tracks the discharge programming rather "
                                     "than a controllable physics variable");
        remaining.erase(remaining.begin() + best);
        trace.stages.push_back(std::move(st));
    }
    trace.stop_reason = "max-terms"; // stage budget or candidate list exhausted
    return trace;
}

std::string SelectionTrace::to_json() const {
    json j;
    j["criterion"] = criterion_name(criterion);
    j["intercept_value"] = intercept_value;
    j["stages"] = json::array();
    for (const auto& st : stages) {
        json js;
        js["winner"] = st.winner;
        js["winner_value"] = st.winner_value;
        js["accepted"] = st.accepted;
        js["candidates"] = json::object();
        for (const auto& [name, v] : st.candidate_values) {
            if (std::isnan(v))
                js["candidates"][name] = nullptr; // inadmissible
            else
                js["candidates"][name] = v;
        }
        js["candidates_dof"] = st.candidate_dof;
        j["stages"].push_back(std::move(js));
    }
    j["chosen"] = chosen;
    j["stop_reason"] = stop_reason;
    j["warnings"] = warnings;
    return j.dump(2);
}

std::string SelectionTrace::render_table(const std::vector<std::string>& candidates) const {
    std::ostringstream out;
    out << "criterion: " << criterion_name(criterion)
        << "   intercept-only value: " << intercept_value << "\n";
    out << "variable";
    for (std::size_t s = 0; s < stages.size(); ++s)
        out << '\t' << (s + 1) << " var";
    out << '\n';
    for (const auto& name : candidates) {
        out << name;
        for (const auto& st : stages) {
            out << '\t';
            auto it = st.candidate_values.find(name);
            if (it == st.candidate_values.end()) {
                out << "seed";
            } else if (std::isnan(it->second)) {
                out << '-';
            } else {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.3f", it->second);
                out << buf << (st.winner == name && st.accepted ? "*" : "");
            }
        }
        out << '\n';
    }
    out << "stop: " << stop_reason << '\n';
    for (const auto& w : warnings)
        out << "warning: " << w << '\n';
    return out.str();
}

namespace {

VariantReport fit_variant(const ProfileSet& set, const AdditiveModelSpec& spec,
                          Criterion criterion, const LambdaGrid& grid, FitScale scale,
                          const CorrelationModel& corr) {
    const DesignSystem sys = build_design(set, spec, scale, corr);
    LambdaChoice choice = optimize_lambdas(sys, criterion, grid);
    VariantReport rep;
    rep.criterion_value = choice.criterion_value;
    FitResult fit = std::move(choice.fit);
    fit.lambdas = choice.lambdas;
    rep.model = assemble_model(sys, fit);
    rep.model.risk = risk_report(fit, sys.K, sys.n_measured);
    rep.mae_ev = fit_metrics(set, rep.model).mae_ev;
    return rep;
}

} // namespace

ComparisonReport test_symmetry(const ProfileSet& set, const AdditiveModelSpec& spec,
                               const std::string& term, Criterion criterion,
                               const LambdaGrid& grid, FitScale scale,
                               const CorrelationModel& corr) {
    spec.validate();
    const int t = spec.term_index(term);
    if (t < 0)
        throw ValidationError("term '" + term + "' is not in the model spec");
    if (spec.terms[t].constraint != Constraint::free_term)
        throw ValidationError("term '" + term + "' is not a free spline term");

    AdditiveModelSpec variant = spec;
    variant.terms[t].constraint = Constraint::symmetric;

    ComparisonReport rep;
    rep.term = term;
    rep.baseline = fit_variant(set, spec, criterion, grid, scale, corr);
    rep.variant = fit_variant(set, variant, criterion, grid, scale, corr);
    rep.recommendation =
        rep.variant.criterion_value < rep.baseline.criterion_value ? "variant" : "baseline";
    return rep;
}

ComparisonReport reduce_to_constant(const ProfileSet& set, const AdditiveModelSpec& spec,
                                    const std::string& term, Criterion criterion,
                                    const LambdaGrid& grid, FitScale scale,
                                    const CorrelationModel& corr) {
    spec.validate();
    const int t = spec.term_index(term);
    if (t < 0)
        throw ValidationError("term '" + term + "' is not in the model spec");
    if (spec.terms[t].constraint == Constraint::constant)
        throw ValidationError("term '" + term + "' is already constant");

    AdditiveModelSpec variant = spec;
    variant.terms[t].constraint = Constraint::constant;

    ComparisonReport rep;
    rep.term = term;
    rep.baseline = fit_variant(set, spec, criterion, grid, scale, corr);

    // Variant fit, keeping the solver pieces to get the constant's standard
    // error from the coefficient covariance.
    const DesignSystem sys = build_design(set, variant, scale, corr);
    LambdaChoice choice = optimize_lambdas(sys, criterion, grid);
    FitResult fit = std::move(choice.fit);
    fit.lambdas = choice.lambdas;
    rep.variant.criterion_value = choice.criterion_value;
    rep.variant.model = assemble_model(sys, fit);
    rep.variant.model.risk = risk_report(fit, sys.K, sys.n_measured);
    rep.variant.mae_ev = fit_metrics(set, rep.variant.model).mae_ev;

    const int col = sys.layout[t].offset;
    rep.constant_value = fit.alpha[col];
    const Eigen::MatrixXd cov = coefficient_covariance(fit, sys);
    rep.constant_se = std::sqrt(std::max(0.0, cov(col, col)));

    rep.recommendation =
        rep.variant.criterion_value < rep.baseline.criterion_value ? "variant" : "baseline";
    return rep;
}

} // namespace profilefit
