#include "profilefit/additive_design.hpp"
#include "profilefit/errors.hpp"
#include "profilefit/parallel.hpp"
#include "profilefit/risk.hpp"

#include <json.hpp>

#include <cmath>
#include <set>

namespace profilefit {

using nlohmann::json;

std::string constraint_name(Constraint c) {
    switch (c) {
    case Constraint::free_term: return "free";
    case Constraint::symmetric: return "symmetric";
    case Constraint::constant: return "constant";
    }
    return "free";
}

Constraint constraint_from_name(const std::string& name) {
    if (name == "free") return Constraint::free_term;
    if (name == "symmetric") return Constraint::symmetric;
    if (name == "constant") return Constraint::constant;
    throw ValidationError("unknown constraint '" + name + "'");
}

void AdditiveModelSpec::validate() const {
    if (terms.empty())
        throw ValidationError("model spec has no terms");
    if (terms.front().covariate != kIntercept)
        throw ValidationError("first model term must be the intercept");
    std::set<std::string> seen;
    for (const auto& t : terms) {
        if (!seen.insert(t.covariate).second)
            throw ValidationError("duplicate term '" + t.covariate + "' in model spec");
        if (t.covariate != kIntercept && !is_known_covariate(t.covariate))
            throw ValidationError("unknown covariate '" + t.covariate + "' in model spec");
    }
    if (basis.size() < 4)
        throw ValidationError("model spec basis is too small");
}

int AdditiveModelSpec::columns_for_term(std::size_t index) const {
    const int K = basis.size();
    switch (terms.at(index).constraint) {
    case Constraint::free_term: return K;
    case Constraint::symmetric: return (K + 1) / 2;
    case Constraint::constant: return 1;
    }
    return K;
}

int AdditiveModelSpec::total_columns() const {
    int p = 0;
    for (std::size_t i = 0; i < terms.size(); ++i)
        p += columns_for_term(i);
    return p;
}

int AdditiveModelSpec::term_index(const std::string& covariate) const {
    for (std::size_t i = 0; i < terms.size(); ++i)
        if (terms[i].covariate == covariate)
            return int(i);
    return -1;
}

std::string AdditiveModelSpec::to_json() const {
    json j;
    j["basis"] = {{"order", basis.order()},
                  {"interior_knots", basis.interior_knots()},
                  {"n_interior", int(basis.interior_knots().size())},
                  {"n_basis", basis.size()},
                  {"domain", {basis.lo(), basis.hi()}}};
    j["terms"] = json::array();
    for (const auto& t : terms)
        j["terms"].push_back({{"covariate", t.covariate}, {"constraint", constraint_name(t.constraint)}});
    return j.dump();
}

AdditiveModelSpec AdditiveModelSpec::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("model spec is not valid JSON: ") + e.what());
    }
    AdditiveModelSpec spec;
    try {
        const auto& jb = j.at("basis");
        const int order = jb.value("order", 4);
        double lo = -1.0, hi = 1.0;
        if (jb.contains("domain")) {
            lo = jb.at("domain").at(0).get<double>();
            hi = jb.at("domain").at(1).get<double>();
        }
        std::vector<double> interior;
        if (jb.contains("interior_knots"))
            interior = jb.at("interior_knots").get<std::vector<double>>();
        else
            interior = SplineBasis::make_knots(jb.value("n_interior", 20),
                                               jb.value("edge_thinning", 2.0), lo, hi);
        spec.basis = SplineBasis(interior, order, lo, hi);
        for (const auto& jt : j.at("terms"))
            spec.terms.push_back({jt.at("covariate").get<std::string>(),
                                  constraint_from_name(jt.value("constraint", "free"))});
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed model spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

AdditiveModelSpec profile_consistency_spec(const std::vector<std::string>& covariates,
                                           const SplineBasis& basis) {
    AdditiveModelSpec spec;
    spec.basis = basis;
    spec.terms.push_back({kIntercept, Constraint::free_term});
    for (const auto& c : covariates)
        spec.terms.push_back({c, Constraint::constant});
    spec.validate();
    return spec;
}

namespace {

Eigen::MatrixXd fold_matrix(const SplineBasis& basis, Constraint c) {
    const int K = basis.size();
    switch (c) {
    case Constraint::free_term:
        return Eigen::MatrixXd::Identity(K, K);
    case Constraint::symmetric: {
        const int m = (K + 1) / 2;
        Eigen::MatrixXd F = Eigen::MatrixXd::Zero(K, m);
        for (int k = 0; k < K; ++k)
            F(k, std::min(k, K - 1 - k)) = 1.0;
        return F;
    }
    case Constraint::constant:
        // Partition of unity: equal basis coefficients give the constant 1.
        return Eigen::MatrixXd::Ones(K, 1);
    }
    return Eigen::MatrixXd::Identity(K, K);
}

} // namespace

std::vector<TermLayout> make_term_layout(const AdditiveModelSpec& spec) {
    const Eigen::MatrixXd S = spec.basis.penalty_matrix();
    std::vector<TermLayout> layout;
    int offset = 0;
    for (std::size_t t = 0; t < spec.terms.size(); ++t) {
        TermLayout lay;
        lay.offset = offset;
        lay.count = spec.columns_for_term(t);
        lay.is_spline = spec.terms[t].constraint != Constraint::constant;
        lay.fold = fold_matrix(spec.basis, spec.terms[t].constraint);
        lay.penalty = lay.is_spline ? Eigen::MatrixXd(lay.fold.transpose() * S * lay.fold)
                                    : Eigen::MatrixXd::Zero(1, 1);
        layout.push_back(std::move(lay));
        offset += layout.back().count;
    }
    return layout;
}

namespace {

bool knots_symmetric(const SplineBasis& basis) {
    const auto interior = basis.interior_knots();
    const double mid = 0.5 * (basis.lo() + basis.hi());
    const double span = basis.hi() - basis.lo();
    const std::size_t n = interior.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double mirrored = 2.0 * mid - interior[n - 1 - i];
        if (std::abs(interior[i] - mirrored) > 1e-12 * span)
            return false;
    }
    return true;
}

} // namespace

DesignSystem build_design(const ProfileSet& set, const AdditiveModelSpec& spec, FitScale scale,
                          const CorrelationModel& corr) {
    spec.validate();
    if (set.records.empty())
        throw ValidationError("profile set is empty");
    for (const auto& t : spec.terms)
        if (t.constraint == Constraint::symmetric && !knots_symmetric(spec.basis))
            throw ValidationError("symmetric term '" + t.covariate +
                                  "' requires a symmetric knot layout");

    DesignSystem sys;
    sys.scale = scale;
    sys.corr = corr;
    sys.spec = spec;
    sys.normalization = set.normalization;

    const int P = spec.total_columns();
    sys.layout = make_term_layout(spec);

    const std::size_t n_records = set.records.size();
    std::vector<int> row_begin(n_records + 1, 0);
    for (std::size_t i = 0; i < n_records; ++i)
        row_begin[i + 1] = row_begin[i] + int(set.records[i].size());
    const int n_rows = row_begin[n_records];

    sys.X = Eigen::MatrixXd::Zero(n_rows, P);
    sys.y.resize(n_rows);
    sys.weight.resize(n_rows);
    sys.sigma_tilde.resize(n_rows);
    sys.measured.assign(n_rows, 1);
    sys.row_psi.resize(n_rows);
    sys.profile_rows.resize(n_records);

    // Per-profile covariate values, resolved up front so a missing covariate
    // fails before any numeric work.
    const std::size_t n_terms = spec.terms.size();
    std::vector<std::vector<double>> h(n_records, std::vector<double>(n_terms, 1.0));
    for (std::size_t i = 0; i < n_records; ++i)
        for (std::size_t t = 1; t < n_terms; ++t)
            h[i][t] = covariate_value(set.records[i], spec.terms[t].covariate, set.normalization);

    // Row assembly is independent per profile; each thread writes only its
    // own row range.
    parallel_for(std::ptrdiff_t(n_records), [&](std::ptrdiff_t i) {
        const ProfileRecord& rec = set.records[i];
        double window[16];
        for (std::size_t j = 0; j < rec.size(); ++j) {
            const int r = row_begin[i] + int(j);
            const double psi = rec.psi[j];
            sys.row_psi[r] = psi;
            const bool aug = !rec.augmented.empty() && rec.augmented[j];
            sys.measured[r] = aug ? 0 : 1;
            double sig;
            if (scale == FitScale::log_temperature) {
                sys.y[r] = std::log(rec.temp[j]);
                sig = rec.sigma[j] / rec.temp[j];
            } else {
                sys.y[r] = rec.temp[j];
                sig = rec.sigma[j];
            }
            sys.sigma_tilde[r] = sig;
            sys.weight[r] = 1.0 / (sig * sig);

            const int first = spec.basis.eval_window(psi, window);
            for (std::size_t t = 0; t < n_terms; ++t) {
                const TermLayout& lay = sys.layout[t];
                for (int k = 0; k < spec.basis.order(); ++k) {
                    const int kk = first + k;
                    // fold has a single unit entry per basis row, so the
                    // scatter is a cheap index map.
                    for (int c = 0; c < lay.count; ++c) {
                        if (lay.fold(kk, c) != 0.0)
                            sys.X(r, lay.offset + c) += lay.fold(kk, c) * window[k] * h[i][t];
                    }
                }
            }
        }
        sys.profile_rows[i] = {row_begin[i], row_begin[i + 1]};
    });

    sys.n_measured = 0;
    for (char m : sys.measured)
        sys.n_measured += m ? 1 : 0;

    // Normal-equation pieces accumulated per profile and reduced in index
    // order, so results do not depend on the execution mode.
    std::vector<Eigen::MatrixXd> Ci(n_records);
    std::vector<Eigen::VectorXd> bi(n_records);
    parallel_for(std::ptrdiff_t(n_records), [&](std::ptrdiff_t i) {
        const auto [rb, re] = sys.profile_rows[i];
        const int m = re - rb;
        const auto Xi = sys.X.middleRows(rb, m);
        const auto wi = sys.weight.segment(rb, m);
        const auto yi = sys.y.segment(rb, m);
        Ci[i] = Xi.transpose() * wi.asDiagonal() * Xi;
        bi[i] = Xi.transpose() * (wi.array() * yi.array()).matrix();
    });

    sys.C = Eigen::MatrixXd::Zero(P, P);
    sys.Xt_D_y = Eigen::VectorXd::Zero(P);
    for (std::size_t i = 0; i < n_records; ++i) {
        sys.C += Ci[i];
        sys.Xt_D_y += bi[i];
    }
    sys.K = autocorr_K(sys, corr);
    return sys;
}

} // namespace profilefit
