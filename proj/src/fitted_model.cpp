#include "profilefit/fitted_model.hpp"
#include "profilefit/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace profilefit {

using nlohmann::json;

double FittedModel::term_value(std::size_t t, double psi) const {
    const FittedTerm& term = terms.at(t);
    if (term.constraint == Constraint::constant)
        return term.coefficients[0];
    double window[16];
    const int first = basis.eval_window(psi, window);
    double v = 0.0;
    for (int k = 0; k < basis.order(); ++k)
        v += window[k] * term.coefficients[first + k];
    return v;
}

double FittedModel::additive_response(double psi, const std::map<std::string, double>& raw) const {
    double resp = 0.0;
    for (std::size_t t = 0; t < terms.size(); ++t) {
        const double h = terms[t].covariate == kIntercept
                             ? 1.0
                             : covariate_value(raw, terms[t].covariate, normalization);
        resp += term_value(t, psi) * h;
    }
    return resp;
}

double FittedModel::predict(double psi, const std::map<std::string, double>& raw) const {
    const double resp = additive_response(psi, raw);
    return scale == FitScale::log_temperature ? std::exp(resp) : resp;
}

int FittedModel::term_index(const std::string& covariate) const {
    for (std::size_t t = 0; t < terms.size(); ++t)
        if (terms[t].covariate == covariate)
            return int(t);
    return -1;
}

AdditiveModelSpec FittedModel::to_spec() const {
    AdditiveModelSpec spec;
    spec.basis = basis;
    for (const auto& t : terms)
        spec.terms.push_back({t.covariate, t.constraint});
    spec.validate();
    return spec;
}

std::string FittedModel::to_json() const {
    json j;
    j["kind"] = kind;
    j["scale"] = scale == FitScale::log_temperature ? "log" : "linear";
    // both knot counts are recorded: n_interior knots span the domain and
    // n_basis = n_interior + order functions make up each radial term
    j["basis"] = {{"order", basis.order()},
                  {"interior_knots", basis.interior_knots()},
                  {"n_interior", int(basis.interior_knots().size())},
                  {"n_basis", basis.size()},
                  {"domain", {basis.lo(), basis.hi()}}};
    j["terms"] = json::array();
    for (const auto& t : terms) {
        std::vector<double> coef(t.coefficients.data(), t.coefficients.data() + t.coefficients.size());
        j["terms"].push_back({{"covariate", t.covariate},
                              {"constraint", constraint_name(t.constraint)},
                              {"lambda", t.lambda},
                              {"coefficients", coef}});
    }
    j["normalization"] = normalization;
    j["traces"] = {{"tr_cg", tr_cg}, {"tr_kg", tr_kg}};
    if (risk) {
        j["risk"] = {{"ease_cw", risk->ease_cw},
                     {"gcv", risk->gcv},
                     {"rice", risk->rice},
                     {"chi2", risk->chi2},
                     {"sigma2_cw", risk->sigma2_cw},
                     {"dof_effective", risk->dof_effective},
                     {"n_measured", risk->n_measured}};
    }
    if (metrics) {
        j["metrics"] = {{"mae_ev", metrics->mae_ev},
                        {"mae_pct", metrics->mae_pct},
                        {"rmse_log", metrics->rmse_log}};
    }
    return j.dump(2);
}

FittedModel FittedModel::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("model file is not valid JSON: ") + e.what());
    }
    FittedModel m;
    try {
        m.kind = j.value("kind", "temperature");
        m.scale = j.value("scale", "log") == "linear" ? FitScale::linear_temperature
                                                      : FitScale::log_temperature;
        const auto& jb = j.at("basis");
        m.basis = SplineBasis(jb.at("interior_knots").get<std::vector<double>>(),
                              jb.value("order", 4), jb.at("domain").at(0).get<double>(),
                              jb.at("domain").at(1).get<double>());
        for (const auto& jt : j.at("terms")) {
            FittedTerm t;
            t.covariate = jt.at("covariate").get<std::string>();
            t.constraint = constraint_from_name(jt.value("constraint", "free"));
            t.lambda = jt.value("lambda", 0.0);
            const auto coef = jt.at("coefficients").get<std::vector<double>>();
            t.coefficients = Eigen::Map<const Eigen::VectorXd>(coef.data(), coef.size());
            const int expect = t.constraint == Constraint::constant ? 1 : m.basis.size();
            if (int(coef.size()) != expect)
                throw ValidationError("term '" + t.covariate + "' has " +
                                      std::to_string(coef.size()) + " coefficients, expected " +
                                      std::to_string(expect));
            m.terms.push_back(std::move(t));
        }
        if (j.contains("normalization"))
            m.normalization = j.at("normalization").get<std::map<std::string, double>>();
        if (j.contains("traces")) {
            m.tr_cg = j.at("traces").value("tr_cg", 0.0);
            m.tr_kg = j.at("traces").value("tr_kg", 0.0);
        }
        if (j.contains("risk")) {
            RiskReport r;
            const auto& jr = j.at("risk");
            r.ease_cw = jr.value("ease_cw", 0.0);
            r.gcv = jr.value("gcv", 0.0);
            r.rice = jr.value("rice", 0.0);
            r.chi2 = jr.value("chi2", 0.0);
            r.sigma2_cw = jr.value("sigma2_cw", 0.0);
            r.dof_effective = jr.value("dof_effective", 0.0);
            r.n_measured = jr.value("n_measured", 0);
            m.risk = r;
        }
        if (j.contains("metrics")) {
            FitMetrics mm;
            const auto& jm = j.at("metrics");
            mm.mae_ev = jm.value("mae_ev", 0.0);
            mm.mae_pct = jm.value("mae_pct", 0.0);
            mm.rmse_log = jm.value("rmse_log", 0.0);
            m.metrics = mm;
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed model file: ") + e.what());
    }
    if (m.terms.empty() || m.terms.front().covariate != kIntercept)
        throw ValidationError("model file must start with the intercept term");
    return m;
}

void FittedModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open '" + path + "' for writing");
    out << to_json() << '\n';
    if (!out)
        throw IoError("write to '" + path + "' failed");
}

FittedModel FittedModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open model file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

FittedModel assemble_model(const DesignSystem& sys, const FitResult& fit,
                           const std::string& kind) {
    FittedModel m;
    m.kind = kind;
    m.scale = sys.scale;
    m.basis = sys.spec.basis;
    m.tr_cg = fit.tr_cg;
    m.tr_kg = fit.tr_kg;
    for (std::size_t t = 0; t < sys.spec.terms.size(); ++t) {
        const TermLayout& lay = sys.layout[t];
        FittedTerm term;
        term.covariate = sys.spec.terms[t].covariate;
        term.constraint = sys.spec.terms[t].constraint;
        term.lambda = fit.lambdas.at(t);
        const auto beta = fit.alpha.segment(lay.offset, lay.count);
        term.coefficients = term.constraint == Constraint::constant
                                ? Eigen::VectorXd(beta)
                                : Eigen::VectorXd(lay.fold * beta);
        m.terms.push_back(std::move(term));
    }
    // The model carries only the references its own terms need.
    for (const auto& t : m.terms) {
        if (t.covariate == kIntercept)
            continue;
        m.normalization[t.covariate] = normalization_reference(t.covariate, sys.normalization);
    }
    return m;
}

double mean_line_average_temperature(const ProfileSet& set) {
    if (set.records.empty())
        throw ValidationError("profile set is empty");
    double acc = 0.0;
    std::size_t used = 0;
    for (const auto& rec : set.records) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t j = 0; j < rec.size(); ++j) {
            if (!rec.augmented.empty() && rec.augmented[j])
                continue;
            sum += rec.temp[j];
            ++n;
        }
        if (n > 0) {
            acc += sum / double(n);
            ++used;
        }
    }
    if (used == 0)
        throw ValidationError("profile set has no measured points");
    return acc / double(used);
}

double mae_fraction(double mae_ev, double reference_temperature_ev) {
    if (!(reference_temperature_ev > 0.0))
        throw ValidationError("reference temperature must be positive");
    return mae_ev / reference_temperature_ev;
}

FitMetrics fit_metrics(const ProfileSet& set, const FittedModel& model) {
    double abs_acc = 0.0, log_acc = 0.0;
    std::size_t n = 0;
    bool log_ok = true;
    for (const auto& rec : set.records) {
        for (std::size_t j = 0; j < rec.size(); ++j) {
            if (!rec.augmented.empty() && rec.augmented[j])
                continue;
            const double pred = model.predict(rec.psi[j], rec.covariates);
            abs_acc += std::abs(rec.temp[j] - pred);
            if (pred > 0.0)
                log_acc += std::pow(std::log(rec.temp[j]) - std::log(pred), 2);
            else
                log_ok = false;
            ++n;
        }
    }
    if (n == 0)
        throw ValidationError("profile set has no measured points");
    FitMetrics metrics;
    metrics.mae_ev = abs_acc / double(n);
    metrics.mae_pct = 100.0 * mae_fraction(metrics.mae_ev, mean_line_average_temperature(set));
    metrics.rmse_log =
        log_ok ? std::sqrt(log_acc / double(n)) : std::numeric_limits<double>::quiet_NaN();
    return metrics;
}

} // namespace profilefit
