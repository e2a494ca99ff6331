// Command-line front end: fit / select / predict / tabulate / simulate /
// chi-fit over NDJSON profile files and JSON model files.

#include "profilefit/dataset.hpp"
#include "profilefit/diffusivity.hpp"
#include "profilefit/errors.hpp"
#include "profilefit/fitted_model.hpp"
#include "profilefit/parallel.hpp"
#include "profilefit/reference.hpp"
#include "profilefit/selection.hpp"
#include "profilefit/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace profilefit;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

double parse_double(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size())
            throw ValidationError("bad " + what + " value '" + text + "'");
        return v;
    } catch (const std::logic_error&) {
        throw ValidationError("bad " + what + " value '" + text + "'");
    }
}

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, sep))
        if (!item.empty())
            out.push_back(item);
    return out;
}

FittedModel load_model_arg(const std::string& arg) {
    if (arg == "builtin:jet-ohmic")
        return jet_reference_model();
    if (arg == "builtin:jet-ohmic-reduced")
        return jet_reference_reduced_model();
    return FittedModel::load(arg);
}

/// --spec accepts a preset ("additive:Ip,Bt,nbar,qgeo" or
/// "profile-consistency:Ip,Bt,nbar"), inline JSON, or @file / *.json.
AdditiveModelSpec resolve_spec(const std::string& arg, int n_knots, double thinning, double lo,
                               double hi) {
    const SplineBasis basis(SplineBasis::make_knots(n_knots, thinning, lo, hi), 4, lo, hi);
    if (arg.empty() || arg.rfind("additive:", 0) == 0) {
        std::vector<std::string> covs =
            arg.empty() ? std::vector<std::string>{"Ip", "Bt", "nbar", "qgeo"}
                        : split_list(arg.substr(9));
        AdditiveModelSpec spec;
        spec.basis = basis;
        spec.terms.push_back({kIntercept, Constraint::free_term});
        for (const auto& c : covs)
            spec.terms.push_back({c, Constraint::free_term});
        spec.validate();
        return spec;
    }
    if (arg.rfind("profile-consistency:", 0) == 0)
        return profile_consistency_spec(split_list(arg.substr(20)), basis);
    if (!arg.empty() && arg.front() == '@')
        return AdditiveModelSpec::from_json(slurp(arg.substr(1)));
    if (!arg.empty() && arg.front() == '{')
        return AdditiveModelSpec::from_json(arg);
    return AdditiveModelSpec::from_json(slurp(arg));
}

LambdaGrid parse_lambda_grid(const std::string& text) {
    LambdaGrid grid;
    if (text.empty())
        return grid;
    const auto parts = split_list(text, ':');
    if (parts.size() != 3)
        throw ValidationError("--lambda-grid expects lo:hi:n");
    grid.lo = parse_double(parts[0], "--lambda-grid");
    grid.hi = parse_double(parts[1], "--lambda-grid");
    grid.n = int(parse_double(parts[2], "--lambda-grid"));
    return grid;
}

ProfileSet load_and_prepare(const std::string& path, bool do_clean, bool do_reflect,
                            double edge_threshold, double reflect_threshold) {
    ProfileSet set = load_profiles(path);
    for (auto& rec : set.records) {
        if (do_clean)
            rec = clean_edge(rec, edge_threshold);
        if (do_reflect)
            rec = reflect_inboard(rec, reflect_threshold);
        rec.validate();
    }
    return set;
}

void write_text(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    if (!out)
        throw IoError("cannot open '" + out_path + "' for writing");
    out << text;
    if (!out)
        throw IoError("write to '" + out_path + "' failed");
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}


struct CommonOptions {
    std::string input, model, spec, out;
    std::string criterion = "rice";
    std::string lambda_grid;
    double rho = 0.0;
    double corr_length = 0.05;
    std::uint64_t seed = 1;
    int knots = 20;
    double thinning = 2.0;
    std::string scale = "log";
    bool no_clean = false, no_reflect = false;
    double edge_threshold = 0.9, reflect_threshold = 0.87;
};

CorrelationModel corr_of(const CommonOptions& o) {
    CorrelationModel corr;
    if (o.rho > 0.0) {
        corr.kind = CorrelationModel::Kind::radial_ar1;
        corr.rho = o.rho;
        corr.length_scale = o.corr_length;
    }
    return corr;
}

FitScale scale_of(const CommonOptions& o) {
    if (o.scale == "log")
        return FitScale::log_temperature;
    if (o.scale == "linear")
        return FitScale::linear_temperature;
    throw ValidationError("--scale must be log or linear");
}

int cmd_fit(const CommonOptions& o, const std::string& normalization_arg,
            const std::string& lambda_arg) {
    ProfileSet set = load_and_prepare(o.input, !o.no_clean, !o.no_reflect, o.edge_threshold,
                                      o.reflect_threshold);
    if (!normalization_arg.empty()) {
        // fit in a caller-supplied covariate gauge instead of the set means
        const std::string text = normalization_arg.front() == '@'
                                     ? slurp(normalization_arg.substr(1))
                                     : normalization_arg;
        try {
            for (const auto& [name, v] :
                 json::parse(text).get<std::map<std::string, double>>())
                set.normalization[name] = v;
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad --normalization JSON: ") + e.what());
        }
    }
    const AdditiveModelSpec spec = resolve_spec(o.spec, o.knots, o.thinning, -1.0, 1.0);
    const DesignSystem sys = build_design(set, spec, scale_of(o), corr_of(o));
    LambdaChoice choice;
    if (!lambda_arg.empty()) {
        // fixed smoothing, shared or per term, skipping the criterion search
        const auto parts = split_list(lambda_arg);
        std::vector<double> lambdas(spec.terms.size());
        if (parts.size() == 1)
            lambdas.assign(spec.terms.size(), parse_double(parts[0], "--lambda"));
        else if (parts.size() == spec.terms.size())
            for (std::size_t i = 0; i < parts.size(); ++i)
                lambdas[i] = parse_double(parts[i], "--lambda");
        else
            throw ValidationError("--lambda expects one value or one per term");
        choice.fit = solve(sys, lambdas);
        choice.lambdas = lambdas;
        choice.criterion_value = criterion_from_name(o.criterion) == Criterion::rice
                                     ? rice(choice.fit, sys.K, sys.n_measured)
                                     : gcv(choice.fit, sys.K, sys.n_measured);
    } else {
        choice = optimize_lambdas(sys, criterion_from_name(o.criterion),
                                  parse_lambda_grid(o.lambda_grid));
    }
    FittedModel model = assemble_model(sys, choice.fit);
    model.risk = risk_report(choice.fit, sys.K, sys.n_measured);
    model.metrics = fit_metrics(set, model);
    if (!o.out.empty())
        model.save(o.out);
    std::cout << "mae_ev\t" << format_double(model.metrics->mae_ev) << '\n'
              << "mae_pct\t" << format_double(model.metrics->mae_pct) << '\n'
              << "rmse_log\t" << format_double(model.metrics->rmse_log) << '\n'
              << "rice\t" << format_double(model.risk->rice) << '\n'
              << "dof_effective\t" << format_double(model.risk->dof_effective) << '\n'
              << "ease_cw\t" << format_double(model.risk->ease_cw) << '\n'
              << "gcv\t" << format_double(model.risk->gcv) << '\n'
              << "chi2\t" << format_double(model.risk->chi2) << '\n'
              << "sigma2_cw\t" << format_double(model.risk->sigma2_cw) << '\n'
              << "n_measured\t" << model.risk->n_measured << '\n';
    return 0;
}

int cmd_select(const CommonOptions& o, const std::string& candidates_arg, int max_stages) {
    const ProfileSet set = load_and_prepare(o.input, !o.no_clean, !o.no_reflect,
                                            o.edge_threshold, o.reflect_threshold);
    std::vector<std::string> candidates =
        candidates_arg.empty()
            ? std::vector<std::string>{"Ip", "Bt", "nbar", "q95", "qgeo", "kappa", "a", "R",
                                       "Vloop", "Zeff", "li", "time"}
            : split_list(candidates_arg);
    ForwardSelectOptions opts;
    opts.max_stages = max_stages;
    opts.criterion = criterion_from_name(o.criterion);
    opts.grid = parse_lambda_grid(o.lambda_grid);
    opts.scale = scale_of(o);
    opts.corr = corr_of(o);
    opts.n_interior_knots = o.knots;
    opts.edge_thinning = o.thinning;
    const SelectionTrace trace = forward_select(set, candidates, opts);
    std::cout << trace.render_table(candidates);
    for (const auto& w : trace.warnings)
        std::cerr << "warning: " << w << '\n';
    if (!o.out.empty())
        write_text(trace.to_json() + "\n", o.out);
    return 0;
}

int cmd_predict(const CommonOptions& o, const std::string& psi_arg,
                const std::string& covariates_arg) {
    const FittedModel model = load_model_arg(o.model);
    std::map<std::string, double> covs;
    if (!covariates_arg.empty()) {
        const std::string text = covariates_arg.front() == '@' ? slurp(covariates_arg.substr(1))
                                                               : covariates_arg;
        try {
            covs = json::parse(text).get<std::map<std::string, double>>();
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad --covariates JSON: ") + e.what());
        }
    }
    std::ostringstream out;
    out << "psi\ttemperature_ev\n";
    for (const auto& p : split_list(psi_arg)) {
        const double psi = parse_double(p, "--psi");
        out << format_double(psi) << '\t' << format_double(model.predict(psi, covs)) << '\n';
    }
    write_text(out.str(), o.out);
    return 0;
}

int cmd_tabulate(const CommonOptions& o, double step) {
    const FittedModel model = load_model_arg(o.model);
    const double lo = model.basis.lo(), hi = model.basis.hi();
    if (!(step > 0.0))
        throw ValidationError("--step must be positive");
    const double span = hi - lo;
    const double steps = span / step;
    if (std::abs(steps - std::round(steps)) > 1e-9)
        throw ValidationError("step must divide the domain span exactly");
    const int n = int(std::round(steps));
    int decimals = 1;
    while (decimals < 6 &&
           std::abs(step * std::pow(10.0, decimals) -
                    std::round(step * std::pow(10.0, decimals))) > 1e-9)
        ++decimals;

    std::ostringstream out;
    out << "psi";
    for (const auto& t : model.terms)
        out << '\t' << (t.covariate == kIntercept ? "f0" : "f_" + t.covariate);
    out << '\n';
    char buf[40];
    for (int i = 0; i <= n; ++i) {
        const double psi = i == n ? hi : lo + step * double(i);
        std::snprintf(buf, sizeof buf, "%.*f", decimals, psi);
        out << buf;
        for (std::size_t t = 0; t < model.terms.size(); ++t) {
            std::snprintf(buf, sizeof buf, "%.4f", model.term_value(t, psi));
            out << '\t' << buf;
        }
        out << '\n';
    }
    write_text(out.str(), o.out);
    return 0;
}

int cmd_simulate(const CommonOptions& o, int n_profiles, double noise_rel, int points,
                 const std::string& ranges_arg, double psi_min, double psi_max) {
    const FittedModel model = load_model_arg(o.model);
    SimulationConfig config;
    config.n_profiles = n_profiles;
    config.noise_rel = noise_rel;
    config.points_per_profile = points;
    config.seed = o.seed;
    config.psi_min = psi_min;
    config.psi_max = psi_max;
    if (!ranges_arg.empty()) {
        const std::string text = ranges_arg.front() == '@' ? slurp(ranges_arg.substr(1))
                                                           : ranges_arg;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad --ranges JSON: ") + e.what());
        }
        for (const auto& [name, jr] : j.items()) {
            CovariateRange r;
            r.lo = jr.at("lo").get<double>();
            r.hi = jr.at("hi").get<double>();
            r.log_sample = jr.value("log", is_log_covariate(name));
            config.ranges[name] = r;
        }
    }
    const ProfileSet set = simulate_profiles(model, config);
    std::ostringstream out;
    for (const auto& rec : set.records)
        out << record_to_json_line(rec) << '\n';
    write_text(out.str(), o.out);
    return 0;
}

int cmd_chi_fit(const CommonOptions& o, const std::string& conditions_path,
                const std::string& lambda_arg, int chi_knots, int n_grid) {
    const ProfileSet set = load_and_prepare(o.input, !o.no_clean, !o.no_reflect,
                                            o.edge_threshold, o.reflect_threshold);
    const auto conditions = load_conditions(conditions_path);
    AdditiveModelSpec structure =
        o.spec.empty() ? resolve_spec("additive:", chi_knots, 1.0, 0.0, 1.0)
                       : resolve_spec(o.spec, chi_knots, 1.0, 0.0, 1.0);
    std::vector<double> lambdas(structure.terms.size(), 1e-3);
    if (!lambda_arg.empty()) {
        const auto parts = split_list(lambda_arg);
        if (parts.size() == 1) {
            lambdas.assign(structure.terms.size(), parse_double(parts[0], "--lambda"));
        } else if (parts.size() == structure.terms.size()) {
            for (std::size_t i = 0; i < parts.size(); ++i)
                lambdas[i] = parse_double(parts[i], "--lambda");
        } else {
            throw ValidationError("--lambda expects one value or one per term");
        }
    }
    ChiFitOptions opts;
    opts.n_grid = n_grid;
    const ChiFitResult result = fit_chi(set, conditions, structure, lambdas, opts);
    if (!o.out.empty())
        result.model.save(o.out);
    std::cout << "objective\t" << format_double(result.objective) << '\n'
              << "iterations\t" << result.iterations << '\n'
              << "converged\t" << (result.converged ? "yes" : "no") << '\n'
              << "rice\t" << format_double(result.risk.rice) << '\n'
              << "dof_effective\t" << format_double(result.risk.dof_effective) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"semiparametric plasma profile regression and transport fitting"};
    app.require_subcommand(1);
    app.fallthrough(true);

    CommonOptions o;
    bool serial = false;
    app.add_flag("--serial", serial, "run the serial reference kernels");

    auto add_common = [&](CLI::App* cmd, bool with_input, bool with_model) {
        if (with_input)
            cmd->add_option("--input", o.input, "profiles NDJSON file")->required();
        if (with_model)
            cmd->add_option("--model", o.model,
                            "model JSON file (or builtin:jet-ohmic / builtin:jet-ohmic-reduced)")
                ->required();
        cmd->add_option("--out", o.out, "output path");
        cmd->add_option("--criterion", o.criterion, "selection criterion: rice or gcv");
        cmd->add_option("--rho", o.rho, "within-profile error correlation (AR1 kernel)");
        cmd->add_option("--corr-length", o.corr_length, "correlation length scale in psi");
        cmd->add_option("--lambda-grid", o.lambda_grid, "geometric factor grid lo:hi:n");
        cmd->add_option("--seed", o.seed, "random seed");
        cmd->add_option("--knots", o.knots, "interior knot count");
        cmd->add_option("--thinning", o.thinning, "edge thinning factor");
        cmd->add_option("--scale", o.scale, "fit scale: log or linear");
        cmd->add_flag("--no-clean", o.no_clean, "skip edge deletion");
        cmd->add_flag("--no-reflect", o.no_reflect, "skip inboard reflection");
        cmd->add_option("--edge-threshold", o.edge_threshold, "edge deletion |psi| threshold");
        cmd->add_option("--reflect-threshold", o.reflect_threshold, "reflection psi threshold");
    };

    auto* fit = app.add_subcommand("fit", "fit an additive log-temperature model");
    add_common(fit, true, false);
    fit->add_option("--spec", o.spec, "model spec (preset, JSON, or @file)");
    std::string normalization_arg;
    fit->add_option("--normalization", normalization_arg,
                    "covariate reference values JSON (or @file); default: set means");
    std::string fit_lambda_arg;
    fit->add_option("--lambda", fit_lambda_arg,
                    "fixed smoothing parameter(s) instead of criterion search");

    auto* select = app.add_subcommand("select", "sequential forward variable selection");
    add_common(select, true, false);
    std::string candidates_arg;
    int max_stages = 6;
    select->add_option("--candidates", candidates_arg, "comma-separated candidate covariates");
    select->add_option("--max-stages", max_stages, "stage budget");

    auto* predict = app.add_subcommand("predict", "evaluate a fitted model");
    add_common(predict, false, true);
    std::string psi_arg = "0";
    std::string covariates_arg;
    predict->add_option("--psi", psi_arg, "comma-separated radii");
    predict->add_option("--covariates", covariates_arg, "raw covariates JSON (or @file)");

    auto* tabulate = app.add_subcommand("tabulate", "table of radial coefficient functions");
    add_common(tabulate, false, true);
    double step = 0.1;
    tabulate->add_option("--step", step, "psi step (must divide the domain)");

    auto* simulate = app.add_subcommand("simulate", "draw synthetic profiles from a model");
    add_common(simulate, false, true);
    int n_profiles = 43, points = 50;
    double noise_rel = 0.10, psi_min = -0.95, psi_max = 0.98;
    std::string ranges_arg;
    simulate->add_option("--n-profiles", n_profiles, "number of profiles");
    simulate->add_option("--noise-rel", noise_rel, "relative noise level");
    simulate->add_option("--points", points, "radial points per profile");
    simulate->add_option("--ranges", ranges_arg, "covariate ranges JSON (or @file)");
    simulate->add_option("--psi-min", psi_min, "innermost sampled psi");
    simulate->add_option("--psi-max", psi_max, "outermost sampled psi");

    auto* chifit = app.add_subcommand("chi-fit", "fit a log-additive diffusivity model");
    add_common(chifit, true, false);
    chifit->add_option("--spec", o.spec, "chi model spec (preset, JSON, or @file)");
    std::string conditions_path, lambda_arg;
    int chi_knots = 8, n_grid = 129;
    chifit->add_option("--conditions", conditions_path, "discharge conditions NDJSON")->required();
    chifit->add_option("--lambda", lambda_arg, "smoothing parameter(s), shared or per-term");
    chifit->add_option("--chi-knots", chi_knots, "interior knots of the chi basis");
    chifit->add_option("--n-grid", n_grid, "transport solver grid points");

    try {
        app.parse(argc, argv);
        set_parallel_enabled(!serial);
        if (fit->parsed())
            return cmd_fit(o, normalization_arg, fit_lambda_arg);
        if (select->parsed())
            return cmd_select(o, candidates_arg, max_stages);
        if (predict->parsed())
            return cmd_predict(o, psi_arg, covariates_arg);
        if (tabulate->parsed())
            return cmd_tabulate(o, step);
        if (simulate->parsed())
            return cmd_simulate(o, n_profiles, noise_rel, points, ranges_arg, psi_min, psi_max);
        if (chifit->parsed())
            return cmd_chi_fit(o, conditions_path, lambda_arg, chi_knots, n_grid);
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}
