#include "profilefit/diffusivity.hpp"
#include "profilefit/errors.hpp"
#include "profilefit/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace profilefit {

using nlohmann::json;

void DischargeConditions::validate() const {
    const std::string who = "conditions '" + id + "': ";
    if (psi_grid.size() < 2)
        throw ValidationError(who + "psi_grid needs at least 2 points");
    if (density.size() != psi_grid.size() || source.size() != psi_grid.size())
        throw ValidationError(who + "density/source lengths differ from psi_grid");
    for (std::size_t i = 0; i < psi_grid.size(); ++i) {
        if (i > 0 && !(psi_grid[i] > psi_grid[i - 1]))
            throw ValidationError(who + "psi_grid must be strictly increasing");
        if (!(density[i] >= 0.0))
            throw ValidationError(who + "density must be nonnegative");
        if (!(source[i] >= 0.0))
            throw ValidationError(who + "source must be nonnegative");
    }
    if (psi_grid.front() > 1e-9 || psi_grid.back() < 1.0 - 1e-9)
        throw ValidationError(who + "psi_grid must cover [0, 1]");
    if (!(edge_temp > 0.0))
        throw ValidationError(who + "edge temperature must be positive");
    if (!(minor_radius > 0.0))
        throw ValidationError(who + "minor radius must be positive");
}

std::vector<DischargeConditions> load_conditions(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open conditions file '" + path + "'");
    std::vector<DischargeConditions> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        DischargeConditions c;
        try {
            const json j = json::parse(line);
            c.id = j.at("id").get<std::string>();
            c.psi_grid = j.at("psi_grid").get<std::vector<double>>();
            c.density = j.at("density").get<std::vector<double>>();
            c.source = j.at("source_w_m3").get<std::vector<double>>();
            c.edge_temp = j.at("edge_temp_ev").get<double>();
            c.minor_radius = j.at("minor_radius_m").get<double>();
            if (j.contains("covariates"))
                c.covariates = j.at("covariates").get<std::map<std::string, double>>();
        } catch (const json::exception& e) {
            throw ParseError("parse error at line " + std::to_string(lineno) + " of '" + path +
                             "': " + e.what());
        }
        c.validate();
        out.push_back(std::move(c));
    }
    if (out.empty())
        throw ValidationError("conditions file '" + path + "' holds no records");
    return out;
}

void write_conditions(const std::vector<DischargeConditions>& conditions,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open '" + path + "' for writing");
    for (const auto& c : conditions) {
        json j;
        j["id"] = c.id;
        j["psi_grid"] = c.psi_grid;
        j["density"] = c.density;
        j["source_w_m3"] = c.source;
        j["edge_temp_ev"] = c.edge_temp;
        j["minor_radius_m"] = c.minor_radius;
        if (!c.covariates.empty())
            j["covariates"] = c.covariates;
        out << j.dump() << '\n';
    }
    if (!out)
        throw IoError("write to '" + path + "' failed");
}

namespace {

double interp_clamped(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (x <= xs.front())
        return ys.front();
    if (x >= xs.back())
        return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t hi = std::size_t(it - xs.begin());
    const double t = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
    return (1.0 - t) * ys[hi - 1] + t * ys[hi];
}

/// Shared forward core.  Solves the two-pass quadrature on a uniform psi
/// grid; when `columns` is non-null it also propagates the sensitivities
/// d T / d g for log-chi column functions given in `columns` (n_grid x P).
struct ForwardCore {
    std::vector<double> psi;   // n_grid points on [0, 1]
    std::vector<double> temp;  // temperature on the grid
    Eigen::MatrixXd dtemp;     // n_grid x P sensitivities (when requested)
};

ForwardCore forward_core(const DischargeConditions& cond, const std::vector<double>& log_chi,
                         int n_grid, const Eigen::MatrixXd* columns) {
    const int M = n_grid;
    const double a = cond.minor_radius;
    const double h = a / double(M - 1);

    ForwardCore out;
    out.psi.resize(M);
    out.temp.resize(M);

    std::vector<double> integrand(M); // F / (r n chi)
    double F = 0.0;
    double prev_sr = 0.0;
    for (int k = 0; k < M; ++k) {
        const double psi = double(k) / double(M - 1);
        out.psi[k] = psi;
        const double r = a * psi;
        const double n = interp_clamped(cond.psi_grid, cond.density, psi);
        const double S = interp_clamped(cond.psi_grid, cond.source, psi);
        const double chi = std::exp(log_chi[k]);
        if (!(n > 0.0) || !(chi > 0.0) || !std::isfinite(chi))
            throw NumericalError("singular conductivity: n*chi vanishes at psi = " +
                                 std::to_string(psi) + " (conditions '" + cond.id + "')");
        const double sr = S * r;
        if (k > 0)
            F += 0.5 * h * (prev_sr + sr);
        prev_sr = sr;
        integrand[k] = k == 0 ? 0.0 : F / (r * n * chi);
    }

    out.temp[M - 1] = cond.edge_temp;
    for (int k = M - 2; k >= 0; --k)
        out.temp[k] = out.temp[k + 1] + 0.5 * h * (integrand[k] + integrand[k + 1]);

    if (columns) {
        const int P = int(columns->cols());
        out.dtemp = Eigen::MatrixXd::Zero(M, P);
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(P);
        for (int k = M - 2; k >= 0; --k) {
            // d integrand / d g_c = -integrand * column_c
            acc -= 0.5 * h *
                   (integrand[k] * columns->row(k) + integrand[k + 1] * columns->row(k + 1));
            out.dtemp.row(k) = acc;
        }
    }
    return out;
}

std::vector<double> log_chi_on_grid(const FittedModel& chi, const DischargeConditions& cond,
                                    int n_grid) {
    std::vector<double> v(n_grid);
    for (int k = 0; k < n_grid; ++k)
        v[k] = chi.additive_response(double(k) / double(n_grid - 1), cond.covariates);
    return v;
}

double interp_uniform(const std::vector<double>& values, double x) {
    const int M = int(values.size());
    const double pos = std::clamp(x, 0.0, 1.0) * double(M - 1);
    const int k = std::min(int(pos), M - 2);
    const double t = pos - double(k);
    return (1.0 - t) * values[k] + t * values[k + 1];
}

} // namespace

ForwardSolution forward_temperature(const FittedModel& chi, const DischargeConditions& cond,
                                    int n_grid) {
    if (n_grid < 16)
        throw ValidationError("forward solve needs n_grid >= 16");
    cond.validate();
    if (chi.kind != "diffusivity")
        throw ValidationError("forward_temperature expects a diffusivity model");
    const auto core = forward_core(cond, log_chi_on_grid(chi, cond, n_grid), n_grid, nullptr);
    return {core.psi, core.temp};
}

std::vector<double> forward_at_points(const FittedModel& chi, const DischargeConditions& cond,
                                      const std::vector<double>& abs_psi, int n_grid) {
    const ForwardSolution sol = forward_temperature(chi, cond, n_grid);
    std::vector<double> out(abs_psi.size());
    for (std::size_t i = 0; i < abs_psi.size(); ++i)
        out[i] = interp_uniform(sol.temperature, std::abs(abs_psi[i]));
    return out;
}

Eigen::MatrixXd forward_jacobian_at_points(const FittedModel& chi,
                                           const DischargeConditions& cond,
                                           const std::vector<double>& abs_psi, int n_grid) {
    if (n_grid < 16)
        throw ValidationError("forward solve needs n_grid >= 16");
    cond.validate();
    const int M = n_grid;
    int P = 0;
    for (const auto& t : chi.terms)
        P += int(t.coefficients.size());

    Eigen::MatrixXd columns = Eigen::MatrixXd::Zero(M, P);
    for (int k = 0; k < M; ++k) {
        const double psi = double(k) / double(M - 1);
        int off = 0;
        for (const auto& term : chi.terms) {
            const double h = term.covariate == kIntercept
                                 ? 1.0
                                 : covariate_value(cond.covariates, term.covariate,
                                                   chi.normalization);
            if (term.constraint == Constraint::constant) {
                columns(k, off) += h;
                off += 1;
            } else {
                const Eigen::VectorXd b = chi.basis.eval_dense(psi);
                columns.block(k, off, 1, b.size()) += h * b.transpose();
                off += int(b.size());
            }
        }
    }

    const auto core = forward_core(cond, log_chi_on_grid(chi, cond, M), M, &columns);
    Eigen::MatrixXd J(abs_psi.size(), P);
    for (std::size_t p = 0; p < abs_psi.size(); ++p) {
        const double x = std::clamp(std::abs(abs_psi[p]), 0.0, 1.0) * double(M - 1);
        const int k = std::min(int(x), M - 2);
        const double t = x - double(k);
        J.row(p) = (1.0 - t) * core.dtemp.row(k) + t * core.dtemp.row(k + 1);
    }
    return J;
}

namespace {

/// Per-discharge fitting workspace: measured points, weights, and the
/// log-chi column matrix on the solver grid.
struct DischargeWork {
    const DischargeConditions* cond = nullptr;
    std::vector<double> abs_psi; // measured |psi|
    Eigen::VectorXd y;           // measured temperatures
    Eigen::VectorXd w;           // 1/sigma^2
    Eigen::MatrixXd columns;     // n_grid x P, column c of log chi
};

double measured_core_temp(const ProfileRecord& rec) {
    double best = rec.temp.front();
    double best_abs = 2.0;
    for (std::size_t j = 0; j < rec.size(); ++j) {
        if (!rec.augmented.empty() && rec.augmented[j])
            continue;
        if (std::abs(rec.psi[j]) < best_abs) {
            best_abs = std::abs(rec.psi[j]);
            best = rec.temp[j];
        }
    }
    return best;
}

} // namespace

ChiFitResult fit_chi(const ProfileSet& set, const std::vector<DischargeConditions>& conditions,
                     const AdditiveModelSpec& structure, const std::vector<double>& lambdas,
                     const ChiFitOptions& options) {
    structure.validate();
    if (set.records.empty())
        throw ValidationError("fit_chi requires a nonempty profile set");
    if (std::abs(structure.basis.lo()) > 1e-12 || std::abs(structure.basis.hi() - 1.0) > 1e-12)
        throw ValidationError("diffusivity basis must live on [0, 1]");
    if (lambdas.size() != structure.terms.size())
        throw ValidationError("lambda vector length does not match the chi model terms");
    if (options.n_grid < 16)
        throw ValidationError("fit_chi needs n_grid >= 16");

    // Layout (folds and penalties) for the chi spec.
    const std::vector<TermLayout> layout = make_term_layout(structure);
    const int P = structure.total_columns();
    const int M = options.n_grid;

    std::map<std::string, const DischargeConditions*> by_id;
    for (const auto& c : conditions)
        by_id[c.id] = &c;

    const std::size_t n_disch = set.records.size();
    std::vector<DischargeWork> work(n_disch);
    std::vector<DischargeConditions> merged(n_disch);
    int n_measured = 0;
    for (std::size_t i = 0; i < n_disch; ++i) {
        const ProfileRecord& rec = set.records[i];
        auto it = by_id.find(rec.id);
        if (it == by_id.end())
            throw ValidationError("no discharge conditions for record '" + rec.id + "'");
        merged[i] = *it->second;
        merged[i].validate();
        for (const auto& [name, value] : rec.covariates)
            merged[i].covariates.emplace(name, value);

        DischargeWork& wk = work[i];
        wk.cond = &merged[i];
        std::vector<double> yv, wv;
        for (std::size_t j = 0; j < rec.size(); ++j) {
            if (!rec.augmented.empty() && rec.augmented[j])
                continue;
            wk.abs_psi.push_back(std::abs(rec.psi[j]));
            yv.push_back(rec.temp[j]);
            wv.push_back(1.0 / (rec.sigma[j] * rec.sigma[j]));
        }
        wk.y = Eigen::Map<Eigen::VectorXd>(yv.data(), yv.size());
        wk.w = Eigen::Map<Eigen::VectorXd>(wv.data(), wv.size());
        n_measured += int(yv.size());

        // Column functions of log chi on the solver grid.
        wk.columns = Eigen::MatrixXd::Zero(M, P);
        std::vector<double> h_vals(structure.terms.size(), 1.0);
        for (std::size_t t = 1; t < structure.terms.size(); ++t)
            h_vals[t] = covariate_value(merged[i].covariates, structure.terms[t].covariate,
                                        set.normalization);
        double window[16];
        for (int k = 0; k < M; ++k) {
            const double psi = double(k) / double(M - 1);
            const int first = structure.basis.eval_window(psi, window);
            for (std::size_t t = 0; t < structure.terms.size(); ++t) {
                const TermLayout& lay = layout[t];
                for (int b = 0; b < structure.basis.order(); ++b) {
                    const int kk = first + b;
                    for (int c = 0; c < lay.count; ++c)
                        if (lay.fold(kk, c) != 0.0)
                            wk.columns(k, lay.offset + c) += lay.fold(kk, c) * window[b] * h_vals[t];
                }
            }
        }
    }

    // Penalty matrix over all blocks.
    Eigen::MatrixXd Lambda = Eigen::MatrixXd::Zero(P, P);
    for (std::size_t t = 0; t < layout.size(); ++t) {
        if (!layout[t].is_spline)
            continue;
        if (!(lambdas[t] >= 0.0))
            throw ValidationError("smoothing parameters must be nonnegative");
        Lambda.block(layout[t].offset, layout[t].offset, layout[t].count, layout[t].count) +=
            lambdas[t] * layout[t].penalty;
    }

    auto assemble = [&](const Eigen::VectorXd& g) {
        FittedModel m;
        m.kind = "diffusivity";
        m.scale = FitScale::log_temperature;
        m.basis = structure.basis;
        for (std::size_t t = 0; t < structure.terms.size(); ++t) {
            FittedTerm term;
            term.covariate = structure.terms[t].covariate;
            term.constraint = structure.terms[t].constraint;
            term.lambda = lambdas[t];
            const auto beta = g.segment(layout[t].offset, layout[t].count);
            term.coefficients = term.constraint == Constraint::constant
                                    ? Eigen::VectorXd(beta)
                                    : Eigen::VectorXd(layout[t].fold * beta);
            if (term.covariate != kIntercept && set.normalization.count(term.covariate))
                m.normalization[term.covariate] = set.normalization.at(term.covariate);
            m.terms.push_back(std::move(term));
        }
        return m;
    };

    // Objective (residuals plus penalty) for a coefficient vector.
    auto objective_of = [&](const Eigen::VectorXd& g, std::vector<double>* rss_out) {
        std::vector<double> rss(n_disch, 0.0);
        parallel_for(std::ptrdiff_t(n_disch), [&](std::ptrdiff_t i) {
            const DischargeWork& wk = work[i];
            std::vector<double> log_chi(M);
            Eigen::VectorXd lc = wk.columns * g;
            for (int k = 0; k < M; ++k)
                log_chi[k] = lc[k];
            const auto core = forward_core(*wk.cond, log_chi, M, nullptr);
            double acc = 0.0;
            for (std::size_t p = 0; p < wk.abs_psi.size(); ++p) {
                const double pred = interp_uniform(core.temp, wk.abs_psi[p]);
                const double e = wk.y[int(p)] - pred;
                acc += wk.w[int(p)] * e * e;
            }
            rss[i] = acc;
        });
        double total = 0.0;
        for (double v : rss)
            total += v;
        if (rss_out)
            *rss_out = rss;
        return total + double(g.transpose() * Lambda * g);
    };

    // Initial iterate: constant chi matched to the core-to-edge temperature
    // difference of each discharge, averaged in log.
    double log_chi0 = 0.0;
    {
        double acc = 0.0;
        int cnt = 0;
        for (std::size_t i = 0; i < n_disch; ++i) {
            const auto core =
                forward_core(*work[i].cond, std::vector<double>(M, 0.0), M, nullptr);
            const double q = core.temp.front() - work[i].cond->edge_temp; // chi = 1 rise
            const double dt = measured_core_temp(set.records[i]) - work[i].cond->edge_temp;
            if (q > 0.0 && dt > 0.0) {
                acc += std::log(q / dt);
                ++cnt;
            }
        }
        log_chi0 = cnt > 0 ? acc / double(cnt) : 0.0;
    }
    Eigen::VectorXd g = Eigen::VectorXd::Zero(P);
    g.segment(layout[0].offset, layout[0].count).setConstant(log_chi0);

    double obj = objective_of(g, nullptr);
    ChiFitResult result;
    result.converged = false;

    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        // Gauss-Newton normal equations, accumulated per discharge and
        // reduced in index order.
        std::vector<Eigen::MatrixXd> Ai(n_disch);
        std::vector<Eigen::VectorXd> bi(n_disch);
        parallel_for(std::ptrdiff_t(n_disch), [&](std::ptrdiff_t i) {
            const DischargeWork& wk = work[i];
            Eigen::VectorXd lc = wk.columns * g;
            std::vector<double> log_chi(lc.data(), lc.data() + M);
            const auto core = forward_core(*wk.cond, log_chi, M, &wk.columns);
            const int m = int(wk.abs_psi.size());
            Eigen::MatrixXd J(m, P);
            Eigen::VectorXd r(m);
            for (int p = 0; p < m; ++p) {
                const double x = std::clamp(wk.abs_psi[p], 0.0, 1.0) * double(M - 1);
                const int k = std::min(int(x), M - 2);
                const double t = x - double(k);
                r[p] = wk.y[p] - ((1.0 - t) * core.temp[k] + t * core.temp[k + 1]);
                J.row(p) = (1.0 - t) * core.dtemp.row(k) + t * core.dtemp.row(k + 1);
            }
            Ai[i] = J.transpose() * wk.w.asDiagonal() * J;
            bi[i] = J.transpose() * (wk.w.array() * r.array()).matrix();
        });
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(P, P);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(P);
        for (std::size_t i = 0; i < n_disch; ++i) {
            A += Ai[i];
            b += bi[i];
        }

        Eigen::MatrixXd Mn = A + Lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(Mn);
        if (llt.info() != Eigen::Success) {
            Mn.diagonal().array() += 1e-10 * (A.trace() / double(P) + 1.0);
            llt.compute(Mn);
            if (llt.info() != Eigen::Success)
                throw RankDeficiencyError("chi fit normal equations are rank deficient");
        }
        const Eigen::VectorXd delta = llt.solve(b - Lambda * g);

        if (delta.cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + g.cwiseAbs().maxCoeff())) {
            result.converged = true;
            break;
        }

        double step = 1.0;
        bool accepted = false;
        double new_obj = obj;
        Eigen::VectorXd g_new;
        for (int h = 0; h <= options.max_halvings; ++h) {
            g_new = g + step * delta;
            new_obj = objective_of(g_new, nullptr);
            if (new_obj < obj) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // At a stationary point the search cannot improve; treat a
            // vanishing relative gap as convergence, otherwise fail loudly.
            if (std::abs(new_obj - obj) <= 1e-12 * std::max(1.0, obj)) {
                result.converged = true;
                break;
            }
            throw ChiNonConvergenceError(
                "line search failed after " + std::to_string(options.max_halvings) +
                    " halvings (objective " + std::to_string(obj) + ")",
                assemble(g));
        }
        g = g_new;
        const double decrease = (obj - new_obj) / std::max(obj, 1e-300);
        obj = new_obj;
        if (decrease < options.objective_tolerance) {
            result.converged = true;
            ++iter;
            break;
        }
    }

    result.model = assemble(g);
    result.iterations = iter;
    result.objective = obj;

    // Risk of the linearized problem at the optimum.
    {
        std::vector<Eigen::MatrixXd> Ai(n_disch);
        std::vector<double> rss(n_disch, 0.0);
        parallel_for(std::ptrdiff_t(n_disch), [&](std::ptrdiff_t i) {
            const DischargeWork& wk = work[i];
            Eigen::VectorXd lc = wk.columns * g;
            std::vector<double> log_chi(lc.data(), lc.data() + M);
            const auto core = forward_core(*wk.cond, log_chi, M, &wk.columns);
            const int m = int(wk.abs_psi.size());
            Eigen::MatrixXd J(m, P);
            double acc = 0.0;
            for (int p = 0; p < m; ++p) {
                const double x = std::clamp(wk.abs_psi[p], 0.0, 1.0) * double(M - 1);
                const int k = std::min(int(x), M - 2);
                const double t = x - double(k);
                const double e = wk.y[p] - ((1.0 - t) * core.temp[k] + t * core.temp[k + 1]);
                acc += wk.w[p] * e * e;
                J.row(p) = (1.0 - t) * core.dtemp.row(k) + t * core.dtemp.row(k + 1);
            }
            rss[i] = acc;
            Ai[i] = J.transpose() * wk.w.asDiagonal() * J;
        });
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(P, P);
        double rss_total = 0.0;
        for (std::size_t i = 0; i < n_disch; ++i) {
            A += Ai[i];
            rss_total += rss[i];
        }
        Eigen::MatrixXd Mn = A + Lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(Mn);
        if (llt.info() != Eigen::Success) {
            Mn.diagonal().array() += 1e-10 * (A.trace() / double(P) + 1.0);
            llt.compute(Mn);
            if (llt.info() != Eigen::Success)
                throw RankDeficiencyError("chi fit linearization is rank deficient");
        }
        FitResult lin;
        lin.G = llt.solve(Eigen::MatrixXd::Identity(P, P));
        lin.rss_weighted = rss_total;
        lin.tr_cg = (A.array() * lin.G.array()).sum();
        lin.tr_kg = lin.tr_cg;
        result.risk = risk_report(lin, A, n_measured);
        result.model.tr_cg = lin.tr_cg;
        result.model.tr_kg = lin.tr_kg;
        result.model.risk = result.risk;
    }
    return result;
}

} // namespace profilefit
