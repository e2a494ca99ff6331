#include "profilefit/diffusivity.hpp"
#include "profilefit/fitted_model.hpp"
#include "profilefit/reference.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "profilefit_cli_tests";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

CliResult run_cli(const std::string& args) {
    const fs::path out = work_dir() / "stdout.txt";
    const fs::path err = work_dir() / "stderr.txt";
    const std::string cmd = std::string(PROFILEFIT_CLI_PATH) + " " + args + " > " +
                            out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    res.out = slurp_file(out);
    res.err = slurp_file(err);
    return res;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t'))
        fields.push_back(f);
    return fields;
}

std::string find_row(const std::string& table, const std::string& key) {
    std::stringstream ss(table);
    std::string line;
    while (std::getline(ss, line))
        if (line.rfind(key + "\t", 0) == 0)
            return line;
    return {};
}

} // namespace

TEST_CASE("tabulate reproduces the bundled reference tables") {
    const auto res = run_cli("tabulate --model builtin:jet-ohmic --step 0.1");
    REQUIRE(res.exit_code == 0);
    CHECK(find_row(res.out, "psi") == "psi\tf0\tf_Ip\tf_Bt\tf_nbar\tf_qgeo");
    CHECK(find_row(res.out, "0.0") == "0.0\t2.0271\t0.4838\t0.9820\t-0.5261\t-0.1179");
    CHECK(find_row(res.out, "-1.0") == "-1.0\t0.2376\t0.5057\t0.0776\t-0.3013\t-0.3879");
    CHECK(find_row(res.out, "0.5") == "0.5\t1.5236\t0.7827\t0.4317\t-0.3449\t-0.2161");

    // constant columns repeat identically in the reduced variant
    const auto reduced = run_cli("tabulate --model builtin:jet-ohmic-reduced --step 0.1");
    REQUIRE(reduced.exit_code == 0);
    std::stringstream ss(reduced.out);
    std::string line;
    std::getline(ss, line); // header
    while (std::getline(ss, line)) {
        const auto fields = split_line(line); // psi f0 f_q95 f_Ip f_Bt f_nbar
        REQUIRE(fields.size() == 6);
        CHECK(fields[3] == "0.6868");
        CHECK(fields[4] == "0.4900");
        CHECK(fields[5] == "-0.3652");
    }

    CHECK(run_cli("tabulate --model builtin:jet-ohmic --step 0.13").exit_code == 2);
}

TEST_CASE("predict at the reference point") {
    const auto res = run_cli(
        "predict --model builtin:jet-ohmic --psi 0,0.5 "
        "--covariates '{\"Ip\":2.552,\"Bt\":2.710,\"nbar\":2.171,\"qgeo\":4.150}'");
    REQUIRE(res.exit_code == 0);
    const auto row = split_line(find_row(res.out, "0"));
    REQUIRE(row.size() == 2);
    CHECK(std::stod(row[1]) == doctest::Approx(std::exp(2.0271)).epsilon(1e-6));
}

TEST_CASE("simulate is byte-reproducible per seed") {
    const fs::path a = work_dir() / "sim_a.ndjson";
    const fs::path b = work_dir() / "sim_b.ndjson";
    REQUIRE(run_cli("simulate --model builtin:jet-ohmic --n-profiles 4 --seed 9 --out " +
                    a.string())
                .exit_code == 0);
    REQUIRE(run_cli("simulate --model builtin:jet-ohmic --n-profiles 4 --seed 9 --out " +
                    b.string())
                .exit_code == 0);
    CHECK(slurp_file(a) == slurp_file(b));

    const fs::path c = work_dir() / "sim_c.ndjson";
    REQUIRE(run_cli("simulate --model builtin:jet-ohmic --n-profiles 4 --seed 10 --out " +
                    c.string())
                .exit_code == 0);
    CHECK(slurp_file(a) != slurp_file(c));
}

TEST_CASE("fit pipeline end to end") {
    const fs::path sim = work_dir() / "fit_input.ndjson";
    REQUIRE(run_cli("simulate --model builtin:jet-ohmic --n-profiles 12 --points 40 "
                    "--noise-rel 0.08 --seed 3 --out " +
                    sim.string())
                .exit_code == 0);

    const fs::path model_path = work_dir() / "fit_model.json";
    const auto res =
        run_cli("fit --input " + sim.string() + " --out " + model_path.string());
    REQUIRE(res.exit_code == 0);
    for (const char* key : {"mae_ev", "mae_pct", "rmse_log", "rice", "dof_effective"})
        CHECK(!find_row(res.out, key).empty());

    const auto model = profilefit::FittedModel::load(model_path.string());
    CHECK(model.terms.size() == 5);
    REQUIRE(model.risk.has_value());
    CHECK(model.risk->rice > 0.0);

    // deterministic: same command, same bytes
    const fs::path model2 = work_dir() / "fit_model2.json";
    const auto res2 =
        run_cli("fit --input " + sim.string() + " --out " + model2.string());
    REQUIRE(res2.exit_code == 0);
    CHECK(res.out == res2.out);
    CHECK(slurp_file(model_path) == slurp_file(model2));
}

TEST_CASE("cli error taxonomy") {
    // missing input file -> exit 1, path in the message
    const auto io = run_cli("fit --input /nonexistent/profiles.ndjson");
    CHECK(io.exit_code == 1);
    CHECK(io.err.find("/nonexistent/profiles.ndjson") != std::string::npos);

    // malformed NDJSON -> exit 2
    const fs::path bad = work_dir() / "bad.ndjson";
    std::ofstream(bad.string()) << "{broken\n";
    CHECK(run_cli("fit --input " + bad.string()).exit_code == 2);

    // over-rich model on a tiny set -> exit 3
    const fs::path tiny = work_dir() / "tiny.ndjson";
    REQUIRE(run_cli("simulate --model builtin:jet-ohmic --n-profiles 6 --points 4 "
                    "--seed 4 --out " +
                    tiny.string())
                .exit_code == 0);
    const auto rich = run_cli("fit --input " + tiny.string());
    CHECK(rich.exit_code == 3);
}

TEST_CASE("chi-fit command") {
    // synthetic discharge set from a known constant diffusivity
    using namespace profilefit;
    FittedModel chi;
    chi.kind = "diffusivity";
    chi.basis = SplineBasis(SplineBasis::make_knots(8, 1.0, 0.0, 1.0), 4, 0.0, 1.0);
    FittedTerm t;
    t.covariate = kIntercept;
    t.constraint = Constraint::free_term;
    t.coefficients = Eigen::VectorXd::Constant(chi.basis.size(), std::log(1.4));
    chi.terms = {t};

    std::vector<DischargeConditions> conditions;
    ProfileSet set;
    for (int i = 0; i < 2; ++i) {
        DischargeConditions c;
        c.id = "cli-d" + std::to_string(i);
        c.psi_grid = {0.0, 0.5, 1.0};
        c.density = {2.5, 2.2, 1.8};
        c.source = {1000.0 + 200.0 * i, 700.0, 150.0};
        c.edge_temp = 110.0;
        c.minor_radius = 1.05;
        conditions.push_back(c);

        const auto sol = forward_temperature(chi, c, 257);
        ProfileRecord rec;
        rec.id = c.id;
        for (int j = 0; j < 40; ++j) {
            const double psi = 0.02 + 0.95 * double(j) / 39.0;
            const double pos = psi * 256.0;
            const int k = std::min(int(pos), 255);
            const double frac = pos - double(k);
            rec.psi.push_back((j % 2 ? -1.0 : 1.0) * psi);
            rec.temp.push_back((1.0 - frac) * sol.temperature[k] +
                               frac * sol.temperature[k + 1]);
            rec.sigma.push_back(1.0);
        }
        rec.augmented.assign(rec.psi.size(), 0);
        set.records.push_back(rec);
    }
    set.normalization = compute_normalization(set.records);

    const fs::path profiles = work_dir() / "chi_profiles.ndjson";
    const fs::path conds = work_dir() / "chi_conditions.ndjson";
    write_profiles(set, profiles.string());
    write_conditions(conditions, conds.string());

    const fs::path out = work_dir() / "chi_model.json";
    const auto res = run_cli("chi-fit --input " + profiles.string() + " --conditions " +
                             conds.string() + " --lambda 1e-4 --no-clean --no-reflect --out " +
                             out.string());
    REQUIRE(res.exit_code == 0);
    CHECK(!find_row(res.out, "objective").empty());
    CHECK(find_row(res.out, "converged") == "converged\tyes");

    const auto fitted = FittedModel::load(out.string());
    CHECK(fitted.kind == "diffusivity");
    CHECK(fitted.term_value(0, 0.5) == doctest::Approx(std::log(1.4)).epsilon(1e-2));
}

TEST_CASE("noiseless fit and tabulate reproduce the reference tables") {
    using profilefit::jet_reference_psi;
    using profilefit::jet_reference_tables;

    const fs::path sim = work_dir() / "noiseless.ndjson";
    REQUIRE(run_cli("simulate --model builtin:jet-ohmic --n-profiles 20 --points 45 "
                    "--noise-rel 0 --psi-min -1 --psi-max 1 --seed 12 --out " +
                    sim.string())
                .exit_code == 0);
    const fs::path model_path = work_dir() / "noiseless_model.json";
    // fit in the reference gauge with a matching knot layout; the cleaning
    // and reflection rules are for real diagnostics, not exact surface data
    const auto fit = run_cli(
        "fit --input " + sim.string() + " --knots 17 --thinning 1 --no-clean --no-reflect "
        "--normalization "
        "'{\"Ip\":2.552,\"Bt\":2.710,\"nbar\":2.171,\"qgeo\":4.150}' --out " +
        model_path.string());
    REQUIRE(fit.exit_code == 0);

    const auto tab = run_cli("tabulate --model " + model_path.string() + " --step 0.1");
    REQUIRE(tab.exit_code == 0);
    const auto& psi = jet_reference_psi();
    const auto& tables = jet_reference_tables();
    const std::vector<std::string> order = {"intercept", "Ip", "Bt", "nbar", "qgeo"};
    std::stringstream ss(tab.out);
    std::string line;
    std::getline(ss, line); // header
    std::size_t row = 0;
    while (std::getline(ss, line)) {
        const auto fields = split_line(line);
        REQUIRE(fields.size() == 6);
        REQUIRE(row < psi.size());
        CHECK(std::stod(fields[0]) == doctest::Approx(psi[row]).epsilon(1e-12));
        for (std::size_t t = 0; t < order.size(); ++t)
            CHECK(std::abs(std::stod(fields[t + 1]) - tables.at(order[t])[row]) < 1e-3);
        ++row;
    }
    CHECK(row == psi.size());
}

TEST_CASE("select command on a small synthetic set") {
    const fs::path sim = work_dir() / "select_input.ndjson";
    REQUIRE(run_cli("simulate --model builtin:jet-ohmic --n-profiles 14 --points 35 "
                    "--noise-rel 0.10 --seed 6 --out " +
                    sim.string())
                .exit_code == 0);
    const fs::path trace_path = work_dir() / "trace.json";
    const auto res = run_cli("select --input " + sim.string() +
                             " --candidates Ip,Bt,nbar --max-stages 2 --knots 12 --out " +
                             trace_path.string());
    REQUIRE(res.exit_code == 0);
    CHECK(res.out.find("1 var") != std::string::npos);
    CHECK(res.out.find("stop:") != std::string::npos);
    CHECK(slurp_file(trace_path).find("\"chosen\"") != std::string::npos);
}
