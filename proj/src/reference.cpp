#include "profilefit/reference.hpp"
#include "profilefit/errors.hpp"

#include <Eigen/Dense>

namespace profilefit {

namespace {

const std::vector<double> kPsi = {-1.0, -0.9, -0.8, -0.7, -0.6, -0.5, -0.4, -0.3, -0.2, -0.1, 0.0,
                                  0.1,  0.2,  0.3,  0.4,  0.5,  0.6,  0.7,  0.8,  0.9,  1.0};

const std::vector<double> kShape = {0.2376, 0.4267, 0.7972, 1.1884, 1.4813, 1.7071, 1.8869,
                                    1.9517, 1.9528, 1.9785, 2.0271, 2.0257, 1.9588, 1.8611,
                                    1.7285, 1.5236, 1.2578, 0.9711, 0.6821, 0.4173, 0.2243};

const std::vector<double> kCurrent = {0.5057, 0.6679, 0.7728, 0.8231, 0.8236, 0.7827, 0.7131,
                                      0.6316, 0.5561, 0.5029, 0.4838, 0.5029, 0.5561, 0.6316,
                                      0.7131, 0.7827, 0.8236, 0.8231, 0.7728, 0.6679, 0.5057};

const std::vector<double> kField = {0.0776, 0.0900, 0.1320, 0.2037, 0.3046, 0.4317, 0.5771,
                                    0.7261, 0.8577, 0.9491, 0.9820, 0.9491, 0.8577, 0.7261,
                                    0.5771, 0.4317, 0.3046, 0.2037, 0.1320, 0.0900, 0.0776};

const std::vector<double> kDensity = {-0.3013, -0.2332, -0.2710, -0.3479, -0.3746, -0.3449,
                                      -0.3294, -0.3658, -0.4384, -0.5021, -0.5261, -0.5021,
                                      -0.4384, -0.3658, -0.3294, -0.3449, -0.3746, -0.3479,
                                      -0.2710, -0.2332, -0.3013};

const std::vector<double> kQgeo = {-0.3879, -0.3755, -0.3370, -0.2902, -0.2484, -0.2161, -0.1891,
                                   -0.1631, -0.1397, -0.1236, -0.1179, -0.1236, -0.1397, -0.1631,
                                   -0.1891, -0.2161, -0.2484, -0.2902, -0.3370, -0.3755, -0.3879};

// Reduced-model shape and q95 exponent, with constant Ip/Bt/nbar coefficients.
const std::vector<double> kShapeReduced = {0.2326, 0.4279, 0.8015, 1.1914, 1.4827, 1.7092, 1.8890,
                                           1.9514, 1.9505, 1.9750, 2.0194, 2.0154, 1.9511, 1.8579,
                                           1.7298, 1.5275, 1.2613, 0.9729, 0.6841, 0.4194, 0.2208};

const std::vector<double> kQ95Reduced = {-0.3729, -0.3364, -0.2822, -0.2298, -0.1951, -0.1836,
                                         -0.1885, -0.1995, -0.2105, -0.2186, -0.2215, -0.2186,
                                         -0.2105, -0.1995, -0.1885, -0.1836, -0.1951, -0.2298,
                                         -0.2822, -0.3364, -0.3729};

constexpr double kConstIp = 0.6868;
constexpr double kConstBt = 0.4900;
constexpr double kConstNbar = -0.3652;

// Interpolating basis: 17 uniform interior knots give exactly 21 basis
// functions, one per tabulated radius.
SplineBasis interpolating_basis() {
    return SplineBasis(SplineBasis::make_knots(17, 1.0), 4);
}

Eigen::VectorXd interpolate_column(const SplineBasis& basis, const std::vector<double>& values) {
    const int K = basis.size();
    if (int(kPsi.size()) != K)
        throw NumericalError("reference basis dimension does not match the table");
    Eigen::MatrixXd B(K, K);
    for (int i = 0; i < K; ++i)
        B.row(i) = basis.eval_dense(kPsi[i]).transpose();
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(values.data(), K);
    Eigen::VectorXd coef = lu.solve(rhs);
    if ((B * coef - rhs).cwiseAbs().maxCoeff() > 1e-8)
        throw NumericalError("reference table interpolation failed");
    return coef;
}

FittedTerm spline_term(const SplineBasis& basis, const std::string& covariate,
                       const std::vector<double>& values) {
    FittedTerm t;
    t.covariate = covariate;
    t.constraint = Constraint::free_term;
    t.coefficients = interpolate_column(basis, values);
    return t;
}

FittedTerm constant_term(const std::string& covariate, double value) {
    FittedTerm t;
    t.covariate = covariate;
    t.constraint = Constraint::constant;
    t.coefficients = Eigen::VectorXd::Constant(1, value);
    return t;
}

} // namespace

const std::vector<double>& jet_reference_psi() { return kPsi; }

const std::map<std::string, std::vector<double>>& jet_reference_tables() {
    static const std::map<std::string, std::vector<double>> tables = {
        {"intercept", kShape}, {"Ip", kCurrent}, {"Bt", kField},
        {"nbar", kDensity},    {"qgeo", kQgeo}};
    return tables;
}

std::map<std::string, double> jet_reference_normalization() {
    return {{"Ip", 2.552}, {"Bt", 2.710}, {"nbar", 2.171}, {"qgeo", 4.150}};
}

FittedModel jet_reference_model() {
    const SplineBasis basis = interpolating_basis();
    FittedModel m;
    m.kind = "temperature";
    m.scale = FitScale::log_temperature;
    m.basis = basis;
    m.terms.push_back(spline_term(basis, kIntercept, kShape));
    m.terms.push_back(spline_term(basis, "Ip", kCurrent));
    m.terms.push_back(spline_term(basis, "Bt", kField));
    m.terms.push_back(spline_term(basis, "nbar", kDensity));
    m.terms.push_back(spline_term(basis, "qgeo", kQgeo));
    m.normalization = jet_reference_normalization();
    return m;
}

FittedModel jet_reference_reduced_model() {
    const SplineBasis basis = interpolating_basis();
    FittedModel m;
    m.kind = "temperature";
    m.scale = FitScale::log_temperature;
    m.basis = basis;
    m.terms.push_back(spline_term(basis, kIntercept, kShapeReduced));
    m.terms.push_back(spline_term(basis, "q95", kQ95Reduced));
    m.terms.push_back(constant_term("Ip", kConstIp));
    m.terms.push_back(constant_term("Bt", kConstBt));
    m.terms.push_back(constant_term("nbar", kConstNbar));
    m.normalization = {{"q95", 4.537}, {"Ip", 2.552}, {"Bt", 2.710}, {"nbar", 2.171}};
    return m;
}

std::map<std::string, CovariateRange> jet_reference_covariate_ranges() {
    return {
        {"Ip", {0.97, 5.25, true}},     {"Bt", {1.30, 3.22, true}},
        {"nbar", {1.32, 3.90, true}},   {"q95", {2.88, 12.6, true}},
        {"kappa", {1.30, 1.75, true}},  {"a", {1.05, 1.19, true}},
        {"R", {2.83, 3.01, true}},      {"Vloop", {-1.12, 0.914, false}},
        {"Zeff", {1.07, 3.35, false}},  {"li", {0.8, 1.6, false}},
        {"time", {8.0, 16.0, false}},
    };
}

} // namespace profilefit
