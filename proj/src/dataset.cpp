#include "profilefit/dataset.hpp"
#include "profilefit/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace profilefit {

using nlohmann::json;

namespace {

const std::set<std::string>& log_covariates() {
    static const std::set<std::string> names = {"Ip", "Bt", "nbar", "q95",
                                                "kappa", "a", "R", "qgeo"};
    return names;
}

const std::set<std::string>& linear_covariates() {
    static const std::set<std::string> names = {"Zeff", "Vloop", "li", "time"};
    return names;
}

} // namespace

namespace {

// Product covariates ("Ip*Bt") provide multiplicative cross-terms; they are
// defined over log-transformed factors only, so their log is the sum of the
// factor logs and their reference is the product of the factor references.
std::vector<std::string> product_factors(const std::string& name) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(name);
    while (std::getline(ss, item, '*'))
        out.push_back(item);
    return out;
}

} // namespace

bool is_log_covariate(const std::string& name) {
    if (log_covariates().count(name) > 0)
        return true;
    if (name.find('*') == std::string::npos)
        return false;
    for (const auto& f : product_factors(name))
        if (log_covariates().count(f) == 0)
            return false;
    return true;
}

bool is_linear_covariate(const std::string& name) { return linear_covariates().count(name) > 0; }

bool is_known_covariate(const std::string& name) {
    return is_log_covariate(name) || is_linear_covariate(name);
}

std::size_t ProfileRecord::measured_count() const {
    std::size_t n = 0;
    for (char a : augmented)
        if (!a) ++n;
    return n;
}

void ProfileRecord::validate() const {
    const std::string who = "record '" + id + "': ";
    if (temp.size() != psi.size() || sigma.size() != psi.size())
        throw ValidationError(who + "psi/temp/sigma lengths differ");
    if (!augmented.empty() && augmented.size() != psi.size())
        throw ValidationError(who + "augmented flag length differs from psi");
    if (psi.size() < 4)
        throw ValidationError(who + "fewer than 4 points");
    for (std::size_t j = 0; j < psi.size(); ++j) {
        if (!(psi[j] >= -1.0 && psi[j] <= 1.0))
            throw ValidationError(who + "psi out of [-1, 1] at point " + std::to_string(j));
        if (!(temp[j] > 0.0))
            throw ValidationError(who + "temp not strictly positive at point " + std::to_string(j));
        if (!(sigma[j] > 0.0))
            throw ValidationError(who + "sigma not strictly positive at point " + std::to_string(j));
    }
    for (const auto& [name, value] : covariates) {
        if (is_log_covariate(name) && !(value > 0.0))
            throw ValidationError(who + "covariate '" + name + "' must be positive");
    }
}

std::size_t ProfileSet::measured_points() const {
    std::size_t n = 0;
    for (const auto& r : records)
        n += r.measured_count();
    return n;
}

std::size_t ProfileSet::total_points() const {
    std::size_t n = 0;
    for (const auto& r : records)
        n += r.size();
    return n;
}

double raw_covariate(const std::map<std::string, double>& covariates, const std::string& name) {
    auto it = covariates.find(name);
    if (it != covariates.end())
        return it->second;
    if (name == "qgeo") {
        const double q95 = raw_covariate(covariates, "q95");
        const double ip = raw_covariate(covariates, "Ip");
        const double bt = raw_covariate(covariates, "Bt");
        return q95 * ip / bt;
    }
    if (name.find('*') != std::string::npos) {
        double prod = 1.0;
        for (const auto& f : product_factors(name))
            prod *= raw_covariate(covariates, f);
        return prod;
    }
    throw LookupError("missing covariate '" + name + "'");
}

double raw_covariate(const ProfileRecord& record, const std::string& name) {
    try {
        return raw_covariate(record.covariates, name);
    } catch (const LookupError& e) {
        throw LookupError("record '" + record.id + "': " + e.what());
    }
}

double normalization_reference(const std::string& name,
                               const std::map<std::string, double>& normalization) {
    auto ref = normalization.find(name);
    if (ref != normalization.end())
        return ref->second;
    if (name.find('*') != std::string::npos && is_log_covariate(name)) {
        double prod = 1.0;
        for (const auto& f : product_factors(name))
            prod *= normalization_reference(f, normalization);
        return prod;
    }
    throw LookupError("no normalization reference for covariate '" + name + "'");
}

double covariate_value(const std::map<std::string, double>& covariates, const std::string& name,
                       const std::map<std::string, double>& normalization) {
    const double raw = raw_covariate(covariates, name);
    const double ref_value = normalization_reference(name, normalization);
    if (is_log_covariate(name)) {
        if (!(raw > 0.0))
            throw DomainError("covariate '" + name + "' = " + std::to_string(raw) +
                              " is nonpositive under log transform");
        return std::log(raw / ref_value);
    }
    if (is_linear_covariate(name))
        return raw - ref_value;
    throw LookupError("unknown covariate '" + name + "'");
}

double covariate_value(const ProfileRecord& record, const std::string& name,
                       const std::map<std::string, double>& normalization) {
    try {
        return covariate_value(record.covariates, name, normalization);
    } catch (const LookupError& e) {
        throw LookupError("record '" + record.id + "': " + e.what());
    } catch (const DomainError& e) {
        throw DomainError("record '" + record.id + "': " + e.what());
    }
}

std::map<std::string, double> compute_normalization(const std::vector<ProfileRecord>& records) {
    std::map<std::string, double> out;
    std::set<std::string> names;
    for (const auto& r : records)
        for (const auto& [name, _] : r.covariates)
            if (is_known_covariate(name))
                names.insert(name);
    // qgeo is derived; include it whenever its inputs are available.
    bool qgeo_ok = !records.empty();
    for (const auto& r : records)
        qgeo_ok = qgeo_ok && r.covariates.count("q95") && r.covariates.count("Ip") &&
                  r.covariates.count("Bt");
    if (qgeo_ok)
        names.insert("qgeo");

    for (const auto& name : names) {
        double acc = 0.0;
        std::size_t n = 0;
        for (const auto& r : records) {
            if (name != "qgeo" && !r.covariates.count(name))
                continue;
            const double raw = raw_covariate(r, name);
            if (is_log_covariate(name)) {
                if (!(raw > 0.0))
                    throw ValidationError("record '" + r.id + "': covariate '" + name +
                                          "' must be positive for the geometric mean");
                acc += std::log(raw);
            } else {
                acc += raw;
            }
            ++n;
        }
        if (n == 0)
            continue;
        out[name] = is_log_covariate(name) ? std::exp(acc / double(n)) : acc / double(n);
    }
    return out;
}

namespace {

// Indices of points on one side of the edge region, ordered from the plasma
// center toward the wall.
std::vector<std::size_t> edge_indices(const ProfileRecord& r, double threshold, bool outboard) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < r.size(); ++j) {
        const double p = r.psi[j];
        if (outboard ? (p > threshold) : (p < -threshold))
            idx.push_back(j);
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(r.psi[a]) < std::abs(r.psi[b]);
    });
    return idx;
}

// Walks inward from the wall and marks the monotone temperature rise.  The
// comparator for the innermost edge point is the nearest remaining point
// further inside, whichever region it lies in; with no such point the whole
// rise is dropped.
void mark_edge_rise(const ProfileRecord& r, double threshold, bool outboard,
                    std::vector<char>& remove) {
    const auto idx = edge_indices(r, threshold, outboard);
    if (idx.empty())
        return;

    // Nearest point inward of the edge region on this side, if any.
    bool have_inner = false;
    double inner_temp = 0.0, best_key = -2.0;
    for (std::size_t j = 0; j < r.size(); ++j) {
        const double p = r.psi[j];
        if (outboard ? (p > threshold) : (p < -threshold))
            continue;
        const double key = outboard ? p : -p; // closest to this side's wall
        if (key > best_key) {
            best_key = key;
            inner_temp = r.temp[j];
            have_inner = true;
        }
    }

    for (std::size_t k = idx.size(); k-- > 0;) {
        const double here = r.temp[idx[k]];
        const double inner = k > 0 ? r.temp[idx[k - 1]] : (have_inner ? inner_temp : -1.0);
        if (k == 0 && !have_inner) {
            remove[idx[k]] = 1; // rise begins at the first available point
            continue;
        }
        if (here > inner)
            remove[idx[k]] = 1;
        else
            break;
    }
}

} // namespace

ProfileRecord clean_edge(const ProfileRecord& record, double threshold) {
    std::vector<char> remove(record.size(), 0);
    mark_edge_rise(record, threshold, true, remove);
    mark_edge_rise(record, threshold, false, remove);

    const std::size_t n_removed =
        std::count(remove.begin(), remove.end(), char(1));
    if (n_removed == 0)
        return record;

    ProfileRecord out;
    out.id = record.id;
    out.covariates = record.covariates;
    out.provenance = record.provenance;
    std::ostringstream note;
    note << "clean_edge removed " << n_removed << " point(s) at psi =";
    for (std::size_t j = 0; j < record.size(); ++j) {
        if (remove[j]) {
            note << ' ' << record.psi[j];
            continue;
        }
        out.psi.push_back(record.psi[j]);
        out.temp.push_back(record.temp[j]);
        out.sigma.push_back(record.sigma[j]);
        out.augmented.push_back(record.augmented.empty() ? 0 : record.augmented[j]);
    }
    if (!out.provenance.empty())
        out.provenance += "; ";
    out.provenance += note.str();
    return out;
}

ProfileRecord reflect_inboard(const ProfileRecord& record, double threshold) {
    ProfileRecord out;
    out.id = record.id;
    out.covariates = record.covariates;
    out.provenance = record.provenance;
    for (std::size_t j = 0; j < record.size(); ++j) {
        if (!record.augmented.empty() && record.augmented[j])
            continue; // rebuilt below; keeps the operation idempotent
        out.psi.push_back(record.psi[j]);
        out.temp.push_back(record.temp[j]);
        out.sigma.push_back(record.sigma[j]);
        out.augmented.push_back(0);
    }
    const std::size_t measured = out.size();
    std::size_t added = 0;
    for (std::size_t j = 0; j < measured; ++j) {
        if (out.psi[j] > threshold) {
            out.psi.push_back(-out.psi[j]);
            out.temp.push_back(out.temp[j]);
            out.sigma.push_back(out.sigma[j]);
            out.augmented.push_back(1);
            ++added;
        }
    }
    if (added > 0) {
        std::ostringstream note;
        note << "reflect_inboard added " << added << " augmented point(s) (threshold "
             << threshold << ")";
        if (!out.provenance.empty() && out.provenance.find("reflect_inboard") == std::string::npos)
            out.provenance += "; ";
        if (out.provenance.find("reflect_inboard") == std::string::npos)
            out.provenance += note.str();
    }
    return out;
}

std::string record_to_json_line(const ProfileRecord& record) {
    json j;
    j["id"] = record.id;
    j["psi"] = record.psi;
    j["temp_ev"] = record.temp;
    j["sigma_ev"] = record.sigma;
    j["covariates"] = record.covariates;
    if (std::count(record.augmented.begin(), record.augmented.end(), char(1)) > 0) {
        std::vector<bool> aug(record.augmented.begin(), record.augmented.end());
        j["augmented"] = aug;
    }
    if (!record.provenance.empty())
        j["provenance"] = record.provenance;
    return j.dump();
}

ProfileRecord record_from_json_line(const std::string& line) {
    const json j = json::parse(line);
    ProfileRecord r;
    r.id = j.at("id").get<std::string>();
    r.psi = j.at("psi").get<std::vector<double>>();
    r.temp = j.at("temp_ev").get<std::vector<double>>();
    r.sigma = j.at("sigma_ev").get<std::vector<double>>();
    if (j.contains("covariates"))
        r.covariates = j.at("covariates").get<std::map<std::string, double>>();
    if (j.contains("augmented")) {
        const auto aug = j.at("augmented").get<std::vector<bool>>();
        r.augmented.assign(aug.begin(), aug.end());
    } else {
        r.augmented.assign(r.psi.size(), 0);
    }
    if (j.contains("provenance"))
        r.provenance = j.at("provenance").get<std::string>();
    return r;
}

ProfileSet load_profiles(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open profiles file '" + path + "'");
    ProfileSet set;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        ProfileRecord r;
        try {
            r = record_from_json_line(line);
        } catch (const json::exception& e) {
            throw ParseError("parse error at line " + std::to_string(lineno) + " of '" + path +
                             "': " + e.what());
        }
        if (r.augmented.size() != r.psi.size())
            throw ParseError("parse error at line " + std::to_string(lineno) + " of '" + path +
                             "': augmented flags do not match point count");
        r.validate();
        set.records.push_back(std::move(r));
    }
    if (set.records.empty())
        throw ValidationError("profiles file '" + path + "' holds no records");
    set.normalization = compute_normalization(set.records);
    return set;
}

void write_profiles(const ProfileSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open '" + path + "' for writing");
    for (const auto& r : set.records)
        out << record_to_json_line(r) << '\n';
    if (!out)
        throw IoError("write to '" + path + "' failed");
}

} // namespace profilefit
