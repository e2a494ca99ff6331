#ifndef PROFILEFIT_DATASET_HPP
#define PROFILEFIT_DATASET_HPP

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace profilefit {

/// One measured temperature profile with its engineering covariates.
/// psi is the normalized flux radius in [-1, 1] (negative = inboard),
/// temp/sigma are in eV.  Points appended by inboard reflection carry
/// augmented = true and never count toward the measured-point total used
/// in risk denominators.
struct ProfileRecord {
    std::string id;
    std::vector<double> psi;
    std::vector<double> temp;
    std::vector<double> sigma;
    std::map<std::string, double> covariates;
    std::vector<char> augmented; // per-point flag, parallel to psi
    std::string provenance;      // notes accumulated by the cleaning steps

    std::size_t size() const { return psi.size(); }
    std::size_t measured_count() const;

    /// Throws ValidationError naming this record and the offending field.
    void validate() const;
};

struct ProfileSet {
    std::vector<ProfileRecord> records;
    // covariate name -> reference value: geometric mean for log-transformed
    // covariates, arithmetic mean for the linear ones.  Includes the derived
    // "qgeo" reference when q95/Ip/Bt are all present.
    std::map<std::string, double> normalization;

    std::size_t measured_points() const;
    std::size_t total_points() const;
};

/// Which transform a covariate enters the model with.  Multiplicative
/// cross-terms are spelled "A*B" over log covariates and are themselves log
/// covariates; their reference is the product of the factor references.
bool is_log_covariate(const std::string& name);
bool is_linear_covariate(const std::string& name);
bool is_known_covariate(const std::string& name);

/// Raw value of a covariate, computing derived ones (qgeo = q95*Ip/Bt unless
/// given directly, products of log covariates).  Throws LookupError when an
/// input is missing.
double raw_covariate(const std::map<std::string, double>& covariates, const std::string& name);
double raw_covariate(const ProfileRecord& record, const std::string& name);

/// Reference value for a covariate, deriving product references from their
/// factors.  Throws LookupError when absent.
double normalization_reference(const std::string& name,
                               const std::map<std::string, double>& normalization);

/// Normalized regression value: ln(raw/reference) for log covariates,
/// raw - reference for linear ones.  Throws LookupError / DomainError.
double covariate_value(const std::map<std::string, double>& covariates, const std::string& name,
                       const std::map<std::string, double>& normalization);
double covariate_value(const ProfileRecord& record, const std::string& name,
                       const std::map<std::string, double>& normalization);

/// Reference values (geometric / arithmetic means) over a record list.
std::map<std::string, double> compute_normalization(const std::vector<ProfileRecord>& records);

/// Delete edge points whose temperature rises monotonically toward the wall,
/// scanning outward among points with |psi| > threshold on each side.
ProfileRecord clean_edge(const ProfileRecord& record, double threshold = 0.9);

/// Append an augmented mirror point at -psi for every measured point with
/// psi > threshold.  Existing augmented points are rebuilt, which makes the
/// operation idempotent for a fixed threshold.
ProfileRecord reflect_inboard(const ProfileRecord& record, double threshold = 0.87);

/// NDJSON I/O, one record per line.  load throws ParseError with the line
/// number on malformed input, ValidationError on invariant violations and
/// when the file holds no records.
ProfileSet load_profiles(const std::string& path);
void write_profiles(const ProfileSet& set, const std::string& path);

std::string record_to_json_line(const ProfileRecord& record);
ProfileRecord record_from_json_line(const std::string& line);

} // namespace profilefit

#endif
