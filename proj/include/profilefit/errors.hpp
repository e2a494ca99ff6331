#ifndef PROFILEFIT_ERRORS_HPP
#define PROFILEFIT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace profilefit {

// Error taxonomy mirrors the CLI exit codes: io -> 1, validation -> 2,
// numerical -> 3.  All library throws derive from one of the three bases.

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input text; carries the offending line number in the message.
class ParseError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Argument outside its mathematical domain (psi out of range, log of a
// nonpositive value, ...).
class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// A named covariate or field is absent.
class LookupError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Normal-equations matrix not positive definite even after the one-shot
// diagonal jitter; message names the offending term block.
class RankDeficiencyError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Effective degrees of freedom exhausted: N - tr[K G] <= 0.
class SaturationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Rice denominator N - 2 tr[K G] <= 0: the candidate model is too rich for
// the data and must be treated as inadmissible by selection.
class OverParameterizationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NonConvergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace profilefit

#endif
