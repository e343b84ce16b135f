#ifndef NETLENS_ERRORS_HPP
#define NETLENS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace netlens {

// Violated precondition, shape mismatch, malformed spec, bad argument.
// Maps to process exit code 1.
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents (bad magic, unsupported dtype, truncated payload,
// unparseable JSON/CSV). Exit code 1.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem-level failure (missing file, unwritable destination). Exit code 1.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN propagation, non-convergence of an iterative method. Exit code 2.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Spectrum whose 90th-percentile eigenvalue magnitude is numerically zero.
class DegenerateSpectrumError : public ContractError {
public:
    explicit DegenerateSpectrumError(const std::string& msg) : ContractError(msg) {}
};

// Pareto MLE with zero log-spread (all samples equal).
class DivergentAlphaError : public ContractError {
public:
    explicit DivergentAlphaError(const std::string& msg) : ContractError(msg) {}
};

// Score that cannot be computed for a particular input (e.g. all-zero
// heatmap); aggregators catch this and exclude the sample.
class UndefinedScoreError : public ContractError {
public:
    explicit UndefinedScoreError(const std::string& msg) : ContractError(msg) {}
};

} // namespace netlens

#endif
