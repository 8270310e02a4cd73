#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace psw {

/// Malformed input: bad table, unknown column, contract violation by the caller.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An estimator could not produce a value for this dataset
/// (empty subgroup arm, zero weight sum, singular system, ...).
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct IterationRecord {
    int iteration = 0;
    double deviance = 0.0;
    double max_score = 0.0;
    int halvings = 0;
};

/// IRLS did not reach the score tolerance (typically separation).
class ConvergenceError : public EstimationError {
public:
    ConvergenceError(const std::string& what, std::vector<IterationRecord> trace)
        : EstimationError(what), trace_(std::move(trace)) {}

    const std::vector<IterationRecord>& trace() const noexcept { return trace_; }

private:
    std::vector<IterationRecord> trace_;
};

} // namespace psw
