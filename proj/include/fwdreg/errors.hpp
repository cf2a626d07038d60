#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace fwdreg {

// Invalid input: malformed files, inconsistent shapes, options out of range.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A structural hypothesis of the design (stability, rank conditions) does not hold.
class AssumptionError : public std::runtime_error {
public:
    AssumptionError(std::string assumption, const std::string& what,
                    double condition = std::numeric_limits<double>::quiet_NaN())
        : std::runtime_error(what), assumption_(std::move(assumption)), condition_(condition) {}

    const std::string& assumption() const noexcept { return assumption_; }
    // 2-norm condition number of the offending matrix, NaN when not applicable.
    double condition() const noexcept { return condition_; }

private:
    std::string assumption_;
    double condition_;
};

// No member of the Lyapunov weight family passed the dissipativity checks.
class CertificationError : public std::runtime_error {
public:
    CertificationError(const std::string& what, double best_margin)
        : std::runtime_error(what), best_margin_(best_margin) {}

    double best_margin() const noexcept { return best_margin_; }

private:
    double best_margin_;
};

// NaN/Inf or a singular coefficient encountered while computing.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CoefficientError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace fwdreg
