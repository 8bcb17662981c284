#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace sae {

inline constexpr const char* kEngineVersion = "0.3.1";

using AreaId = std::string;
using AdminLevel = int;

// Input that violates a data contract. `row` is the 1-based data row (0 when
// the problem is not tied to a row).
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string message, std::size_t row = 0, std::string field = {})
        : std::runtime_error(std::move(message)), row_(row), field_(std::move(field)) {}

    std::size_t row() const noexcept { return row_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t row_;
    std::string field_;
};

// Numerical failure inside a fit (non-convergence, singular system).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Request for something that does not exist (unknown id, level not present).
class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double expit(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// expit clamped to the open interval (0, 1).
inline double expit_open(double x) {
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
    const double p = expit(x);
    return p < lo ? lo : (p > hi ? hi : p);
}

inline constexpr double kNormalQuantile975 = 1.959964;
inline constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace sae
