#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace bel {

inline constexpr const char* kVersion = "0.1.0";

/// Default generation horizon M for infinite coefficient families.
inline constexpr std::size_t kDefaultHorizon = std::size_t{1} << 14;

/// Invalid user-supplied configuration (parameter ranges, shapes, moments).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation produced a non-finite value or violated a numeric precondition.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A point estimate with its standard error. Exact values carry se == 0.
struct Estimate {
    double value = 0.0;
    double se = 0.0;

    [[nodiscard]] bool exact() const noexcept { return se == 0.0; }
};

/// Zero-declaration policy shared by derivative and coefficient estimates.
[[nodiscard]] inline double zero_tolerance(double se) noexcept {
    return std::max(3.0 * se, 1e-8);
}

[[nodiscard]] inline bool significantly_nonzero(const Estimate& e) noexcept {
    return std::abs(e.value) > zero_tolerance(e.se);
}

/// How an expected value or coefficient was obtained.
enum class Provenance { closed_form, monte_carlo };

[[nodiscard]] inline const char* to_string(Provenance p) noexcept {
    return p == Provenance::closed_form ? "closed-form" : "mc";
}

}  // namespace bel
