#pragma once

// Non-instantaneous functionals K(x_1, ..., x_{d+1}) applied over sliding
// windows of a series, their means, and the centered sums Q_N.

#include "bel/core.hpp"
#include "bel/linproc.hpp"
#include "bel/parallel.hpp"
#include "bel/polynomial.hpp"
#include "bel/rng.hpp"
#include "bel/window.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace bel {

struct ZeroCrossing {};
struct LagProduct {};
struct IdentityFilter {};
struct PolynomialFilter {
    Polynomial poly;
};
struct CustomFilter {
    std::function<double(std::span<const double>)> eval;
    std::string name = "custom";
};

/// Bounded filters need eight innovation moments; a filter dominated by a
/// polynomial of degree D needs max(8, 4D).
enum class Smoothness { bounded, polynomially_dominated };

class FilterSpec {
public:
    using Kind = std::variant<ZeroCrossing, LagProduct, IdentityFilter, PolynomialFilter, CustomFilter>;

    /// K(x1, x2) = 1 if x1 * x2 < 0, else 0. Ties count as no crossing.
    static FilterSpec zero_crossing() { return FilterSpec(ZeroCrossing{}, 1, Smoothness::bounded, 0, 2); }

    /// K = x_1 * x_{d+1}.
    static FilterSpec lag_product(std::size_t d) {
        return FilterSpec(LagProduct{}, d, Smoothness::polynomially_dominated, 2, 2);
    }

    /// K(x) = x (d = 0).
    static FilterSpec identity() { return FilterSpec(IdentityFilter{}, 0, Smoothness::polynomially_dominated, 1, 1); }

    static FilterSpec polynomial(Polynomial poly, std::optional<int> known_rank = std::nullopt) {
        const std::size_t d = poly.vars() - 1;
        const int deg = poly.degree();
        return FilterSpec(PolynomialFilter{std::move(poly)}, d, Smoothness::polynomially_dominated, deg, known_rank);
    }

    /// Smoothness class and dominating degree are asserted by the caller.
    static FilterSpec custom(std::size_t d, std::function<double(std::span<const double>)> eval, Smoothness smoothness,
                             int degree = 0, std::string name = "custom", std::optional<int> known_rank = std::nullopt) {
        if (!eval) throw ConfigError("custom filter: evaluator is empty");
        return FilterSpec(CustomFilter{std::move(eval), std::move(name)}, d, smoothness, degree, known_rank);
    }

    [[nodiscard]] const Kind& kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t d() const noexcept { return d_; }
    [[nodiscard]] std::size_t width() const noexcept { return d_ + 1; }
    [[nodiscard]] Smoothness smoothness() const noexcept { return smoothness_; }
    [[nodiscard]] int degree() const noexcept { return degree_; }
    [[nodiscard]] std::optional<int> known_rank() const noexcept { return known_rank_; }

    [[nodiscard]] int required_moment_order() const noexcept {
        return smoothness_ == Smoothness::bounded ? 8 : std::max(8, 4 * degree_);
    }

    [[nodiscard]] double operator()(std::span<const double> x) const {
        return std::visit(
            [&](const auto& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, ZeroCrossing>) return x[0] * x[1] < 0.0 ? 1.0 : 0.0;
                else if constexpr (std::is_same_v<T, LagProduct>) return x[0] * x[d_];
                else if constexpr (std::is_same_v<T, IdentityFilter>) return x[0];
                else if constexpr (std::is_same_v<T, PolynomialFilter>) return k.poly(x);
                else return k.eval(x);
            },
            kind_);
    }

    /// Polynomial form, when K is a polynomial.
    [[nodiscard]] std::optional<Polynomial> as_polynomial() const {
        if (std::holds_alternative<LagProduct>(kind_)) {
            MultiIndex i(d_ + 1, 0);
            i[0] += 1;
            i[d_] += 1;
            return Polynomial::monomial(d_ + 1, i);
        }
        if (std::holds_alternative<IdentityFilter>(kind_)) return Polynomial::monomial(1, {1});
        if (const auto* p = std::get_if<PolynomialFilter>(&kind_)) return p->poly;
        return std::nullopt;
    }

    [[nodiscard]] std::string describe() const {
        if (std::holds_alternative<ZeroCrossing>(kind_)) return "zero_crossing";
        if (std::holds_alternative<LagProduct>(kind_)) return "lag_product(d=" + std::to_string(d_) + ")";
        if (std::holds_alternative<IdentityFilter>(kind_)) return "identity";
        if (std::holds_alternative<PolynomialFilter>(kind_)) return "polynomial(d=" + std::to_string(d_) + ")";
        return std::get<CustomFilter>(kind_).name + "(d=" + std::to_string(d_) + ")";
    }

private:
    FilterSpec(Kind kind, std::size_t d, Smoothness s, int degree, std::optional<int> rank)
        : kind_(std::move(kind)), d_(d), smoothness_(s), degree_(degree), known_rank_(rank) {
        if (degree_ < 0) throw ConfigError("filter: dominating degree must be >= 0");
    }

    Kind kind_;
    std::size_t d_;
    Smoothness smoothness_;
    int degree_;
    std::optional<int> known_rank_;
};

/// Rejects innovations whose declared moment order is below what the filter needs.
inline void validate_moments(const FilterSpec& filter, const InnovationSpec& innovations) {
    const int need = filter.required_moment_order();
    if (innovations.required_moment_order() < need || !innovations.has_finite_moment(need))
        throw ConfigError("filter " + filter.describe() + " needs innovation moments up to order " +
                          std::to_string(need) + ", declared " + std::to_string(innovations.required_moment_order()));
}

/// out[t] = K(values[t], ..., values[t+d]) for t in [0, n-d).
[[nodiscard]] inline std::vector<double> apply(const FilterSpec& filter, std::span<const double> values) {
    const std::size_t w = filter.width();
    if (values.size() <= filter.d())
        throw ConfigError("apply: series of length " + std::to_string(values.size()) + " needs more than d=" +
                          std::to_string(filter.d()) + " values");
    std::vector<double> out(values.size() - filter.d());
    for (std::size_t t = 0; t < out.size(); ++t) {
        out[t] = filter(values.subspan(t, w));
        if (!std::isfinite(out[t]))
            throw NumericError("apply: filter " + filter.describe() + " returned non-finite value at window " +
                               std::to_string(t));
    }
    return out;
}

[[nodiscard]] inline std::vector<double> apply(const FilterSpec& filter, const SeriesSample& series) {
    return bel::apply(filter, series.values());
}

/// Q_N = sum_t (K(window_t) - mean) with N = length - d.
[[nodiscard]] inline double qn(const FilterSpec& filter, std::span<const double> values, double mean) {
    double s = 0.0;
    for (double k : bel::apply(filter, values)) s += k - mean;
    return s;
}

[[nodiscard]] inline double qn(const FilterSpec& filter, const SeriesSample& series, double mean) {
    return qn(filter, series.values(), mean);
}

enum class MeanStatus { exact, estimate_only };

struct FilterMean {
    Estimate estimate;
    Provenance provenance = Provenance::closed_form;
    MeanStatus status = MeanStatus::exact;

    [[nodiscard]] double value() const noexcept { return estimate.value; }
};

struct MeanOptions {
    std::size_t samples = 1'000'000;
    std::uint64_t seed = 0x6d65616eull;
    unsigned threads = 1;
};

namespace detail {

/// Monte Carlo E K(U) with U drawn at the given smoothing level, using
/// antithetic pairs (U, -U); every supported innovation law is symmetric.
/// The standard error comes from the pair means.
inline Estimate mc_window_mean(const FilterSpec& filter, const Process& process, std::size_t level,
                               const MeanOptions& opt) {
    if (opt.samples < 2) throw ConfigError("filter mean: need at least two samples");
    const PerturbationSampler sampler(process, filter.d(), level);
    const std::size_t pairs = opt.samples / 2;
    constexpr std::size_t chunk = 4096;
    const std::size_t chunks = (pairs + chunk - 1) / chunk;
    std::vector<double> sum(chunks, 0.0), sum2(chunks, 0.0);
    parallel_for(chunks, opt.threads, [&](std::size_t c) {
        Engine eng = make_engine(derive_seed(opt.seed, {stream::smoothing, level, c}));
        std::vector<double> u(filter.width()), neg(filter.width());
        const std::size_t end = std::min(pairs, (c + 1) * chunk);
        for (std::size_t i = c * chunk; i < end; ++i) {
            sampler.draw(eng, u);
            for (std::size_t k = 0; k < u.size(); ++k) neg[k] = -u[k];
            const double m = 0.5 * (filter(u) + filter(neg));
            sum[c] += m;
            sum2[c] += m * m;
        }
    });
    double s = 0.0, s2 = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
        s += sum[c];
        s2 += sum2[c];
    }
    const double n = static_cast<double>(pairs);
    const double mean = s / n;
    const double var = std::max(0.0, (s2 - n * mean * mean) / std::max(1.0, n - 1.0));
    return {mean, std::sqrt(var / n)};
}

}  // namespace detail

/// K_[level](0) = E K(U) where U is the level-`level` perturbation.
/// Polynomial filters and Gaussian zero crossings have closed forms; other
/// combinations return a Monte Carlo estimate flagged estimate-only.
[[nodiscard]] inline FilterMean smoothed_mean(const FilterSpec& filter, const Process& process, std::size_t level,
                                              const MeanOptions& opt = {}) {
    const std::size_t top = std::min(level, age_horizon(process.model(), filter.d()));
    if (auto poly = filter.as_polynomial()) {
        Polynomial p = *poly;
        const auto& innov = process.innovations();
        for (std::size_t u = 1; u <= top; ++u) {
            const auto dir = age_direction(process.model(), filter.d(), u);
            p = p.smooth_step(dir, [&](int k) { return innov.moment(k); });
        }
        const std::vector<double> zero(filter.width(), 0.0);
        return {{p(zero), 0.0}, Provenance::closed_form, MeanStatus::exact};
    }
    if (std::holds_alternative<ZeroCrossing>(filter.kind()) && process.innovations().is_gaussian()) {
        const auto cov = perturbation_covariance(process, 1, top);
        if (cov(0, 0) > 0.0 && cov(1, 1) > 0.0) {
            const double rho = cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1));
            return {{std::acos(std::clamp(rho, -1.0, 1.0)) / std::numbers::pi, 0.0}, Provenance::closed_form,
                    MeanStatus::exact};
        }
    }
    return {detail::mc_window_mean(filter, process, top, opt), Provenance::monte_carlo, MeanStatus::estimate_only};
}

/// E K(X_1, ..., X_{1+d}) for the generated (M-truncated) process.
[[nodiscard]] inline FilterMean filter_mean(const FilterSpec& filter, const Process& process,
                                            const MeanOptions& opt = {}) {
    return smoothed_mean(filter, process, age_horizon(process.model(), filter.d()), opt);
}

}  // namespace bel
