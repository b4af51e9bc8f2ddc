#pragma once

// Linear processes X_t = sum_{i=1}^{M} a_i eps_{t-i} with i.i.d. innovations.

#include "bel/convolution.hpp"
#include "bel/core.hpp"
#include "bel/digest.hpp"
#include "bel/rng.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace bel {

struct Hyperbolic {
    double beta = 0.75;
    double scale = 1.0;
};

struct Farima {
    double d = 0.2;
};

struct Finite {
    std::vector<double> taps;
};

/// MA(infinity) coefficients a_1, a_2, ... together with the generation
/// horizon M at which infinite families are truncated.
class CoefficientModel {
public:
    using Kind = std::variant<Hyperbolic, Farima, Finite>;

    CoefficientModel(Kind kind, std::size_t horizon) : kind_(std::move(kind)), horizon_(horizon) {
        validate();
        taps_ = coeffs(horizon_);
    }

    static CoefficientModel hyperbolic(double beta, double scale = 1.0, std::size_t horizon = kDefaultHorizon) {
        return CoefficientModel(Hyperbolic{beta, scale}, horizon);
    }
    static CoefficientModel farima(double d, std::size_t horizon = kDefaultHorizon) {
        return CoefficientModel(Farima{d}, horizon);
    }
    /// Horizon defaults to the number of taps.
    static CoefficientModel finite(std::vector<double> taps, std::size_t horizon = 0) {
        const std::size_t q = taps.size();
        return CoefficientModel(Finite{std::move(taps)}, horizon == 0 ? q : horizon);
    }

    [[nodiscard]] const Kind& kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t horizon() const noexcept { return horizon_; }

    /// a_1..a_M, the coefficients actually used for generation.
    [[nodiscard]] std::span<const double> taps() const noexcept { return taps_; }

    /// a_i of the truncated model (zero beyond the horizon); a_0 == 0.
    [[nodiscard]] double a(std::ptrdiff_t i) const noexcept {
        return (i >= 1 && static_cast<std::size_t>(i) <= horizon_) ? taps_[static_cast<std::size_t>(i) - 1] : 0.0;
    }

    /// First m coefficients of the untruncated family.
    [[nodiscard]] std::vector<double> coeffs(std::size_t m) const {
        if (m == 0) throw ConfigError("coeffs: m must be >= 1");
        std::vector<double> out(m, 0.0);
        if (const auto* h = std::get_if<Hyperbolic>(&kind_)) {
            for (std::size_t i = 1; i <= m; ++i)
                out[i - 1] = h->scale * std::pow(static_cast<double>(i), -h->beta);
        } else if (const auto* f = std::get_if<Farima>(&kind_)) {
            // a_1 = d and a_{i+1} = a_i (i + d) / (i + 1); no Gamma evaluations.
            double a = f->d;
            for (std::size_t i = 1; i <= m; ++i) {
                out[i - 1] = a;
                a *= (static_cast<double>(i) + f->d) / (static_cast<double>(i) + 1.0);
            }
        } else {
            const auto& taps = std::get<Finite>(kind_).taps;
            for (std::size_t i = 0; i < std::min(m, taps.size()); ++i) out[i] = taps[i];
        }
        return out;
    }

    /// Decay exponent beta of |a_i| ~ i^{-beta}; infinity for finite models.
    [[nodiscard]] double decay_exponent() const noexcept {
        if (const auto* h = std::get_if<Hyperbolic>(&kind_)) return h->beta;
        if (const auto* f = std::get_if<Farima>(&kind_)) return 1.0 - f->d;
        return std::numeric_limits<double>::infinity();
    }

    [[nodiscard]] bool is_finite_order() const noexcept { return std::holds_alternative<Finite>(kind_); }

    /// Sum_{i > M} a_i^2 of the untruncated family: the truncation bias budget.
    [[nodiscard]] double tail_mass() const {
        if (const auto* h = std::get_if<Hyperbolic>(&kind_)) {
            const double s = 2.0 * h->beta;
            const std::size_t k = std::max<std::size_t>(horizon_, 1000);
            double sum = 0.0;
            for (std::size_t i = horizon_ + 1; i <= k; ++i) sum += std::pow(static_cast<double>(i), -s);
            const double kd = static_cast<double>(k);
            // Euler-Maclaurin remainder for sum_{i > k} i^{-s}.
            sum += std::pow(kd, 1.0 - s) / (s - 1.0) - 0.5 * std::pow(kd, -s) + s * std::pow(kd, -s - 1.0) / 12.0;
            return h->scale * h->scale * sum;
        }
        if (const auto* f = std::get_if<Farima>(&kind_)) {
            const std::size_t k = std::max<std::size_t>(64 * horizon_, 1 << 20);
            double a = f->d, sum = 0.0;
            for (std::size_t i = 1; i <= k; ++i) {
                if (i > horizon_) sum += a * a;
                a *= (static_cast<double>(i) + f->d) / (static_cast<double>(i) + 1.0);
            }
            // a_i ~ a_k (i/k)^{d-1} beyond k.
            return sum + a * a * static_cast<double>(k) / (1.0 - 2.0 * f->d);
        }
        const auto& taps = std::get<Finite>(kind_).taps;
        double sum = 0.0;
        for (std::size_t i = horizon_; i < taps.size(); ++i) sum += taps[i] * taps[i];
        return sum;
    }

    [[nodiscard]] std::string describe() const {
        if (const auto* h = std::get_if<Hyperbolic>(&kind_))
            return "hyperbolic(c=" + std::to_string(h->scale) + ",beta=" + std::to_string(h->beta) + ")";
        if (const auto* f = std::get_if<Farima>(&kind_)) return "farima(d=" + std::to_string(f->d) + ")";
        return "finite(q=" + std::to_string(std::get<Finite>(kind_).taps.size()) + ")";
    }

    void hash_into(Digest& h) const {
        h.update(describe()).update(static_cast<std::uint64_t>(horizon_)).update(std::span<const double>(taps_));
    }

private:
    void validate() const {
        if (horizon_ == 0) throw ConfigError("coefficient model: horizon M must be >= 1");
        if (const auto* h = std::get_if<Hyperbolic>(&kind_)) {
            if (!(h->beta > 0.5)) throw ConfigError("hyperbolic model: requires beta > 1/2, got " + std::to_string(h->beta));
            if (!(h->scale > 0.0) || !std::isfinite(h->scale))
                throw ConfigError("hyperbolic model: requires scale c > 0");
        } else if (const auto* f = std::get_if<Farima>(&kind_)) {
            if (!(f->d > 0.0 && f->d < 0.5))
                throw ConfigError("farima model: requires memory d in (0, 1/2), got " + std::to_string(f->d));
        } else {
            const auto& taps = std::get<Finite>(kind_).taps;
            if (taps.empty()) throw ConfigError("finite model: needs at least one coefficient");
            for (double a : taps)
                if (!std::isfinite(a)) throw NumericError("finite model: non-finite coefficient");
        }
    }

    Kind kind_;
    std::size_t horizon_;
    std::vector<double> taps_;
};

struct Gaussian {
    double sigma = 1.0;
};
struct Rademacher {};
struct CenteredUniform {
    double half_width = 1.0;
};

/// Law of the i.i.d. innovations. Every supported family is symmetric with
/// mean zero and all moments finite.
class InnovationSpec {
public:
    using Dist = std::variant<Gaussian, Rademacher, CenteredUniform>;

    explicit InnovationSpec(Dist dist = Gaussian{}, int required_moment_order = 8)
        : dist_(dist), required_moment_order_(required_moment_order) {
        if (const auto* g = std::get_if<Gaussian>(&dist_); g && !(g->sigma > 0.0 && std::isfinite(g->sigma)))
            throw ConfigError("gaussian innovations: sigma must be positive");
        if (const auto* u = std::get_if<CenteredUniform>(&dist_);
            u && !(u->half_width > 0.0 && std::isfinite(u->half_width)))
            throw ConfigError("uniform innovations: half-width must be positive");
        if (required_moment_order_ < 2) throw ConfigError("innovations: required moment order must be >= 2");
    }

    [[nodiscard]] const Dist& dist() const noexcept { return dist_; }
    [[nodiscard]] int required_moment_order() const noexcept { return required_moment_order_; }
    [[nodiscard]] bool is_gaussian() const noexcept { return std::holds_alternative<Gaussian>(dist_); }
    [[nodiscard]] bool symmetric() const noexcept { return true; }
    [[nodiscard]] bool has_finite_moment(int /*order*/) const noexcept { return true; }

    [[nodiscard]] double variance() const noexcept { return moment(2); }

    /// Raw moment E eps^k.
    [[nodiscard]] double moment(int k) const noexcept {
        if (k == 0) return 1.0;
        if (k % 2 != 0) return 0.0;
        if (const auto* g = std::get_if<Gaussian>(&dist_)) {
            double m = 1.0;
            for (int j = k - 1; j > 0; j -= 2) m *= j;
            return m * std::pow(g->sigma, k);
        }
        if (std::holds_alternative<Rademacher>(dist_)) return 1.0;
        const double h = std::get<CenteredUniform>(dist_).half_width;
        return std::pow(h, k) / (k + 1);
    }

    /// Same family rescaled by a positive factor (Rademacher cannot be rescaled).
    [[nodiscard]] InnovationSpec scaled(double factor) const {
        if (const auto* g = std::get_if<Gaussian>(&dist_))
            return InnovationSpec(Gaussian{g->sigma * factor}, required_moment_order_);
        if (const auto* u = std::get_if<CenteredUniform>(&dist_))
            return InnovationSpec(CenteredUniform{u->half_width * factor}, required_moment_order_);
        throw ConfigError("rademacher innovations cannot be rescaled");
    }

    void fill(Engine& eng, std::span<double> out) const {
        if (const auto* g = std::get_if<Gaussian>(&dist_)) {
            std::normal_distribution<double> nd(0.0, g->sigma);
            for (double& v : out) v = nd(eng);
        } else if (std::holds_alternative<Rademacher>(dist_)) {
            for (double& v : out) v = (eng() >> 63) != 0 ? 1.0 : -1.0;
        } else {
            const double h = std::get<CenteredUniform>(dist_).half_width;
            std::uniform_real_distribution<double> ud(-h, h);
            for (double& v : out) v = ud(eng);
        }
    }

    [[nodiscard]] std::string describe() const {
        if (const auto* g = std::get_if<Gaussian>(&dist_)) return "gaussian(sigma=" + std::to_string(g->sigma) + ")";
        if (std::holds_alternative<Rademacher>(dist_)) return "rademacher";
        return "uniform(h=" + std::to_string(std::get<CenteredUniform>(dist_).half_width) + ")";
    }

private:
    Dist dist_;
    int required_moment_order_;
};

/// Coefficients plus innovations: everything needed to simulate X.
class Process {
public:
    Process(CoefficientModel model, InnovationSpec innovations)
        : model_(std::move(model)),
          innovations_(std::move(innovations)),
          filter_(std::make_shared<MovingAverage>(std::vector<double>(model_.taps().begin(), model_.taps().end()))) {}

    [[nodiscard]] const CoefficientModel& model() const noexcept { return model_; }
    [[nodiscard]] const InnovationSpec& innovations() const noexcept { return innovations_; }
    [[nodiscard]] const MovingAverage& filter() const noexcept { return *filter_; }
    [[nodiscard]] std::size_t horizon() const noexcept { return model_.horizon(); }

    /// Var X_t of the truncated process.
    [[nodiscard]] double marginal_variance() const noexcept {
        double s = 0.0;
        for (double a : model_.taps()) s += a * a;
        return s * innovations_.variance();
    }

    /// Same coefficients with innovations rescaled so that Var X_t == 1.
    [[nodiscard]] Process unit_variance() const {
        return Process(model_, innovations_.scaled(1.0 / std::sqrt(marginal_variance())));
    }

    [[nodiscard]] std::string digest(std::uint64_t seed) const {
        Digest h;
        model_.hash_into(h);
        h.update(innovations_.describe()).update(seed);
        return h.hex();
    }

private:
    CoefficientModel model_;
    InnovationSpec innovations_;
    std::shared_ptr<const MovingAverage> filter_;
};

/// A simulated path together with the innovations that produced it.
/// Innovations are indexed by time t in [-M, n-1]; values[t] uses
/// eps_{t-1} .. eps_{t-M}, so the first M draws are burn-in.
class SeriesSample {
public:
    SeriesSample(std::vector<double> values, std::vector<double> innovations, std::size_t horizon, std::uint64_t seed,
                 std::string digest)
        : values_(std::move(values)),
          innovations_(std::move(innovations)),
          horizon_(horizon),
          seed_(seed),
          digest_(std::move(digest)) {}

    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::span<const double> innovation_window() const noexcept { return innovations_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] std::size_t horizon() const noexcept { return horizon_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] const std::string& digest() const noexcept { return digest_; }

    /// Earliest retained innovation time (== -M).
    [[nodiscard]] std::ptrdiff_t first_innovation_time() const noexcept {
        return -static_cast<std::ptrdiff_t>(horizon_);
    }

    [[nodiscard]] double innovation(std::ptrdiff_t t) const {
        const std::ptrdiff_t idx = t + static_cast<std::ptrdiff_t>(horizon_);
        if (idx < 0 || static_cast<std::size_t>(idx) >= innovations_.size())
            throw ConfigError("innovation time " + std::to_string(t) + " outside retained window");
        return innovations_[static_cast<std::size_t>(idx)];
    }

private:
    std::vector<double> values_;
    std::vector<double> innovations_;
    std::size_t horizon_;
    std::uint64_t seed_;
    std::string digest_;
};

/// Builds a sample from an explicit innovation window of length n + M
/// (times -M .. n-1).
[[nodiscard]] inline SeriesSample from_innovations(const Process& process, std::vector<double> eps,
                                                   ConvolutionPath path = ConvolutionPath::automatic,
                                                   std::uint64_t seed = 0) {
    const std::size_t m = process.horizon();
    if (eps.size() <= m) throw ConfigError("from_innovations: window must be longer than the horizon");
    const std::size_t n = eps.size() - m;
    auto values = process.filter().apply(eps, m, n, path);
    for (std::size_t t = 0; t < n; ++t)
        if (!std::isfinite(values[t])) throw NumericError("generate: non-finite value at t=" + std::to_string(t));
    return SeriesSample(std::move(values), std::move(eps), m, seed, process.digest(seed));
}

/// Draws n + M innovations from the stream `seed` and filters them.
[[nodiscard]] inline SeriesSample generate(const Process& process, std::size_t n, std::uint64_t seed,
                                           ConvolutionPath path = ConvolutionPath::automatic) {
    if (n == 0) throw ConfigError("generate: n must be >= 1");
    const std::size_t m = process.horizon();
    if (n > std::numeric_limits<std::size_t>::max() / 4 - m ||
        static_cast<double>(n) * static_cast<double>(m) > 9.0e18)
        throw ConfigError("generate: n*M overflows index arithmetic");
    std::vector<double> eps(n + m);
    Engine eng = make_engine(seed);
    process.innovations().fill(eng, eps);
    return from_innovations(process, std::move(eps), path, seed);
}

/// gamma(k) = sigma^2 sum_{i=1}^{M-k} a_i a_{i+k} for the truncated model.
[[nodiscard]] inline double autocov(const CoefficientModel& model, double sigma2, std::ptrdiff_t k) {
    const std::size_t lag = static_cast<std::size_t>(k < 0 ? -k : k);
    const auto a = model.taps();
    double s = 0.0;
    for (std::size_t i = 0; i + lag < a.size(); ++i) s += a[i] * a[i + lag];
    return sigma2 * s;
}

/// gamma(0..max_lag) in one transform pass.
[[nodiscard]] inline std::vector<double> autocov_sequence(const CoefficientModel& model, double sigma2,
                                                          std::size_t max_lag) {
    const auto a = model.taps();
    std::vector<double> out(max_lag + 1, 0.0);
    if (a.size() == 1 || max_lag == 0) {
        for (std::size_t k = 0; k <= max_lag; ++k) out[k] = autocov(model, sigma2, static_cast<std::ptrdiff_t>(k));
        return out;
    }
    const std::size_t cap = std::min(max_lag, a.size() - 1);
    const auto c = lagged_products(a, cap);
    for (std::size_t k = 0; k <= cap; ++k) out[k] = sigma2 * c[k] * static_cast<double>(a.size() - k);
    return out;
}

/// var(sum_{n=1}^{N} X_n), exact for the truncated model. Each innovation
/// eps_s enters the sum with weight sum of a_i over the lags that land in
/// [1, N], so the variance is sigma^2 times the sum of squared weights.
[[nodiscard]] inline double partial_sum_variance(const CoefficientModel& model, double sigma2, std::size_t big_n) {
    if (big_n == 0) throw ConfigError("partial_sum_variance: N must be >= 1");
    const auto a = model.taps();
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(a.size());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(big_n);
    std::vector<double> cum(a.size() + 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) cum[i + 1] = cum[i] + a[i];
    double total = 0.0;
    for (std::ptrdiff_t s = 1 - m; s <= n - 1; ++s) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(1 - s, 1);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - s, m);
        if (hi < lo) continue;
        const double w = cum[static_cast<std::size_t>(hi)] - cum[static_cast<std::size_t>(lo - 1)];
        total += w * w;
    }
    return sigma2 * total;
}

}  // namespace bel
