#pragma once

// Rate exponents (Q', delta, a, b) and Bernstein block decompositions with
// two Monte Carlo diagnostics: block independence and bounded fourth moments.

#include "bel/core.hpp"
#include "bel/estimator.hpp"
#include "bel/expansion.hpp"
#include "bel/linproc.hpp"
#include "bel/parallel.hpp"
#include "bel/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bel {

enum class Regime { long_memory, short_memory };

[[nodiscard]] inline const char* to_string(Regime r) noexcept {
    return r == Regime::long_memory ? "long" : "short";
}

struct RateParams {
    double beta = 0.0;
    double alpha1 = 0.0;
    int p = 0;
    Regime regime = Regime::long_memory;
    double qprime = 0.0;
    bool applicable = false;
};

class RateNotApplicableError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PlanTooSmallError : public std::runtime_error {
public:
    PlanTooSmallError(const std::string& what, std::uint64_t minimum_n)
        : std::runtime_error(what), minimum_n_(minimum_n) {}
    [[nodiscard]] std::uint64_t minimum_n() const noexcept { return minimum_n_; }

private:
    std::uint64_t minimum_n_;
};

/// Long memory (1/2 < beta < 1): Q' = min(alpha1, 2beta-1, (p+1)(2beta-1)-1),
/// usable only when (p+1)(2beta-1) > 1. Short memory (beta > 1):
/// Q' = min(alpha1, 2beta-2). The regime follows beta unless given.
[[nodiscard]] inline RateParams qprime(double beta, double alpha1, int p, std::optional<Regime> regime = std::nullopt) {
    if (!(beta > 0.5)) throw ConfigError("qprime: requires beta > 1/2, got " + std::to_string(beta));
    if (beta == 1.0) throw ConfigError("qprime: beta = 1 is a boundary regime uncovered by either theorem");
    if (!(alpha1 > 0.0)) throw ConfigError("qprime: requires alpha1 > 0");
    if (p < 0) throw ConfigError("qprime: requires p >= 0");
    const Regime natural = beta < 1.0 ? Regime::long_memory : Regime::short_memory;
    if (regime && *regime != natural)
        throw ConfigError(std::string("qprime: beta=") + std::to_string(beta) + " lies outside the " +
                          to_string(*regime) + "-memory regime");
    RateParams rp{beta, alpha1, p, natural, 0.0, true};
    if (natural == Regime::long_memory) {
        const double rank_term = (p + 1) * (2.0 * beta - 1.0);
        rp.qprime = std::min({alpha1, 2.0 * beta - 1.0, rank_term - 1.0});
        rp.applicable = rank_term > 1.0;
    } else {
        rp.qprime = std::min(alpha1, 2.0 * beta - 2.0);
    }
    return rp;
}

/// delta = Q' / (3 (2Q' + 1)).
template <class T>
[[nodiscard]] T delta_of(T q) {
    return q / (T(3) * (T(2) * q + T(1)));
}

[[nodiscard]] inline double delta(double q) {
    if (!(q > 0.0)) throw ConfigError("delta: requires Q' > 0");
    return delta_of(q);
}

template <class T>
struct Exponents {
    T delta;
    T a;
    T b;
};

/// Tight solution b = 3 delta / Q', a = b + 3 delta of the exponent system.
template <class T>
[[nodiscard]] Exponents<T> solve_exponents(T q) {
    const T d = delta_of(q);
    const T b = T(3) * d / q;
    return {d, b + T(3) * d, b};
}

/// 1-a >= 2 delta, b Q' - 2 delta >= delta, a - b - 2 delta >= delta,
/// 1-a >= 3 delta, and 0 < b < a < 1, each up to `slack` (zero for exact types).
template <class T>
[[nodiscard]] bool exponent_inequalities_hold(T q, const Exponents<T>& e, T slack = T(0)) {
    const T zero(0), one(1), two(2), three(3);
    return one - e.a + slack >= two * e.delta && e.b * q - two * e.delta + slack >= e.delta &&
           e.a - e.b - two * e.delta + slack >= e.delta && one - e.a + slack >= three * e.delta && zero < e.b &&
           e.b < e.a && e.a < one;
}

struct BlockingPlan {
    std::uint64_t n = 0;
    double a = 0.0;
    double b = 0.0;
    double c = 0.5;
    double delta = 0.0;
    double qprime = 0.0;
    std::uint64_t big = 0;     // A_N
    std::uint64_t gap = 0;     // B_N
    std::uint64_t ell = 0;     // l_N
    std::uint64_t blocks = 0;  // k_N
    std::uint64_t remainder = 0;

    /// Plan with explicit sizes, for decompositions outside the rate algebra.
    static BlockingPlan from_sizes(std::uint64_t n, std::uint64_t big, std::uint64_t gap, std::uint64_t ell = 0) {
        if (big == 0) throw ConfigError("blocking plan: block size A must be >= 1");
        BlockingPlan p;
        p.n = n;
        p.big = big;
        p.gap = gap;
        p.ell = ell;
        p.blocks = n / (big + gap);
        p.remainder = n - p.blocks * (big + gap);
        return p;
    }
};

namespace detail {

/// ceil(x), treating values within rounding of an integer as that integer.
inline std::uint64_t ceil_power(double base, double exponent) {
    const double x = std::pow(base, exponent);
    const double r = std::round(x);
    if (std::abs(x - r) <= 1e-9 * std::max(1.0, x)) return static_cast<std::uint64_t>(r);
    return static_cast<std::uint64_t>(std::ceil(x));
}

inline bool plan_fits(std::uint64_t n, double a, double b) {
    const auto big = ceil_power(static_cast<double>(n), a);
    const auto gap = ceil_power(static_cast<double>(n), b);
    return big + gap < n && gap < big;
}

inline std::uint64_t minimum_plan_n(double a, double b) {
    std::uint64_t hi = 2;
    while (!plan_fits(hi, a, b)) {
        if (hi > (std::uint64_t{1} << 62)) return 0;
        hi *= 2;
    }
    std::uint64_t lo = hi / 2;
    while (lo + 1 < hi) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        (plan_fits(mid, a, b) ? hi : lo) = mid;
    }
    return hi;
}

}  // namespace detail

/// A_N = ceil(N^a), B_N = ceil(N^b), l_N = ceil(c B_N), k_N = floor(N / (A_N + B_N)).
[[nodiscard]] inline BlockingPlan plan(std::uint64_t n, const RateParams& rate, double c = 0.5) {
    if (!rate.applicable)
        throw RateNotApplicableError("rate-not-applicable: (p+1)(2beta-1) <= 1, the rank-one long-memory regime has a "
                                     "non-normal limit and the Q' formula does not apply");
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("plan: c must lie in (0, 1)");
    const auto e = solve_exponents(rate.qprime);
    if (!exponent_inequalities_hold(rate.qprime, e, 1e-12))
        throw NumericError("plan: exponent inequalities fail at the tight solution");
    if (!detail::plan_fits(n, e.a, e.b)) {
        const auto need = detail::minimum_plan_n(e.a, e.b);
        throw PlanTooSmallError("plan: N=" + std::to_string(n) + " too small for A_N + B_N < N; minimum N is " +
                                    std::to_string(need),
                                need);
    }
    BlockingPlan p;
    p.n = n;
    p.a = e.a;
    p.b = e.b;
    p.c = c;
    p.delta = e.delta;
    p.qprime = rate.qprime;
    p.big = detail::ceil_power(static_cast<double>(n), e.a);
    p.gap = detail::ceil_power(static_cast<double>(n), e.b);
    p.ell = static_cast<std::uint64_t>(std::ceil(c * static_cast<double>(p.gap)));
    p.blocks = n / (p.big + p.gap);
    p.remainder = n - p.blocks * (p.big + p.gap);
    return p;
}

[[nodiscard]] inline RateFit fit_rate(const MCResult& result, const BlockingPlan& plan) {
    return fit_rate(result, plan.delta);
}

struct IndexRange {
    std::size_t begin = 0;  // 0-based, half-open
    std::size_t end = 0;
};

struct BlockDecomposition {
    std::vector<double> m_blocks;
    std::vector<double> b_blocks;
    std::vector<IndexRange> m_ranges;
    std::vector<IndexRange> b_ranges;
    IndexRange remainder_range;
    double m_total = 0.0;  // M_{N,p}
    double b_total = 0.0;  // B_{N,p}
    double remainder = 0.0;  // R_{N,p} = total - (M + B)
};

[[nodiscard]] inline BlockDecomposition block_decompose(std::span<const double> values, const BlockingPlan& plan) {
    if (values.size() != plan.n)
        throw ConfigError("block_decompose: series of length " + std::to_string(values.size()) + " but plan has N=" +
                          std::to_string(plan.n));
    BlockDecomposition out;
    const std::size_t stride = plan.big + plan.gap;
    double total = 0.0;
    for (double v : values) total += v;
    for (std::size_t s = 0; s < plan.blocks; ++s) {
        const std::size_t m0 = s * stride, m1 = m0 + plan.big, b1 = m1 + plan.gap;
        double ms = 0.0, bs = 0.0;
        for (std::size_t t = m0; t < m1; ++t) ms += values[t];
        for (std::size_t t = m1; t < b1; ++t) bs += values[t];
        out.m_blocks.push_back(ms);
        out.b_blocks.push_back(bs);
        out.m_ranges.push_back({m0, m1});
        out.b_ranges.push_back({m1, b1});
        out.m_total += ms;
        out.b_total += bs;
    }
    out.remainder_range = {plan.blocks * stride, values.size()};
    out.remainder = total - (out.m_total + out.b_total);
    return out;
}

// --------------------------------------------------------------- diagnostics

struct CorrelationEstimate {
    double correlation = 0.0;
    double se = 0.0;
    std::size_t pairs = 0;
};

/// Correlation of the first two m-block sums of T_t(p, l) across independent
/// replicates; each replicate contributes one pair, so the pairs are i.i.d.
/// and the null standard error is 1/sqrt(R).
[[nodiscard]] inline CorrelationEstimate block_independence(const CorrectedSum& sum, const BlockingPlan& plan,
                                                            std::size_t replicates, std::uint64_t seed,
                                                            unsigned threads = 1) {
    if (plan.blocks < 2) throw ConfigError("block_independence: plan has fewer than two m-blocks");
    if (replicates < 3) throw ConfigError("block_independence: need at least three replicates");
    std::vector<double> first(replicates), second(replicates);
    parallel_for(replicates, threads, [&](std::size_t r) {
        const auto sample = generate(sum.process(), plan.n + sum.filter().d(), derive_seed(seed, {stream::diagnostic, r}));
        const auto t = sum.terms(sample, plan.n);
        const auto dec = block_decompose(t, plan);
        first[r] = dec.m_blocks[0];
        second[r] = dec.m_blocks[1];
    });
    const double n = static_cast<double>(replicates);
    double mx = 0.0, my = 0.0;
    for (std::size_t r = 0; r < replicates; ++r) {
        mx += first[r];
        my += second[r];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t r = 0; r < replicates; ++r) {
        sxx += (first[r] - mx) * (first[r] - mx);
        syy += (second[r] - my) * (second[r] - my);
        sxy += (first[r] - mx) * (second[r] - my);
    }
    return {sxy / std::sqrt(sxx * syy), 1.0 / std::sqrt(n), replicates};
}

enum class FourthMomentVerdict { bounded, increasing };

[[nodiscard]] inline const char* to_string(FourthMomentVerdict v) noexcept {
    return v == FourthMomentVerdict::bounded ? "bounded" : "increasing";
}

struct FourthMomentPoint {
    std::size_t h = 0;
    Estimate moment;
};

struct FourthMomentDiag {
    std::vector<FourthMomentPoint> points;
    double slope = 0.0;     // weighted slope of log moment on log h
    double slope_se = 0.0;
    FourthMomentVerdict verdict = FourthMomentVerdict::bounded;
};

/// E (h^{-1/2} sum_{t<h} T_t)^4 for each h, from `replicates` independent
/// draws of T_0..T_{h-1}. "bounded" unless the weighted log-log slope is more
/// than three standard errors above zero.
[[nodiscard]] inline FourthMomentDiag fourth_moment_diag(
    const std::function<std::vector<double>(Engine&, std::size_t)>& draw, const std::vector<std::size_t>& h_grid,
    std::size_t replicates, std::uint64_t seed, unsigned threads = 1) {
    if (h_grid.empty()) throw ConfigError("fourth_moment_diag: empty h-grid");
    for (std::size_t k = 1; k < h_grid.size(); ++k)
        if (h_grid[k] <= h_grid[k - 1]) throw ConfigError("fourth_moment_diag: h-grid must be increasing");
    if (replicates < 2) throw ConfigError("fourth_moment_diag: need at least two replicates");
    FourthMomentDiag out;
    for (std::size_t g = 0; g < h_grid.size(); ++g) {
        const std::size_t h = h_grid[g];
        std::vector<double> m4(replicates);
        parallel_for(replicates, threads, [&](std::size_t r) {
            Engine eng = make_engine(derive_seed(seed, {stream::diagnostic, g, r}));
            const auto t = draw(eng, h);
            double s = 0.0;
            for (std::size_t k = 0; k < h; ++k) s += t[k];
            s /= std::sqrt(static_cast<double>(h));
            m4[r] = s * s * s * s;
        });
        double mean = 0.0;
        for (double v : m4) mean += v;
        mean /= static_cast<double>(replicates);
        double ss = 0.0;
        for (double v : m4) ss += (v - mean) * (v - mean);
        const double se = std::sqrt(ss / static_cast<double>(replicates - 1) / static_cast<double>(replicates));
        out.points.push_back({h, {mean, se}});
    }
    if (out.points.size() >= 2) {
        // Weighted least squares with var(log m) ~ (se/m)^2.
        double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        bool exact = true;
        for (const auto& pt : out.points) exact = exact && pt.moment.se == 0.0;
        for (const auto& pt : out.points) {
            const double rel = pt.moment.se / pt.moment.value;
            const double w = exact ? 1.0 : 1.0 / std::max(rel * rel, 1e-300);
            const double x = std::log(static_cast<double>(pt.h));
            const double y = std::log(pt.moment.value);
            sw += w;
            sx += w * x;
            sy += w * y;
            sxx += w * x * x;
            sxy += w * x * y;
        }
        const double den = sw * sxx - sx * sx;
        out.slope = (sw * sxy - sx * sy) / den;
        out.slope_se = exact ? 0.0 : std::sqrt(sw / den);
        out.verdict = out.slope > 3.0 * out.slope_se + 1e-12 ? FourthMomentVerdict::increasing
                                                             : FourthMomentVerdict::bounded;
    }
    return out;
}

/// Fourth-moment diagnostic on T_t(p, l) of a corrected sum.
[[nodiscard]] inline FourthMomentDiag fourth_moment_diag(const CorrectedSum& sum, const std::vector<std::size_t>& h_grid,
                                                         std::size_t replicates, std::uint64_t seed,
                                                         unsigned threads = 1) {
    const auto draw = [&](Engine& eng, std::size_t h) {
        const auto sample = generate(sum.process(), h + sum.filter().d(), eng());
        return sum.terms(sample, h);
    };
    return fourth_moment_diag(draw, h_grid, replicates, seed, threads);
}

}  // namespace bel
