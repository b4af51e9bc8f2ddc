#pragma once

// Monte Carlo experiments on N^{-1/2} Q_{N,p}: long-run variance, Kolmogorov
// distance to the normal limit, and empirical rate fits.

#include "bel/convolution.hpp"
#include "bel/core.hpp"
#include "bel/digest.hpp"
#include "bel/expansion.hpp"
#include "bel/filters.hpp"
#include "bel/linproc.hpp"
#include "bel/parallel.hpp"
#include "bel/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bel {

/// Phi(x) = erfc(-x / sqrt 2) / 2, which keeps full relative accuracy in the
/// lower tail where 1 + erf(x / sqrt 2) would cancel.
[[nodiscard]] inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// sup_x |F_R(x) - Phi(x / sigma)| for the empirical distribution F_R.
[[nodiscard]] inline double kolmogorov_distance(std::span<const double> samples, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("kolmogorov_distance: sigma must be positive");
    if (samples.empty()) throw ConfigError("kolmogorov_distance: needs at least one sample");
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    const double r = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = normal_cdf(s[i] / sigma);
        d = std::max({d, std::abs(static_cast<double>(i + 1) / r - f), std::abs(static_cast<double>(i) / r - f)});
    }
    return d;
}

/// 95% null quantile of sqrt(R) D, used as the Monte Carlo resolution.
[[nodiscard]] inline double mc_floor(std::size_t replicates) {
    return 1.36 / std::sqrt(static_cast<double>(replicates));
}

// ------------------------------------------------------------------ sigma^2

struct Sigma2Method {
    enum class Kind { autocov_sum, batch_means };
    Kind kind = Kind::autocov_sum;
    std::size_t max_lag = 4096;      // autocov-sum: lag cap L
    std::size_t batches = 16;        // batch-means: batches per path
    std::size_t paths = 256;         // independent paths
    std::size_t path_length = 1 << 18;

    [[nodiscard]] std::string describe() const {
        return kind == Kind::autocov_sum ? "autocov_sum(L=" + std::to_string(max_lag) + ")"
                                         : "batch_means(batches=" + std::to_string(batches) + ")";
    }
};

enum class VarianceStatus { ok, degenerate };

[[nodiscard]] inline const char* to_string(VarianceStatus s) noexcept {
    return s == VarianceStatus::ok ? "ok" : "degenerate-variance";
}

struct Sigma2Result {
    Estimate estimate;
    VarianceStatus status = VarianceStatus::ok;
    std::string method;
};

class DegenerateVarianceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Long-run variance of T_t(p) from independent stationary paths. Both
/// methods center at the exact (or high-precision) mean already removed in
/// T_t; the standard error is the spread across paths. An estimate not
/// clearly above zero (<= 3 SE) is reported as degenerate.
[[nodiscard]] inline Sigma2Result sigma2(const CorrectedSum& sum, const Sigma2Method& method, std::uint64_t seed,
                                         unsigned threads = 1) {
    if (method.paths < 2) throw ConfigError("sigma2: need at least two paths");
    const std::size_t len = method.path_length;
    if (method.kind == Sigma2Method::Kind::autocov_sum && (method.max_lag == 0 || method.max_lag >= len))
        throw ConfigError("sigma2: lag cap must be in [1, path length)");
    if (method.kind == Sigma2Method::Kind::batch_means && (method.batches < 1 || method.batches > len))
        throw ConfigError("sigma2: batch count must be in [1, path length]");

    std::vector<double> per_path(method.paths);
    parallel_for(method.paths, threads, [&](std::size_t i) {
        const auto sample = generate(sum.process(), len + sum.filter().d(), derive_seed(seed, {stream::sigma2, i}));
        const auto t = sum.terms(sample, len);
        if (method.kind == Sigma2Method::Kind::autocov_sum) {
            const auto c = lagged_products(t, method.max_lag);
            double v = c[0];
            for (std::size_t k = 1; k < c.size(); ++k) v += 2.0 * c[k];
            per_path[i] = v;
        } else {
            const std::size_t size = len / method.batches;
            double acc = 0.0;
            for (std::size_t b = 0; b < method.batches; ++b) {
                double s = 0.0;
                for (std::size_t k = b * size; k < (b + 1) * size; ++k) s += t[k];
                acc += s * s / static_cast<double>(size);
            }
            per_path[i] = acc / static_cast<double>(method.batches);
        }
    });
    double mean = 0.0;
    for (double v : per_path) mean += v;
    mean /= static_cast<double>(per_path.size());
    double ss = 0.0;
    for (double v : per_path) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / static_cast<double>(per_path.size() - 1) / static_cast<double>(per_path.size()));
    const auto status = mean > 3.0 * se && mean > 0.0 ? VarianceStatus::ok : VarianceStatus::degenerate;
    return {{mean, se}, status, method.describe()};
}

[[nodiscard]] inline Sigma2Result sigma2(const FilterSpec& filter, const Process& process, int p,
                                         const Sigma2Method& method, std::uint64_t seed, unsigned threads = 1) {
    return sigma2(CorrectedSum(filter, process, p), method, seed, threads);
}

// ---------------------------------------------------------------- experiments

struct ExperimentConfig {
    Process process;
    FilterSpec filter;
    int p = 0;
    std::vector<std::size_t> n_grid;
    std::size_t replicates = 2000;
    std::uint64_t seed = 12345;
    Sigma2Method sigma2{};
    CorrectionOptions correction{};

    void validate() const {
        if (n_grid.empty()) throw ConfigError("experiment: N-grid is empty");
        for (std::size_t k = 1; k < n_grid.size(); ++k)
            if (n_grid[k] <= n_grid[k - 1]) throw ConfigError("experiment: N-grid must be strictly increasing");
        const std::size_t need = 4 * (filter.d() + 1);
        if (n_grid.front() < need)
            throw ConfigError("experiment: every N must be >= 4(d+1) = " + std::to_string(need));
        if (replicates < 100) throw ConfigError("experiment: replicates R must be >= 100");
        if (p < 0) throw ConfigError("experiment: p must be >= 0");
        validate_moments(filter, process.innovations());
    }
};

/// Stream of replicate r at grid point g.
[[nodiscard]] inline std::uint64_t replicate_seed(std::uint64_t master, std::size_t grid_index, std::size_t r) {
    return derive_seed(master, {stream::replicate, grid_index, r});
}

struct GridRecord {
    std::size_t n = 0;
    std::vector<double> samples;  // Q_{N,p} / sqrt(N), one per replicate
    double distance = 0.0;
    double floor = 0.0;
    double sample_variance = 0.0;
    /// Standard error of the centering, carried to the sample scale (sqrt(N) * SE).
    double centering_se = 0.0;
};

struct MCResult {
    std::vector<GridRecord> records;
    Sigma2Result sigma2;
    FilterMean mean;
    std::uint64_t seed = 0;
    std::size_t replicates = 0;
    double wall_seconds = 0.0;

    /// Digest over every sample bit and the variance estimate.
    [[nodiscard]] std::string digest() const {
        Digest h;
        h.update(sigma2.estimate.value).update(sigma2.estimate.se);
        for (const auto& r : records) h.update(static_cast<std::uint64_t>(r.n)).update(std::span<const double>(r.samples));
        return h.hex();
    }
};

[[nodiscard]] inline MCResult run_experiment(const ExperimentConfig& config, unsigned threads = 1) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const CorrectedSum sum(config.filter, config.process, config.p, kInfinity, config.correction);

    MCResult out;
    out.seed = config.seed;
    out.replicates = config.replicates;
    out.mean = sum.mean();
    out.sigma2 = sigma2(sum, config.sigma2, derive_seed(config.seed, {stream::sigma2}), threads);
    if (out.sigma2.status != VarianceStatus::ok)
        throw DegenerateVarianceError("degenerate-variance: sigma^2 estimate " +
                                      std::to_string(out.sigma2.estimate.value) + " with SE " +
                                      std::to_string(out.sigma2.estimate.se) + " is not clearly positive");
    const double sigma = std::sqrt(out.sigma2.estimate.value);

    for (std::size_t g = 0; g < config.n_grid.size(); ++g) {
        const std::size_t n = config.n_grid[g];
        GridRecord rec;
        rec.n = n;
        rec.samples.assign(config.replicates, 0.0);
        const double root = std::sqrt(static_cast<double>(n));
        parallel_for(config.replicates, threads, [&](std::size_t r) {
            const auto sample = generate(config.process, n + config.filter.d(), replicate_seed(config.seed, g, r));
            const double q = sum.sum(sample, n) / root;
            if (!std::isfinite(q))
                throw NumericError("run_experiment: non-finite sample at N=" + std::to_string(n) + ", replicate " +
                                   std::to_string(r));
            rec.samples[r] = q;
        });
        rec.distance = kolmogorov_distance(rec.samples, sigma);
        rec.floor = mc_floor(config.replicates);
        double m = 0.0;
        for (double v : rec.samples) m += v;
        m /= static_cast<double>(rec.samples.size());
        double ss = 0.0;
        for (double v : rec.samples) ss += (v - m) * (v - m);
        rec.sample_variance = ss / static_cast<double>(rec.samples.size() - 1);
        rec.centering_se = root * out.mean.estimate.se;
        out.records.push_back(std::move(rec));
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

/// D_{k+1} <= D_k at every step, except where D_{k+1} is already within
/// twice the Monte Carlo floor.
[[nodiscard]] inline bool non_increasing_up_to_floor(std::span<const double> distances, std::span<const double> floors) {
    for (std::size_t k = 1; k < distances.size(); ++k)
        if (distances[k] > distances[k - 1] && distances[k] > 2.0 * floors[k]) return false;
    return true;
}

[[nodiscard]] inline bool non_increasing_up_to_floor(const MCResult& result) {
    std::vector<double> d, f;
    for (const auto& r : result.records) {
        d.push_back(r.distance);
        f.push_back(r.floor);
    }
    return non_increasing_up_to_floor(d, f);
}

// ------------------------------------------------------------------ rate fits

enum class FitStatus { ok, mc_floor_limited };
enum class BoundVerdict { consistent, violated, undetermined };

[[nodiscard]] inline const char* to_string(FitStatus s) noexcept {
    return s == FitStatus::ok ? "ok" : "mc-floor-limited";
}
[[nodiscard]] inline const char* to_string(BoundVerdict v) noexcept {
    switch (v) {
        case BoundVerdict::consistent: return "consistent-with-bound";
        case BoundVerdict::violated: return "bound-violated";
        default: return "undetermined";
    }
}

struct RateFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double residual_se = std::numeric_limits<double>::quiet_NaN();
    std::size_t used_points = 0;
    double theoretical_slope = 0.0;  // -delta
    FitStatus status = FitStatus::mc_floor_limited;
    BoundVerdict verdict = BoundVerdict::undetermined;
    double bound_constant = 0.0;  // C with D_{N_0} = C N_0^{-delta}
    std::vector<bool> near_floor;  // D_N within 2x the floor
};

/// Least squares of log D on log N over points above twice the floor (at
/// least three needed), and the bound check D_N <= C N^{-delta} at every N
/// with C fixed by the smallest N. The bound check needs the anchor itself
/// to be above the floor guard.
[[nodiscard]] inline RateFit fit_rate(std::span<const std::size_t> ns, std::span<const double> distances,
                                      std::span<const double> floors, double delta) {
    if (ns.size() != distances.size() || ns.size() != floors.size())
        throw ConfigError("fit_rate: N, distance and floor arrays differ in length");
    if (ns.empty()) throw ConfigError("fit_rate: no grid points");
    RateFit fit;
    fit.theoretical_slope = -delta;
    std::vector<double> x, y;
    for (std::size_t k = 0; k < ns.size(); ++k) {
        const bool near = distances[k] <= 2.0 * floors[k];
        fit.near_floor.push_back(near);
        if (!near && distances[k] > 0.0) {
            x.push_back(std::log(static_cast<double>(ns[k])));
            y.push_back(std::log(distances[k]));
        }
    }
    fit.used_points = x.size();
    if (x.size() >= 3) {
        const double n = static_cast<double>(x.size());
        double mx = 0.0, my = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            mx += x[k];
            my += y[k];
        }
        mx /= n;
        my /= n;
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            sxx += (x[k] - mx) * (x[k] - mx);
            sxy += (x[k] - mx) * (y[k] - my);
        }
        fit.slope = sxy / sxx;
        fit.intercept = my - fit.slope * mx;
        double rss = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double e = y[k] - fit.intercept - fit.slope * x[k];
            rss += e * e;
        }
        fit.residual_se = std::sqrt(rss / (n - 2.0));
        fit.status = FitStatus::ok;
    }
    if (!fit.near_floor.front()) {
        fit.bound_constant = distances.front() * std::pow(static_cast<double>(ns.front()), delta);
        fit.verdict = BoundVerdict::consistent;
        for (std::size_t k = 1; k < ns.size(); ++k) {
            const double bound = fit.bound_constant * std::pow(static_cast<double>(ns[k]), -delta);
            if (distances[k] > bound * (1.0 + 1e-12)) fit.verdict = BoundVerdict::violated;
        }
    }
    return fit;
}

[[nodiscard]] inline RateFit fit_rate(const MCResult& result, double delta) {
    std::vector<std::size_t> ns;
    std::vector<double> d, f;
    for (const auto& r : result.records) {
        ns.push_back(r.n);
        d.push_back(r.distance);
        f.push_back(r.floor);
    }
    return fit_rate(ns, d, f, delta);
}

}  // namespace bel
