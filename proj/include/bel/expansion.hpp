#pragma once

// Smoothed kernels K_[j], their derivatives at the origin, the power rank,
// the expansion coefficients b_{j1..jr}, the terms Z_{N,r}, the corrected
// sums Q_{N,p} and Q_{N,p,l}, and the martingale differences of K.

#include "bel/convolution.hpp"
#include "bel/core.hpp"
#include "bel/filters.hpp"
#include "bel/linproc.hpp"
#include "bel/parallel.hpp"
#include "bel/polynomial.hpp"
#include "bel/rng.hpp"
#include "bel/window.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace bel {

/// Level sentinel for K_[infinity]; resolved to the age horizon M + d.
inline constexpr std::size_t kInfinity = std::numeric_limits<std::size_t>::max();

struct SmoothingOptions {
    std::size_t samples = 1'000'000;
    std::uint64_t seed = 0x736d6f6f7468ull;
    unsigned threads = 1;
    /// Largest acceptable standard error for a derivative estimate.
    double se_budget = std::numeric_limits<double>::infinity();
};

enum class EstimateStatus { ok, insufficient_samples };

[[nodiscard]] inline const char* to_string(EstimateStatus s) noexcept {
    return s == EstimateStatus::ok ? "ok" : "insufficient-samples";
}

struct DerivativeEstimate {
    Estimate estimate;
    double step = 0.0;  // finite-difference step; 0 for closed forms
    EstimateStatus status = EstimateStatus::ok;
};

namespace detail {

inline double binomial(int n, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
}

}  // namespace detail

/// K_[j](x) = E K(x + sum_{u<=j} A_u eps_u), with K_[0] = K.
///
/// Polynomial filters are smoothed in closed form by substituting innovation
/// moments. Other filters use a fixed bank of perturbation draws (with their
/// negatives as antithetic partners), so every evaluation and every stencil
/// point shares common random numbers.
class SmoothedKernel {
public:
    SmoothedKernel(FilterSpec filter, Process process, std::size_t level = kInfinity, SmoothingOptions opt = {})
        : filter_(std::move(filter)),
          process_(std::move(process)),
          level_(std::min(level, age_horizon(process_.model(), filter_.d()))),
          opt_(opt) {
        if (auto poly = filter_.as_polynomial()) {
            Polynomial p = *poly;
            const auto& innov = process_.innovations();
            for (std::size_t u = 1; u <= level_; ++u)
                p = p.smooth_step(age_direction(process_.model(), filter_.d(), u),
                                  [&](int k) { return innov.moment(k); });
            poly_ = std::move(p);
            return;
        }
        if (level_ == 0) return;
        if (opt_.samples < 2) throw ConfigError("smoothed kernel: Monte Carlo evaluation needs at least two samples");
        draw_bank();
    }

    [[nodiscard]] const FilterSpec& filter() const noexcept { return filter_; }
    [[nodiscard]] const Process& process() const noexcept { return process_; }
    [[nodiscard]] std::size_t level() const noexcept { return level_; }
    [[nodiscard]] std::size_t width() const noexcept { return filter_.width(); }
    [[nodiscard]] const SmoothingOptions& options() const noexcept { return opt_; }
    [[nodiscard]] bool closed_form() const noexcept { return poly_.has_value() || level_ == 0; }
    [[nodiscard]] Provenance provenance() const noexcept {
        return closed_form() ? Provenance::closed_form : Provenance::monte_carlo;
    }

    /// Closed-form K_[j] (polynomial filters only).
    [[nodiscard]] const Polynomial& polynomial() const {
        if (!poly_) throw ConfigError("smoothed kernel: " + filter_.describe() + " has no closed form");
        return *poly_;
    }

    /// K_[j](x) with its standard error (zero for closed forms).
    [[nodiscard]] Estimate operator()(std::span<const double> x) const {
        check_point(x);
        if (poly_) return {(*poly_)(x), 0.0};
        if (level_ == 0) return {filter_(x), 0.0};
        const std::vector<double> origin(x.begin(), x.end());
        return combine({{origin, 1.0}});
    }

    /// Partial derivative of K_[j] at the origin for multi-index i.
    [[nodiscard]] DerivativeEstimate derivative(const MultiIndex& index) const {
        if (index.size() != width())
            throw ConfigError("derivative: multi-index needs " + std::to_string(width()) + " entries");
        if (poly_) return {{poly_->derivative_at_zero(index), 0.0}, 0.0, EstimateStatus::ok};
        if (level_ < width())
            throw ConfigError("derivative: Monte Carlo kernels are differentiated only at level >= d+1, got " +
                              std::to_string(level_));
        const std::vector<double> zero(width(), 0.0);
        const double pilot = (*this)(zero).se;
        const double h = std::max(0.05, 2.0 * std::cbrt(pilot));

        // Tensor product of one-dimensional central stencils: order k uses
        // offsets (k/2 - m) h with weights (-1)^m C(k, m) / h^k.
        std::vector<std::pair<std::vector<double>, double>> stencil{{zero, 1.0}};
        for (std::size_t v = 0; v < width(); ++v) {
            const int k = index[v];
            if (k == 0) continue;
            std::vector<std::pair<std::vector<double>, double>> next;
            for (const auto& [pt, w] : stencil)
                for (int m = 0; m <= k; ++m) {
                    auto q = pt;
                    q[v] += (0.5 * k - m) * h;
                    const double wm = (m % 2 == 0 ? 1.0 : -1.0) * detail::binomial(k, m) / std::pow(h, k);
                    next.emplace_back(std::move(q), w * wm);
                }
            stencil = std::move(next);
        }
        const Estimate e = combine(stencil);
        const auto status = e.se > opt_.se_budget ? EstimateStatus::insufficient_samples : EstimateStatus::ok;
        return {e, h, status};
    }

private:
    void check_point(std::span<const double> x) const {
        if (x.size() != width())
            throw ConfigError("smoothed kernel: point has " + std::to_string(x.size()) + " coordinates, expected " +
                              std::to_string(width()));
    }

    void draw_bank() {
        const PerturbationSampler sampler(process_, filter_.d(), level_);
        pairs_ = opt_.samples / 2;
        bank_.assign(pairs_ * width(), 0.0);
        constexpr std::size_t chunk = 4096;
        const std::size_t chunks = (pairs_ + chunk - 1) / chunk;
        parallel_for(chunks, opt_.threads, [&](std::size_t c) {
            Engine eng = make_engine(derive_seed(opt_.seed, {stream::smoothing, level_, c}));
            const std::size_t end = std::min(pairs_, (c + 1) * chunk);
            for (std::size_t i = c * chunk; i < end; ++i)
                sampler.draw(eng, std::span<double>(bank_.data() + i * width(), width()));
        });
    }

    /// Mean of sum_k w_k K(x_k + U) over the bank, pairing each U with -U.
    [[nodiscard]] Estimate combine(const std::vector<std::pair<std::vector<double>, double>>& points) const {
        const std::size_t w = width();
        double s = 0.0, s2 = 0.0;
        std::vector<double> plus(w), minus(w);
        for (std::size_t i = 0; i < pairs_; ++i) {
            const double* u = bank_.data() + i * w;
            double acc = 0.0;
            for (const auto& [pt, wt] : points) {
                for (std::size_t k = 0; k < w; ++k) {
                    plus[k] = pt[k] + u[k];
                    minus[k] = pt[k] - u[k];
                }
                acc += wt * (filter_(plus) + filter_(minus));
            }
            acc *= 0.5;
            s += acc;
            s2 += acc * acc;
        }
        const double n = static_cast<double>(pairs_);
        const double mean = s / n;
        const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
        return {mean, std::sqrt(var / n)};
    }

    FilterSpec filter_;
    Process process_;
    std::size_t level_;
    SmoothingOptions opt_;
    std::optional<Polynomial> poly_;
    std::size_t pairs_ = 0;
    std::vector<double> bank_;
};

// ---------------------------------------------------------------- power rank

enum class RankStatus { found, exceeds_max_order };

[[nodiscard]] inline const char* to_string(RankStatus s) noexcept {
    return s == RankStatus::found ? "found" : "rank > max-order";
}

struct DerivativeEntry {
    MultiIndex index;
    DerivativeEstimate value;
    bool nonzero = false;
};

struct PowerRankReport {
    std::vector<DerivativeEntry> derivatives;
    std::optional<int> rank;
    RankStatus status = RankStatus::exceeds_max_order;
    int max_order = 0;
    double tolerance_factor = 3.0;
    double tolerance_floor = 1e-8;
    std::size_t level = 0;
    Provenance provenance = Provenance::closed_form;
};

/// Scans total orders 1..max_order and stops at the first order with a
/// derivative outside max(3 SE, 1e-8) of zero.
[[nodiscard]] inline PowerRankReport power_rank(const SmoothedKernel& kernel, int max_order) {
    if (max_order < 1) throw ConfigError("power_rank: max-order must be >= 1");
    PowerRankReport rep;
    rep.max_order = max_order;
    rep.level = kernel.level();
    rep.provenance = kernel.provenance();
    for (int s = 1; s <= max_order && !rep.rank; ++s) {
        const auto idx = multi_indices(kernel.width(), s);
        std::vector<DerivativeEntry> found(idx.size());
        parallel_for(idx.size(), kernel.options().threads, [&](std::size_t k) {
            const auto dv = kernel.derivative(idx[k]);
            found[k] = {idx[k], dv, significantly_nonzero(dv.estimate)};
        });
        for (auto& e : found) {
            if (e.nonzero) rep.rank = s;
            rep.derivatives.push_back(std::move(e));
        }
    }
    rep.status = rep.rank ? RankStatus::found : RankStatus::exceeds_max_order;
    return rep;
}

// ----------------------------------------------------- expansion coefficients

struct CoefficientEntry {
    std::vector<std::size_t> tuple;  // strictly increasing ages j_1 < ... < j_r
    double value = 0.0;
    double se = 0.0;
};

/// b_{j1..jr} for all tuples with j_r <= j_max.
class ExpansionCoefficients {
public:
    ExpansionCoefficients(int order, std::size_t d, std::size_t j_max, Provenance prov, EstimateStatus status,
                          std::vector<CoefficientEntry> entries)
        : order_(order), d_(d), j_max_(j_max), provenance_(prov), status_(status), entries_(std::move(entries)) {}

    [[nodiscard]] int order() const noexcept { return order_; }
    [[nodiscard]] std::size_t d() const noexcept { return d_; }
    [[nodiscard]] std::size_t j_max() const noexcept { return j_max_; }
    [[nodiscard]] Provenance provenance() const noexcept { return provenance_; }
    [[nodiscard]] EstimateStatus status() const noexcept { return status_; }
    [[nodiscard]] const std::vector<CoefficientEntry>& entries() const noexcept { return entries_; }

    [[nodiscard]] double at(const std::vector<std::size_t>& tuple) const {
        for (const auto& e : entries_)
            if (e.tuple == tuple) return e.value;
        return 0.0;
    }

    /// Drops coefficients that are zero: exactly zero for closed forms,
    /// within max(3 SE, 1e-8) of zero for Monte Carlo estimates.
    [[nodiscard]] ExpansionCoefficients pruned() const {
        std::vector<CoefficientEntry> kept;
        for (const auto& e : entries_) {
            const bool keep = provenance_ == Provenance::closed_form ? e.value != 0.0
                                                                     : significantly_nonzero({e.value, e.se});
            if (keep) kept.push_back(e);
        }
        return {order_, d_, j_max_, provenance_, status_, std::move(kept)};
    }

    [[nodiscard]] ExpansionCoefficients scaled(double lambda) const {
        auto copy = entries_;
        for (auto& e : copy) {
            e.value *= lambda;
            e.se *= std::abs(lambda);
        }
        return {order_, d_, j_max_, provenance_, status_, std::move(copy)};
    }

    /// Columns: tuple (ages joined by ';'), value, se, provenance.
    [[nodiscard]] std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "tuple,value,se,provenance\n";
        for (const auto& e : entries_) {
            for (std::size_t k = 0; k < e.tuple.size(); ++k) os << (k ? ";" : "") << e.tuple[k];
            os << ',' << e.value << ',' << e.se << ',' << to_string(provenance_) << '\n';
        }
        return os.str();
    }

private:
    int order_;
    std::size_t d_;
    std::size_t j_max_;
    Provenance provenance_;
    EstimateStatus status_;
    std::vector<CoefficientEntry> entries_;
};

inline constexpr std::size_t kDefaultTupleCap = 64;
inline constexpr int kMaxExpansionOrder = 3;

/// b_{j1..jr} = sum_{u_1..u_r} A_{j1,u1} ... A_{jr,ur} d_{u1}..d_{ur} K_[j](0),
/// using the derivatives of the kernel's own level. Standard errors are
/// propagated conservatively (sum of absolute contributions).
[[nodiscard]] inline ExpansionCoefficients b_coeffs(const SmoothedKernel& kernel, int r, std::size_t j_max) {
    if (r < 1 || r > kMaxExpansionOrder)
        throw ConfigError("b_coeffs: order r must be in 1.." + std::to_string(kMaxExpansionOrder));
    const std::size_t d = kernel.filter().d();
    const std::size_t w = d + 1;
    const auto& model = kernel.process().model();
    const std::size_t cap = std::min(j_max, kernel.level());
    if (cap < static_cast<std::size_t>(r)) return {r, d, cap, kernel.provenance(), EstimateStatus::ok, {}};
    double count = 1.0;
    for (int k = 0; k < r; ++k) count = count * static_cast<double>(cap - static_cast<std::size_t>(k)) / (k + 1);
    if (count > 5.0e7) throw ConfigError("b_coeffs: " + std::to_string(count) + " tuples exceed the enumeration cap");

    std::map<MultiIndex, DerivativeEstimate> deriv;
    EstimateStatus status = EstimateStatus::ok;
    for (const auto& i : multi_indices(w, r)) {
        deriv[i] = kernel.derivative(i);
        if (deriv[i].status != EstimateStatus::ok) status = deriv[i].status;
    }

    // Assignments u_1..u_r of window components to the tuple positions.
    std::vector<std::vector<std::size_t>> assignments;
    std::vector<const DerivativeEstimate*> assignment_deriv;
    {
        std::vector<std::size_t> u(static_cast<std::size_t>(r), 0);
        for (;;) {
            MultiIndex counts(w, 0);
            for (std::size_t s : u) counts[s] += 1;
            const auto& dv = deriv.at(counts);
            if (dv.estimate.value != 0.0 || dv.estimate.se != 0.0) {
                assignments.push_back(u);
                assignment_deriv.push_back(&dv);
            }
            std::size_t pos = 0;
            while (pos < u.size() && ++u[pos] == w) u[pos++] = 0;
            if (pos == u.size()) break;
        }
    }

    std::vector<std::vector<double>> dirs(cap + 1);
    for (std::size_t j = 1; j <= cap; ++j) dirs[j] = age_direction(model, d, j);

    std::vector<CoefficientEntry> entries;
    std::vector<std::size_t> tuple(static_cast<std::size_t>(r));
    for (std::size_t k = 0; k < tuple.size(); ++k) tuple[k] = k + 1;
    for (;;) {
        std::map<const DerivativeEstimate*, double> weight;
        for (std::size_t a = 0; a < assignments.size(); ++a) {
            double prod = 1.0;
            for (std::size_t s = 0; s < tuple.size() && prod != 0.0; ++s) prod *= dirs[tuple[s]][assignments[a][s]];
            if (prod != 0.0) weight[assignment_deriv[a]] += prod;
        }
        double value = 0.0, se = 0.0;
        for (const auto& [dv, c] : weight) {
            value += c * dv->estimate.value;
            se += std::abs(c) * dv->estimate.se;
        }
        entries.push_back({tuple, value, se});
        // Next strictly increasing tuple in lexicographic order.
        std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(tuple.size()) - 1;
        while (pos >= 0 && tuple[static_cast<std::size_t>(pos)] == cap - (tuple.size() - 1 - static_cast<std::size_t>(pos)))
            --pos;
        if (pos < 0) break;
        ++tuple[static_cast<std::size_t>(pos)];
        for (std::size_t k = static_cast<std::size_t>(pos) + 1; k < tuple.size(); ++k) tuple[k] = tuple[k - 1] + 1;
    }
    return {r, d, cap, kernel.provenance(), status, std::move(entries)};
}

// ------------------------------------------------------------ expansion terms

namespace detail {

inline void check_term_window(const SeriesSample& sample, std::size_t d, std::size_t j_max, std::size_t n) {
    if (n + d > sample.size())
        throw ConfigError("expansion terms: N=" + std::to_string(n) + " with d=" + std::to_string(d) +
                          " needs a series of length " + std::to_string(n + d) + ", got " +
                          std::to_string(sample.size()));
    if (j_max > sample.horizon() + d)
        throw ConfigError("expansion terms: ages up to " + std::to_string(j_max) +
                          " need an innovation window starting at time " +
                          std::to_string(static_cast<std::ptrdiff_t>(d) - static_cast<std::ptrdiff_t>(j_max)) +
                          ", retained window starts at " + std::to_string(sample.first_innovation_time()));
}

}  // namespace detail

/// z_t = sum over tuples of b_{j1..jr} prod_s eps_{t+d-j_s}, for t in [0, N).
[[nodiscard]] inline std::vector<double> expansion_term_series(const ExpansionCoefficients& coeffs,
                                                               const SeriesSample& sample, std::size_t n) {
    const std::size_t d = coeffs.d();
    detail::check_term_window(sample, d, coeffs.j_max(), n);
    std::vector<double> out(n, 0.0);
    if (coeffs.entries().empty()) return out;
    const auto eps = sample.innovation_window();
    const std::size_t base = sample.horizon() + d;  // window index of time t + d at t = 0
    if (coeffs.order() == 1) {
        std::vector<double> taps(coeffs.j_max(), 0.0);
        for (const auto& e : coeffs.entries()) taps[e.tuple[0] - 1] = e.value;
        return MovingAverage(std::move(taps)).apply(eps, base, n);
    }
    for (std::size_t t = 0; t < n; ++t) {
        double acc = 0.0;
        for (const auto& e : coeffs.entries()) {
            double prod = e.value;
            for (std::size_t j : e.tuple) prod *= eps[base + t - j];
            acc += prod;
        }
        out[t] = acc;
    }
    return out;
}

/// Z_{N,r} = sum_{t<N} z_t.
[[nodiscard]] inline double znr(const ExpansionCoefficients& coeffs, const SeriesSample& sample, std::size_t n) {
    double s = 0.0;
    for (double z : expansion_term_series(coeffs, sample, n)) s += z;
    return s;
}

/// The d+1 window components of X_{t,l}: component v keeps the ages u <= l,
/// i.e. the first l-(d+1-v) coefficients of X_{t+v-1}. Returns a row-major
/// N x (d+1) array.
[[nodiscard]] inline std::vector<double> truncated_windows(const SeriesSample& sample, const CoefficientModel& model,
                                                           std::size_t d, std::size_t level, std::size_t n) {
    if (n + d > sample.size()) throw ConfigError("truncated windows: series too short");
    const std::size_t w = d + 1;
    const std::size_t m = model.horizon();
    std::size_t support = 0;
    for (std::size_t i = 1; i <= m; ++i)
        if (model.a(static_cast<std::ptrdiff_t>(i)) != 0.0) support = i;
    std::vector<double> out(n * w, 0.0);
    const auto values = sample.values();
    const auto eps = sample.innovation_window();
    for (std::size_t v = 1; v <= w; ++v) {
        const std::size_t keep = level + v > d + 1 ? std::min(m, level + v - (d + 1)) : 0;
        if (keep >= support) {
            for (std::size_t t = 0; t < n; ++t) out[t * w + v - 1] = values[t + v - 1];
            continue;
        }
        if (keep == 0) continue;
        const auto taps = model.taps().subspan(0, keep);
        const auto series = MovingAverage(std::vector<double>(taps.begin(), taps.end())).apply(eps, m + v - 1, n);
        for (std::size_t t = 0; t < n; ++t) out[t * w + v - 1] = series[t];
    }
    return out;
}

/// Everything needed to form T_t(p, l) = K(X_{t,l}) - K_[l](0) - sum_{r<=p} z^{(l)}_{t,r}.
/// At level infinity the windows are the generated ones and the sum over t
/// is Q_{N,p}; at a finite level it is Q_{N,p,l}.
struct CorrectionOptions {
    SmoothingOptions smoothing{};
    MeanOptions mean{};
    std::size_t tuple_cap = kDefaultTupleCap;  // j_max for orders r >= 2
};

class CorrectedSum {
public:
    CorrectedSum(FilterSpec filter, Process process, int p, std::size_t level = kInfinity, CorrectionOptions opt = {})
        : filter_(std::move(filter)), process_(std::move(process)), p_(p) {
        if (p < 0) throw ConfigError("corrected sum: p must be >= 0");
        if (p > kMaxExpansionOrder)
            throw ConfigError("corrected sum: p must be <= " + std::to_string(kMaxExpansionOrder));
        const std::size_t horizon = age_horizon(process_.model(), filter_.d());
        if (level != kInfinity && level > horizon)
            throw ConfigError("corrected sum: truncation level " + std::to_string(level) + " exceeds the horizon M+d=" +
                              std::to_string(horizon));
        level_ = std::min(level, horizon);
        mean_ = smoothed_mean(filter_, process_, level_, opt.mean);
        if (p_ >= 1) {
            const SmoothedKernel kernel(filter_, process_, level_, opt.smoothing);
            for (int r = 1; r <= p_; ++r) {
                const std::size_t cap = r == 1 ? level_ : std::min(opt.tuple_cap, level_);
                auto full = b_coeffs(kernel, r, cap);
                coeffs_.push_back(full.pruned());
            }
        }
    }

    [[nodiscard]] const FilterSpec& filter() const noexcept { return filter_; }
    [[nodiscard]] const Process& process() const noexcept { return process_; }
    [[nodiscard]] int p() const noexcept { return p_; }
    [[nodiscard]] std::size_t level() const noexcept { return level_; }
    [[nodiscard]] bool truncated() const noexcept { return level_ < age_horizon(process_.model(), filter_.d()); }
    [[nodiscard]] const FilterMean& mean() const noexcept { return mean_; }
    [[nodiscard]] const std::vector<ExpansionCoefficients>& coefficients() const noexcept { return coeffs_; }

    /// T_t for t in [0, N).
    [[nodiscard]] std::vector<double> terms(const SeriesSample& sample, std::size_t n) const {
        std::vector<double> out(n);
        if (!truncated()) {
            if (n + filter_.d() > sample.size()) throw ConfigError("corrected sum: series too short for N");
            const auto k = bel::apply(filter_, sample.values().subspan(0, n + filter_.d()));
            for (std::size_t t = 0; t < n; ++t) out[t] = k[t] - mean_.value();
        } else {
            const std::size_t w = filter_.width();
            const auto win = truncated_windows(sample, process_.model(), filter_.d(), level_, n);
            for (std::size_t t = 0; t < n; ++t) {
                const double v = filter_(std::span<const double>(win.data() + t * w, w));
                if (!std::isfinite(v))
                    throw NumericError("corrected sum: non-finite filter value at window " + std::to_string(t));
                out[t] = v - mean_.value();
            }
        }
        for (const auto& c : coeffs_) {
            if (c.entries().empty()) continue;
            const auto z = expansion_term_series(c, sample, n);
            for (std::size_t t = 0; t < n; ++t) out[t] -= z[t];
        }
        return out;
    }

    [[nodiscard]] double sum(const SeriesSample& sample, std::size_t n) const {
        double s = 0.0;
        for (double v : terms(sample, n)) s += v;
        return s;
    }

private:
    FilterSpec filter_;
    Process process_;
    int p_;
    std::size_t level_ = 0;
    FilterMean mean_;
    std::vector<ExpansionCoefficients> coeffs_;
};

/// Q_{N,p} = sum_t K(window_t) - N * mean - sum_{r=1}^{p} Z_{N,r}.
[[nodiscard]] inline double qnp(const FilterSpec& filter, const std::vector<ExpansionCoefficients>& coeffs,
                                const SeriesSample& sample, int p, double mean, std::size_t n) {
    if (p < 0) throw ConfigError("qnp: p must be >= 0");
    if (static_cast<std::size_t>(p) > coeffs.size())
        throw ConfigError("qnp: coefficient tables for orders 1.." + std::to_string(p) + " required");
    double s = qn(filter, sample.values().subspan(0, n + filter.d()), mean);
    for (int r = 1; r <= p; ++r) s -= znr(coeffs[static_cast<std::size_t>(r - 1)], sample, n);
    return s;
}

/// Q_{N,p,l}: l-truncated windows, centering K_[l](0), coefficients of K_[l].
[[nodiscard]] inline double qnp_truncated(const FilterSpec& filter, const std::vector<ExpansionCoefficients>& coeffs,
                                          const SeriesSample& sample, const CoefficientModel& model, int p,
                                          std::size_t level, double mean_level, std::size_t n) {
    if (p < 0) throw ConfigError("qnp_truncated: p must be >= 0");
    if (level > age_horizon(model, filter.d()))
        throw ConfigError("qnp_truncated: truncation level " + std::to_string(level) + " exceeds the horizon M+d=" +
                          std::to_string(age_horizon(model, filter.d())));
    if (static_cast<std::size_t>(p) > coeffs.size())
        throw ConfigError("qnp_truncated: coefficient tables for orders 1.." + std::to_string(p) + " required");
    for (int r = 1; r <= p; ++r)
        if (coeffs[static_cast<std::size_t>(r - 1)].j_max() > level)
            throw ConfigError("qnp_truncated: coefficient table of order " + std::to_string(r) +
                              " uses ages beyond the truncation level");
    const std::size_t w = filter.width();
    const auto win = truncated_windows(sample, model, filter.d(), level, n);
    double s = 0.0;
    for (std::size_t t = 0; t < n; ++t) s += filter(std::span<const double>(win.data() + t * w, w)) - mean_level;
    for (int r = 1; r <= p; ++r) s -= znr(coeffs[static_cast<std::size_t>(r - 1)], sample, n);
    return s;
}

// -------------------------------------------------------- martingale terms

/// K_[0], ..., K_[J] for one filter and process.
class KernelLadder {
public:
    KernelLadder(const FilterSpec& filter, const Process& process, std::size_t top, SmoothingOptions opt = {}) {
        const std::size_t horizon = age_horizon(process.model(), filter.d());
        top = std::min(top, horizon);
        levels_.reserve(top + 1);
        for (std::size_t j = 0; j <= top; ++j) {
            SmoothingOptions o = opt;
            o.seed = derive_seed(opt.seed, {stream::smoothing, j});
            levels_.emplace_back(filter, process, j, o);
        }
    }

    [[nodiscard]] std::size_t top() const noexcept { return levels_.size() - 1; }
    [[nodiscard]] const SmoothedKernel& operator[](std::size_t j) const { return levels_.at(j); }

private:
    std::vector<SmoothedKernel> levels_;
};

/// Window of X~_{t,j}: component v = sum_{u>j} A_{u,v} eps_{t+d-u}.
[[nodiscard]] inline std::vector<double> remote_window(const SeriesSample& sample, const CoefficientModel& model,
                                                       std::size_t d, std::size_t t, std::size_t j) {
    const std::size_t horizon = age_horizon(model, d);
    if (t + d >= sample.size()) throw ConfigError("remote window: window start beyond the series");
    const auto eps = sample.innovation_window();
    const std::size_t base = sample.horizon() + t + d;
    std::vector<double> x(d + 1, 0.0);
    for (std::size_t u = j + 1; u <= horizon; ++u) {
        if (u > base) throw ConfigError("remote window: innovations before the retained window are missing");
        const double e = eps[base - u];
        for (std::size_t v = 1; v <= d + 1; ++v) x[v - 1] += lag_weight(model, d, u, v) * e;
    }
    return x;
}

/// K_[j-1](X~_{t,j-1}) - K_[j](X~_{t,j}) for j >= 1.
[[nodiscard]] inline Estimate martingale_term(const KernelLadder& ladder, const SeriesSample& sample, std::size_t t,
                                              std::size_t j) {
    if (j == 0) throw ConfigError("martingale term: j must be >= 1");
    const std::size_t horizon = age_horizon(ladder[0].process().model(), ladder[0].filter().d());
    if (j > horizon) return {0.0, 0.0};
    if (j > ladder.top()) throw ConfigError("martingale term: ladder stops at level " + std::to_string(ladder.top()));
    const auto& model = ladder[0].process().model();
    const std::size_t d = ladder[0].filter().d();
    const Estimate hi = ladder[j - 1](remote_window(sample, model, d, t, j - 1));
    const Estimate lo = ladder[j](remote_window(sample, model, d, t, j));
    return {hi.value - lo.value, std::hypot(hi.se, lo.se)};
}

}  // namespace bel
