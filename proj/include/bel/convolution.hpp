#pragma once

#include "bel/core.hpp"

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

namespace bel {

enum class ConvolutionPath { automatic, direct, fft };

namespace detail {

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double[], FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

inline RealBuffer alloc_real(std::size_t n) { return RealBuffer(fftw_alloc_real(n)); }
inline ComplexBuffer alloc_complex(std::size_t n) { return ComplexBuffer(fftw_alloc_complex(n)); }

// The FFTW planner is not reentrant; plans are created once per size and
// executed through the new-array interface, which is thread-safe.
struct RealPlans {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
};

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

inline const RealPlans& plans_for(std::size_t n) {
    static std::map<std::size_t, RealPlans> cache;
    std::lock_guard lock(planner_mutex());
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    auto in = alloc_real(n);
    auto out = alloc_complex(n / 2 + 1);
    RealPlans p;
    const int len = static_cast<int>(n);
    p.forward = fftw_plan_dft_r2c_1d(len, in.get(), out.get(), FFTW_ESTIMATE);
    p.backward = fftw_plan_dft_c2r_1d(len, out.get(), in.get(), FFTW_ESTIMATE);
    return cache.emplace(n, p).first->second;
}

/// Smallest 2^a 3^b 5^c >= n.
inline std::size_t fast_size(std::size_t n) {
    std::size_t best = std::size_t{1};
    while (best < n) best <<= 1;
    for (std::size_t p5 = 1; p5 < best; p5 *= 5)
        for (std::size_t p35 = p5; p35 < best; p35 *= 3) {
            std::size_t v = p35;
            while (v < n) v <<= 1;
            best = std::min(best, v);
        }
    return best;
}

inline void forward(std::size_t n, double* in, fftw_complex* out) {
    fftw_execute_dft_r2c(plans_for(n).forward, in, out);
}

inline void backward(std::size_t n, fftw_complex* in, double* out) {
    fftw_execute_dft_c2r(plans_for(n).backward, in, out);
}

}  // namespace detail

/// Causal moving-average filter with taps a_1..a_m (no a_0 term):
///   out[t] = sum_{i=1}^{m} a_i * input[offset + t - i],  t in [0, n).
/// The transform path caches the tap spectrum per transform size.
class MovingAverage {
public:
    explicit MovingAverage(std::vector<double> taps) : taps_(std::move(taps)) {
        for (double a : taps_)
            if (!std::isfinite(a)) throw NumericError("moving average: non-finite coefficient");
    }

    [[nodiscard]] std::span<const double> taps() const noexcept { return taps_; }

    /// Direct O(n*m) evaluation. Summation runs over i = 1..m in order.
    [[nodiscard]] std::vector<double> direct(std::span<const double> input, std::size_t offset,
                                             std::size_t n) const {
        check(input, offset, n);
        std::vector<double> out(n, 0.0);
        const std::size_t m = taps_.size();
        for (std::size_t t = 0; t < n; ++t) {
            const double* base = input.data() + offset + t;
            double acc = 0.0;
            for (std::size_t i = 1; i <= m; ++i) acc += taps_[i - 1] * base[-static_cast<std::ptrdiff_t>(i)];
            out[t] = acc;
        }
        return out;
    }

    /// Circular convolution of size L >= offset + n; no wrap-around reaches
    /// the requested outputs because offset >= m.
    [[nodiscard]] std::vector<double> transform(std::span<const double> input, std::size_t offset,
                                                std::size_t n) const {
        check(input, offset, n);
        const std::size_t used = offset + n;
        const std::size_t size = detail::fast_size(std::max(used, taps_.size() + 1));
        const std::size_t bins = size / 2 + 1;
        const auto spectrum = tap_spectrum(size);

        auto buf = detail::alloc_real(size);
        auto freq = detail::alloc_complex(bins);
        std::fill(buf.get(), buf.get() + size, 0.0);
        std::copy(input.begin(), input.begin() + static_cast<std::ptrdiff_t>(used), buf.get());
        detail::forward(size, buf.get(), freq.get());
        for (std::size_t k = 0; k < bins; ++k) {
            const std::complex<double> x(freq[k][0], freq[k][1]);
            const std::complex<double> y = x * (*spectrum)[k];
            freq[k][0] = y.real();
            freq[k][1] = y.imag();
        }
        detail::backward(size, freq.get(), buf.get());
        const double scale = 1.0 / static_cast<double>(size);
        std::vector<double> out(n);
        for (std::size_t t = 0; t < n; ++t) out[t] = buf[offset + t] * scale;
        return out;
    }

    [[nodiscard]] std::vector<double> apply(std::span<const double> input, std::size_t offset, std::size_t n,
                                            ConvolutionPath path = ConvolutionPath::automatic) const {
        if (path == ConvolutionPath::automatic)
            path = taps_.size() <= 32 || static_cast<double>(n) * static_cast<double>(taps_.size()) <= 1048576.0
                       ? ConvolutionPath::direct
                       : ConvolutionPath::fft;
        return path == ConvolutionPath::direct ? direct(input, offset, n) : transform(input, offset, n);
    }

private:
    void check(std::span<const double> input, std::size_t offset, std::size_t n) const {
        if (offset < taps_.size())
            throw ConfigError("moving average: offset " + std::to_string(offset) + " shorter than filter length " +
                              std::to_string(taps_.size()));
        if (offset > input.size() || n > input.size() - offset)
            throw ConfigError("moving average: input of length " + std::to_string(input.size()) +
                              " too short, need " + std::to_string(offset + n));
    }

    using Spectrum = std::vector<std::complex<double>>;

    std::shared_ptr<const Spectrum> tap_spectrum(std::size_t size) const {
        std::lock_guard lock(cache_mutex_);
        auto it = spectra_.find(size);
        if (it != spectra_.end()) return it->second;
        auto buf = detail::alloc_real(size);
        auto freq = detail::alloc_complex(size / 2 + 1);
        std::fill(buf.get(), buf.get() + size, 0.0);
        std::copy(taps_.begin(), taps_.end(), buf.get() + 1);
        detail::forward(size, buf.get(), freq.get());
        auto spec = std::make_shared<Spectrum>(size / 2 + 1);
        for (std::size_t k = 0; k < spec->size(); ++k) (*spec)[k] = {freq[k][0], freq[k][1]};
        spectra_.emplace(size, spec);
        return spec;
    }

    std::vector<double> taps_;
    mutable std::mutex cache_mutex_;
    mutable std::map<std::size_t, std::shared_ptr<const Spectrum>> spectra_;
};

/// Unbiased lagged cross-products c(k) = (n-k)^{-1} sum_t z[t] z[t+k] for
/// k = 0..max_lag, via a zero-padded transform. The input is not re-centered.
[[nodiscard]] inline std::vector<double> lagged_products(std::span<const double> z, std::size_t max_lag) {
    const std::size_t n = z.size();
    if (max_lag >= n) throw ConfigError("lagged_products: max lag must be below series length");
    const std::size_t size = detail::fast_size(n + max_lag + 1);
    const std::size_t bins = size / 2 + 1;
    auto buf = detail::alloc_real(size);
    auto freq = detail::alloc_complex(bins);
    std::fill(buf.get(), buf.get() + size, 0.0);
    std::copy(z.begin(), z.end(), buf.get());
    detail::forward(size, buf.get(), freq.get());
    for (std::size_t k = 0; k < bins; ++k) {
        freq[k][0] = freq[k][0] * freq[k][0] + freq[k][1] * freq[k][1];
        freq[k][1] = 0.0;
    }
    detail::backward(size, freq.get(), buf.get());
    std::vector<double> out(max_lag + 1);
    for (std::size_t k = 0; k <= max_lag; ++k)
        out[k] = buf[k] / static_cast<double>(size) / static_cast<double>(n - k);
    return out;
}

}  // namespace bel
