#pragma once

#include "bel/core.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace bel {

using MultiIndex = std::vector<int>;

[[nodiscard]] inline int total_order(const MultiIndex& i) noexcept {
    int s = 0;
    for (int v : i) s += v;
    return s;
}

/// All multi-indices of the given dimension and total order, in
/// lexicographically decreasing order ((s,0,..), (s-1,1,..), ...).
[[nodiscard]] inline std::vector<MultiIndex> multi_indices(std::size_t dim, int order) {
    std::vector<MultiIndex> out;
    MultiIndex cur(dim, 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int left) {
        if (pos + 1 == dim) {
            cur[pos] = left;
            out.push_back(cur);
            return;
        }
        for (int v = left; v >= 0; --v) {
            cur[pos] = v;
            rec(pos + 1, left - v);
        }
    };
    if (dim > 0 && order >= 0) rec(0, order);
    return out;
}

/// Sparse multivariate polynomial sum_i c_i x^i in a fixed number of variables.
class Polynomial {
public:
    explicit Polynomial(std::size_t vars = 1) : vars_(vars) {
        if (vars_ == 0) throw ConfigError("polynomial: needs at least one variable");
    }

    static Polynomial monomial(std::size_t vars, MultiIndex index, double coef = 1.0) {
        Polynomial p(vars);
        p.add(std::move(index), coef);
        return p;
    }

    Polynomial& add(MultiIndex index, double coef) {
        if (index.size() != vars_)
            throw ConfigError("polynomial: multi-index has " + std::to_string(index.size()) + " entries, expected " +
                              std::to_string(vars_));
        for (int e : index)
            if (e < 0) throw ConfigError("polynomial: negative exponent");
        if (!std::isfinite(coef)) throw NumericError("polynomial: non-finite coefficient");
        terms_[index] += coef;
        return *this;
    }

    [[nodiscard]] std::size_t vars() const noexcept { return vars_; }
    [[nodiscard]] const std::map<MultiIndex, double>& terms() const noexcept { return terms_; }

    [[nodiscard]] int degree() const noexcept {
        int d = 0;
        for (const auto& [i, c] : terms_)
            if (c != 0.0) d = std::max(d, total_order(i));
        return d;
    }

    [[nodiscard]] double coefficient(const MultiIndex& i) const {
        auto it = terms_.find(i);
        return it == terms_.end() ? 0.0 : it->second;
    }

    [[nodiscard]] double operator()(std::span<const double> x) const {
        if (x.size() != vars_) throw ConfigError("polynomial: wrong argument dimension");
        double s = 0.0;
        for (const auto& [i, c] : terms_) {
            double m = c;
            for (std::size_t v = 0; v < vars_; ++v)
                for (int e = 0; e < i[v]; ++e) m *= x[v];
            s += m;
        }
        return s;
    }

    /// Partial derivative d^i P evaluated at the origin: c_i * prod_v i_v!.
    [[nodiscard]] double derivative_at_zero(const MultiIndex& i) const {
        double f = coefficient(i);
        for (int e : i)
            for (int k = 2; k <= e; ++k) f *= k;
        return f;
    }

    /// x -> E P(x + A eps) given the raw moments E eps^k (moment(k)).
    template <class Moment>
    [[nodiscard]] Polynomial smooth_step(std::span<const double> direction, Moment&& moment) const {
        if (direction.size() != vars_) throw ConfigError("polynomial: wrong direction dimension");
        Polynomial out(vars_);
        MultiIndex taken(vars_, 0);
        for (const auto& [index, c] : terms_) {
            // Expand prod_v (x_v + A_v eps)^{e_v} over the number k_v of eps factors per variable.
            std::function<void(std::size_t, double, int)> rec = [&](std::size_t v, double w, int power) {
                if (v == vars_) {
                    const double mu = moment(power);
                    if (mu == 0.0 || w == 0.0) return;
                    MultiIndex rest(vars_);
                    for (std::size_t k = 0; k < vars_; ++k) rest[k] = index[k] - taken[k];
                    out.terms_[rest] += c * w * mu;
                    return;
                }
                double binom = 1.0, apow = 1.0;
                for (int k = 0; k <= index[v]; ++k) {
                    taken[v] = k;
                    rec(v + 1, w * binom * apow, power + k);
                    binom = binom * (index[v] - k) / (k + 1);
                    apow *= direction[v];
                }
                taken[v] = 0;
            };
            rec(0, 1.0, 0);
        }
        return out;
    }

    Polynomial& operator+=(const Polynomial& o) {
        if (o.vars_ != vars_) throw ConfigError("polynomial: dimension mismatch");
        for (const auto& [i, c] : o.terms_) terms_[i] += c;
        return *this;
    }

    Polynomial& operator*=(double s) {
        for (auto& [i, c] : terms_) c *= s;
        return *this;
    }

private:
    std::size_t vars_;
    std::map<MultiIndex, double> terms_;
};

}  // namespace bel
