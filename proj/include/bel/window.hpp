#pragma once

// Geometry of (d+1)-lag windows in innovation-age coordinates.
//
// For a window starting at time t, the innovation eps_{t+d-u} has "age" u
// and enters component v (1-based) with weight A_{u,v} = a_{u-(d+1-v)},
// which vanishes when u - (d+1-v) <= 0. Generated windows only involve ages
// up to M + d.

#include "bel/core.hpp"
#include "bel/linproc.hpp"
#include "bel/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace bel {

[[nodiscard]] inline double lag_weight(const CoefficientModel& model, std::size_t d, std::size_t u, std::size_t v) {
    return model.a(static_cast<std::ptrdiff_t>(u) - static_cast<std::ptrdiff_t>(d + 1 - v));
}

/// The column A_u = (A_{u,1}, ..., A_{u,d+1}).
[[nodiscard]] inline std::vector<double> age_direction(const CoefficientModel& model, std::size_t d, std::size_t u) {
    std::vector<double> col(d + 1);
    for (std::size_t v = 1; v <= d + 1; ++v) col[v - 1] = lag_weight(model, d, u, v);
    return col;
}

/// Largest age with a non-zero weight for a generated window.
[[nodiscard]] inline std::size_t age_horizon(const CoefficientModel& model, std::size_t d) noexcept {
    return model.horizon() + d;
}

/// Cov of sum_{u<=j} A_u eps_u.
[[nodiscard]] inline Eigen::MatrixXd perturbation_covariance(const Process& process, std::size_t d, std::size_t j) {
    const std::size_t w = d + 1;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(w));
    const std::size_t top = std::min(j, age_horizon(process.model(), d));
    for (std::size_t u = 1; u <= top; ++u) {
        const auto col = age_direction(process.model(), d, u);
        for (std::size_t a = 0; a < w; ++a)
            for (std::size_t b = 0; b < w; ++b)
                cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += col[a] * col[b];
    }
    return cov * process.innovations().variance();
}

/// Draws the perturbation sum_{u<=j} A_u eps_u. Gaussian innovations use the
/// exact covariance factor; other laws sum the j independent terms.
class PerturbationSampler {
public:
    PerturbationSampler(const Process& process, std::size_t d, std::size_t level)
        : innovations_(process.innovations()), d_(d), level_(std::min(level, age_horizon(process.model(), d))) {
        if (process.innovations().is_gaussian() && level_ > 0) {
            const Eigen::MatrixXd cov = perturbation_covariance(process, d, level_);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
            const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
            factor_ = eig.eigenvectors() * ev.cwiseSqrt().asDiagonal();
        } else {
            directions_.reserve(level_ * (d + 1));
            for (std::size_t u = 1; u <= level_; ++u) {
                const auto col = age_direction(process.model(), d, u);
                directions_.insert(directions_.end(), col.begin(), col.end());
            }
        }
    }

    [[nodiscard]] std::size_t level() const noexcept { return level_; }
    [[nodiscard]] std::size_t width() const noexcept { return d_ + 1; }

    void draw(Engine& eng, std::span<double> out) const {
        const std::size_t w = d_ + 1;
        std::fill(out.begin(), out.end(), 0.0);
        if (level_ == 0) return;
        if (factor_.size() > 0) {
            std::normal_distribution<double> nd(0.0, 1.0);
            Eigen::VectorXd z(static_cast<Eigen::Index>(w));
            for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = nd(eng);
            const Eigen::VectorXd x = factor_ * z;
            for (std::size_t k = 0; k < w; ++k) out[k] = x(static_cast<Eigen::Index>(k));
            return;
        }
        std::vector<double> eps(level_);
        innovations_.fill(eng, eps);
        for (std::size_t u = 0; u < level_; ++u)
            for (std::size_t k = 0; k < w; ++k) out[k] += directions_[u * w + k] * eps[u];
    }

private:
    InnovationSpec innovations_;
    std::size_t d_;
    std::size_t level_;
    Eigen::MatrixXd factor_;
    std::vector<double> directions_;
};

}  // namespace bel
