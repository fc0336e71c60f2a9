#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "jumpdrift/grid.hpp"
#include "jumpdrift/kernels.hpp"
#include "jumpdrift/model.hpp"

namespace jumpdrift {

/// Anisotropic Hölder smoothness β = (β_1..β_d) with constants 𝓛.
class HolderParams {
public:
    explicit HolderParams(std::vector<double> beta, std::vector<double> L = {}) : beta_(std::move(beta)), L_(std::move(L)) {
        if (beta_.empty()) throw std::invalid_argument("HolderParams: empty smoothness vector");
        for (double b : beta_)
            if (!(b > 0.0)) throw std::invalid_argument("HolderParams: every beta_i must be positive");
        if (L_.empty()) L_.assign(beta_.size(), 1.0);
        if (L_.size() != beta_.size()) throw std::invalid_argument("HolderParams: L and beta differ in length");
    }

    static HolderParams isotropic(std::size_t d, double beta) { return HolderParams(std::vector<double>(d, beta)); }

    const std::vector<double>& beta() const { return beta_; }
    const std::vector<double>& L() const { return L_; }
    std::size_t dim() const { return beta_.size(); }

    /// β̄ = d / Σ β_i^{-1}
    double beta_bar() const {
        double s = 0.0;
        for (double b : beta_) s += 1.0 / b;
        return static_cast<double>(beta_.size()) / s;
    }

private:
    std::vector<double> beta_;
    std::vector<double> L_;
};

inline double rate_exponent(const HolderParams& p, std::size_t d) {
    const double bb = p.beta_bar();
    return bb / (2.0 * bb + static_cast<double>(d));
}

inline double phi(double T, std::size_t d, double beta_bar) {
    if (!(T >= 3.0)) throw std::invalid_argument("phi: T must be >= 3");
    const double lt = std::log(T);
    if (d <= 2) return lt / std::sqrt(T);
    return std::pow(lt / T, beta_bar / (2.0 * beta_bar + static_cast<double>(d) - 2.0));
}

inline double phi(double T, std::size_t d, const HolderParams& p) { return phi(T, d, p.beta_bar()); }

/// sup over the grid of |f - f * K_h| for a known target f, with the
/// convolution computed by tensorized Gauss–Legendre on the kernel pieces
/// (at least 64 nodes per axis).
inline double bias_oracle(const ScalarField& target, const KernelSpec& k, const Bandwidth& h, const EvaluationGrid& grid) {
    using Q = boost::math::quadrature::gauss<double, 32>;
    const std::size_t d = h.dim();
    if (grid.dim != d) throw std::invalid_argument("bias_oracle: dimension mismatch");

    // 1-D rule for u ↦ h^{-1} k(u/h) on its support, as (node, weight·kernel value)
    std::vector<std::vector<std::pair<double, double>>> rules(d);
    const auto& br = k.shape.breaks();
    const std::size_t pieces = br.size() - 1;
    const std::size_t sub = std::max<std::size_t>(1, (64 + 32 * pieces - 1) / (32 * pieces));
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t p = 0; p < pieces; ++p) {
            const double a = br[p], b = br[p + 1];
            for (std::size_t s = 0; s < sub; ++s) {
                const double lo = a + (b - a) * static_cast<double>(s) / static_cast<double>(sub);
                const double hi = a + (b - a) * static_cast<double>(s + 1) / static_cast<double>(sub);
                const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
                const auto& ab = Q::abscissa();
                const auto& wt = Q::weights();
                for (std::size_t q = 0; q < ab.size(); ++q) {
                    for (int sign : {-1, 1}) {
                        if (ab[q] == 0.0 && sign == 1) continue;
                        const double v = mid + sign * half * ab[q];
                        // substitute u = h v: ∫ h^{-1}k(u/h) f(x-u) du = ∫ k(v) f(x - h v) dv
                        rules[i].emplace_back(h[i] * v, half * wt[q] * k.shape.piece_value(p, v));
                    }
                }
            }
        }
    }

    double worst = 0.0;
    std::vector<double> y(d);
    std::vector<std::size_t> idx(d);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto x = grid.point(g);
        double conv = 0.0;
        std::fill(idx.begin(), idx.end(), 0);
        for (;;) {
            double w = 1.0;
            for (std::size_t i = 0; i < d; ++i) {
                y[i] = x[i] - rules[i][idx[i]].first;
                w *= rules[i][idx[i]].second;
            }
            conv += w * target(y);
            std::size_t i = 0;
            while (i < d && ++idx[i] == rules[i].size()) idx[i++] = 0;
            if (i == d) break;
        }
        worst = std::max(worst, std::abs(target(x) - conv));
    }
    return worst;
}

}  // namespace jumpdrift
