#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jumpdrift/errors.hpp"
#include "jumpdrift/polynomial.hpp"

namespace jumpdrift {

/// Symmetric kernel of order `order` supported on [-1/2, 1/2].
struct KernelSpec {
    int order = 1;
    PiecewisePolynomial shape;
    double lipschitz_const = 0.0;
    double sup_norm = 0.0;
    double l1_norm = 0.0;
    /// Quadrature residuals recorded at construction: index 0 is ∫k - 1, index i is ∫x^i k.
    std::vector<double> moment_residuals;

    double operator()(double x) const { return shape(x); }

    /// ‖K‖_∞ of the d-fold product kernel.
    double product_sup_norm(std::size_t dim) const { return std::pow(sup_norm, static_cast<double>(dim)); }
};

namespace detail {

/// Composite 20-point Gauss–Legendre over each piece split into `sub` cells;
/// independent of the exact polynomial integrals used to build the kernel.
inline double quad_piecewise(const PiecewisePolynomial& f, const std::function<double(double)>& weight, int sub = 16) {
    using Q = boost::math::quadrature::gauss<double, 20>;
    double acc = 0.0;
    const auto& b = f.breaks();
    for (std::size_t i = 0; i + 1 < b.size(); ++i) {
        const double w = (b[i + 1] - b[i]) / sub;
        for (int s = 0; s < sub; ++s) {
            const double lo = b[i] + s * w;
            acc += Q::integrate([&](double x) { return f.piece_value(i, x) * weight(x); }, lo, lo + w);
        }
    }
    return acc;
}

inline PiecewisePolynomial triangle_shape() {
    // k(x) = 2 (1 - 2|x|)_+
    return PiecewisePolynomial({-0.5, 0.0, 0.5}, {Polynomial({2.0, 4.0}), Polynomial({2.0, -4.0})});
}

/// k(x) = p(x) (1 - 4x^2) on [-1/2, 1/2], p even, with ∫ x^{2j} k = δ_{j0}
/// for every even 2j <= order.
inline PiecewisePolynomial weighted_legendre_shape(int order) {
    const int m = order / 2;
    const int n = m + 1;
    // ∫_{-1/2}^{1/2} x^{2q} (1 - 4x^2) dx
    auto wmoment = [](int q) {
        return std::pow(0.5, 2 * q) * (1.0 / (2 * q + 1) - 1.0 / (2 * q + 3));
    };
    Eigen::MatrixXd a(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(0) = 1.0;
    for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) a(j, l) = wmoment(j + l);
    const Eigen::VectorXd c = a.fullPivLu().solve(rhs);
    std::vector<double> p(static_cast<std::size_t>(2 * m + 1), 0.0);
    for (int l = 0; l < n; ++l) p[static_cast<std::size_t>(2 * l)] = c(l);
    const Polynomial k = Polynomial(std::move(p)) * Polynomial({1.0, 0.0, -4.0});
    return PiecewisePolynomial({-0.5, 0.5}, {k});
}

}  // namespace detail

/// Builds the order-`order` kernel and verifies its defining properties by quadrature.
inline KernelSpec make_kernel(int order) {
    if (order < 1) throw std::invalid_argument("make_kernel: order must be >= 1");
    KernelSpec k;
    k.order = order;
    k.shape = order == 1 ? detail::triangle_shape() : detail::weighted_legendre_shape(order);

    const double mass = detail::quad_piecewise(k.shape, [](double) { return 1.0; });
    k.moment_residuals.push_back(mass - 1.0);
    if (std::abs(mass - 1.0) > 1e-10)
        throw KernelConstructionError("kernel mass differs from 1 by " + std::to_string(mass - 1.0), 0);
    for (int i = 1; i <= order; ++i) {
        const double mi = detail::quad_piecewise(k.shape, [i](double x) { return std::pow(x, i); });
        k.moment_residuals.push_back(mi);
        if (std::abs(mi) > 1e-8)
            throw KernelConstructionError("kernel moment " + std::to_string(i) + " does not vanish", i);
    }
    for (double x : {0.1, 0.2, 0.3, 0.45})
        if (std::abs(k(x) - k(-x)) > 1e-12 * (1.0 + std::abs(k(x))))
            throw KernelConstructionError("kernel is not symmetric", 0);

    // Lipschitz constant and sup norm: pieces are low-degree, a dense scan plus the breaks is exact enough.
    const auto& b = k.shape.breaks();
    for (std::size_t i = 0; i + 1 < b.size(); ++i) {
        const Polynomial dp = k.shape.pieces()[i].derivative();
        constexpr int kScan = 4000;
        for (int s = 0; s <= kScan; ++s) {
            const double x = b[i] + (b[i + 1] - b[i]) * s / kScan;
            k.lipschitz_const = std::max(k.lipschitz_const, std::abs(dp(x - k.shape.origin(i))));
            k.sup_norm = std::max(k.sup_norm, std::abs(k.shape.piece_value(i, x)));
        }
    }
    {
        // ∫|k| on a fine composite rule; |k| only kinks where k changes sign.
        using Q = boost::math::quadrature::gauss<double, 20>;
        double acc = 0.0;
        constexpr int cells = 512;
        const double lo = k.shape.support_lo(), w = (k.shape.support_hi() - lo) / cells;
        for (int s = 0; s < cells; ++s)
            acc += Q::integrate([&](double x) { return std::abs(k(x)); }, lo + s * w, lo + (s + 1) * w);
        k.l1_norm = acc;
    }
    return k;
}

/// Anisotropic multi-bandwidth h ∈ (0,1)^d.
class Bandwidth {
public:
    Bandwidth() = default;
    explicit Bandwidth(std::vector<double> h) : h_(std::move(h)) {
        if (h_.empty()) throw std::invalid_argument("Bandwidth: empty");
        for (double v : h_)
            if (!(v > 0.0 && v < 1.0))
                throw std::invalid_argument("Bandwidth: every component must lie in (0,1), got " + std::to_string(v));
    }

    std::size_t dim() const { return h_.size(); }
    double operator[](std::size_t i) const { return h_[i]; }
    const std::vector<double>& values() const { return h_; }

    double volume() const {
        double v = 1.0;
        for (double x : h_) v *= x;
        return v;
    }
    double inv_sum() const {
        double s = 0.0;
        for (double x : h_) s += 1.0 / x;
        return s;
    }
    double log_inv_sum() const { return std::log(inv_sum()); }

    friend bool operator==(const Bandwidth&, const Bandwidth&) = default;

private:
    std::vector<double> h_;
};

/// K_h(x) = Π h_i^{-1} k(x_i / h_i).
inline double eval_product(const KernelSpec& k, const Bandwidth& h, std::span<const double> x) {
    double v = 1.0;
    for (std::size_t i = 0; i < h.dim(); ++i) {
        v *= k(x[i] / h[i]) / h[i];
        if (v == 0.0) return 0.0;
    }
    return v;
}

/// A product kernel whose per-axis factors are stored as piecewise polynomials
/// in the raw coordinate, so they can be summed exactly against samples.
class AxisKernels {
public:
    AxisKernels() = default;
    explicit AxisKernels(std::vector<PiecewisePolynomial> axes) : axes_(std::move(axes)) {}

    static AxisKernels product(const KernelSpec& k, const Bandwidth& h) {
        std::vector<PiecewisePolynomial> a;
        for (std::size_t i = 0; i < h.dim(); ++i) a.push_back(k.shape.rescaled(h[i]));
        return AxisKernels(std::move(a));
    }

    /// Factors of K_h ⋆ K_η, each an exact 1-D convolution.
    static AxisKernels convolved(const KernelSpec& k, const Bandwidth& h, const Bandwidth& eta) {
        if (h.dim() != eta.dim()) throw std::invalid_argument("AxisKernels::convolved: dimension mismatch");
        std::vector<PiecewisePolynomial> a;
        for (std::size_t i = 0; i < h.dim(); ++i) a.push_back(convolve(k.shape.rescaled(h[i]), k.shape.rescaled(eta[i])));
        return AxisKernels(std::move(a));
    }

    std::size_t dim() const { return axes_.size(); }
    const PiecewisePolynomial& axis(std::size_t i) const { return axes_[i]; }

    double operator()(std::span<const double> x) const {
        double v = 1.0;
        for (std::size_t i = 0; i < axes_.size(); ++i) {
            v *= axes_[i](x[i]);
            if (v == 0.0) return 0.0;
        }
        return v;
    }

    int max_degree() const {
        int d = -1;
        for (const auto& a : axes_) d = std::max(d, a.max_degree());
        return d;
    }

private:
    std::vector<PiecewisePolynomial> axes_;
};

/// (K_h ⋆ K_η)(x) = Π_i (h_i^{-1} k(·/h_i)) * (η_i^{-1} k(·/η_i)) (x_i).
inline double eval_convolved(const KernelSpec& k, const Bandwidth& h, const Bandwidth& eta, std::span<const double> x) {
    return AxisKernels::convolved(k, h, eta)(x);
}

/// Membership test for the continuous bandwidth class H_T.
inline std::function<bool(const Bandwidth&)> grid_HT(double T, std::size_t d) {
    if (!(T >= 3.0)) throw std::invalid_argument("grid_HT: T must be >= 3");
    return [T, d](const Bandwidth& h) {
        if (h.dim() != d) return false;
        const double cap = 1.0 / std::log1p(T);
        for (double v : h.values())
            if (!(v > 0.0 && v < 1.0) || v > cap) return false;
        return h.volume() >= std::pow(T, -0.5) * std::pow(h.log_inv_sum(), 4.0);
    };
}

/// Same check for raw vectors (so h = (1.0,) can be tested without constructing a Bandwidth).
inline bool in_HT(double T, std::span<const double> h) {
    for (double v : h)
        if (!(v > 0.0 && v < 1.0)) return false;
    return grid_HT(T, h.size())(Bandwidth(std::vector<double>(h.begin(), h.end())));
}

/// Rule generating the dyadic-type candidate set. literal() is exactly the
/// candidate set of the adaptive procedure; relaxed() drops the log factors
/// (kept only for desk-scale horizons where the literal set is empty).
struct CandidateGridRule {
    double iota = 2.0;
    double log_power = 4.0;
    bool cap_by_log = true;
    double max_h = 1.0;  // candidates satisfy h_i <= max_h (and h_i < 1)

    static CandidateGridRule literal(double iota = 2.0) { return {iota, 4.0, true, 1.0}; }
    static CandidateGridRule relaxed(double iota = 2.0) { return {iota, 0.0, false, 0.5}; }
    bool is_literal() const { return log_power == 4.0 && cap_by_log && max_h >= 1.0; }
};

/// Enumerates h = (ι^{-k_1}, …, ι^{-k_d}) with ι^{Σk} log(Σ ι^{k_i})^{p} <= T^{1/2}.
inline std::vector<Bandwidth> grid_scriptHT(double T, std::size_t d, const CandidateGridRule& rule = {}) {
    if (!(T >= 3.0)) throw std::invalid_argument("grid_scriptHT: T must be >= 3");
    if (!(rule.iota > 1.0)) throw std::invalid_argument("grid_scriptHT: iota must be > 1");
    if (d == 0) throw std::invalid_argument("grid_scriptHT: dimension must be >= 1");
    const double iota = rule.iota;
    const double root_t = std::sqrt(T);
    const double cap = rule.cap_by_log ? 1.0 / std::log1p(T) : 1.0;

    auto lhs = [&](const std::vector<int>& k) {
        double sum_k = 0.0, sum_pow = 0.0;
        for (int v : k) {
            sum_k += v;
            sum_pow += std::pow(iota, v);
        }
        const double lg = std::log(sum_pow);
        return std::pow(iota, sum_k) * (rule.log_power == 0.0 ? 1.0 : std::pow(lg, rule.log_power));
    };
    auto h_ok = [&](int k) {
        const double h = std::pow(iota, -k);
        return h < 1.0 && h <= rule.max_h && (rule.cap_by_log ? h < cap : true);
    };

    int k_lo = 1;
    while (!h_ok(k_lo) && k_lo < 400) ++k_lo;
    int k_hi = k_lo;
    while (k_hi < 400 && lhs(std::vector<int>{k_hi + 1}) <= root_t) ++k_hi;

    std::vector<Bandwidth> out;
    std::vector<int> k(d, k_lo);
    for (;;) {
        bool ok = true;
        for (int v : k) ok = ok && h_ok(v);
        if (ok && lhs(k) <= root_t) {
            std::vector<double> h(d);
            for (std::size_t i = 0; i < d; ++i) h[i] = std::pow(iota, -k[i]);
            out.emplace_back(std::move(h));
        }
        std::size_t i = 0;
        while (i < d && ++k[i] > k_hi) k[i++] = k_lo;
        if (i == d) break;
    }
    if (out.empty())
        throw EmptyGridError("candidate bandwidth set is empty at T=" + std::to_string(T) +
                             "; the horizon is too small for this grid rule, use a larger T");
    return out;
}

}  // namespace jumpdrift
