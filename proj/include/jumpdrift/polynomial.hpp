#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace jumpdrift {

/// Dense polynomial in the monomial basis, coeffs[i] multiplies t^i.
class Polynomial {
public:
    Polynomial() = default;
    explicit Polynomial(std::vector<double> coeffs) : c_(std::move(coeffs)) { trim(); }

    int degree() const { return c_.empty() ? -1 : static_cast<int>(c_.size()) - 1; }
    const std::vector<double>& coeffs() const { return c_; }
    double coeff(std::size_t i) const { return i < c_.size() ? c_[i] : 0.0; }

    double operator()(double t) const {
        double acc = 0.0;
        for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * t + *it;
        return acc;
    }

    Polynomial derivative() const {
        if (c_.size() <= 1) return {};
        std::vector<double> d(c_.size() - 1);
        for (std::size_t i = 1; i < c_.size(); ++i) d[i - 1] = static_cast<double>(i) * c_[i];
        return Polynomial(std::move(d));
    }

    /// Antiderivative vanishing at 0.
    Polynomial antiderivative() const {
        std::vector<double> a(c_.size() + 1, 0.0);
        for (std::size_t i = 0; i < c_.size(); ++i) a[i + 1] = c_[i] / static_cast<double>(i + 1);
        return Polynomial(std::move(a));
    }

    double integrate(double lo, double hi) const {
        const Polynomial a = antiderivative();
        return a(hi) - a(lo);
    }

    /// p(s * t), i.e. the coefficients rescaled by s^i.
    Polynomial scaled_argument(double s) const {
        std::vector<double> r(c_);
        double f = 1.0;
        for (auto& v : r) {
            v *= f;
            f *= s;
        }
        return Polynomial(std::move(r));
    }

    Polynomial& operator*=(double s) {
        for (auto& v : c_) v *= s;
        trim();
        return *this;
    }

    friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
        if (a.c_.empty() || b.c_.empty()) return {};
        std::vector<double> r(a.c_.size() + b.c_.size() - 1, 0.0);
        for (std::size_t i = 0; i < a.c_.size(); ++i)
            for (std::size_t j = 0; j < b.c_.size(); ++j) r[i + j] += a.c_[i] * b.c_[j];
        return Polynomial(std::move(r));
    }

    friend Polynomial operator+(const Polynomial& a, const Polynomial& b) {
        std::vector<double> r(std::max(a.c_.size(), b.c_.size()), 0.0);
        for (std::size_t i = 0; i < a.c_.size(); ++i) r[i] += a.c_[i];
        for (std::size_t i = 0; i < b.c_.size(); ++i) r[i] += b.c_[i];
        return Polynomial(std::move(r));
    }

private:
    void trim() {
        while (!c_.empty() && c_.back() == 0.0) c_.pop_back();
    }

    std::vector<double> c_;
};

namespace detail {

inline double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

/// Coefficients of (t - c)^n in t.
inline std::vector<double> shifted_power(int n, double c) {
    std::vector<double> r(static_cast<std::size_t>(n) + 1);
    for (int s = 0; s <= n; ++s) r[static_cast<std::size_t>(s)] = binomial(n, s) * std::pow(-c, n - s);
    return r;
}

}  // namespace detail

/// Compactly supported function made of polynomial pieces on the half-open
/// intervals [breaks[i], breaks[i+1]); identically zero outside
/// [breaks.front(), breaks.back()). Piece i is a polynomial in t - origin(i);
/// origins default to 0, i.e. the global variable.
class PiecewisePolynomial {
public:
    PiecewisePolynomial() = default;

    PiecewisePolynomial(std::vector<double> breaks, std::vector<Polynomial> pieces, std::vector<double> origins = {})
        : breaks_(std::move(breaks)), pieces_(std::move(pieces)), origins_(std::move(origins)) {
        if (breaks_.size() != pieces_.size() + 1 || pieces_.empty())
            throw std::invalid_argument("PiecewisePolynomial: need one more break than pieces");
        for (std::size_t i = 1; i < breaks_.size(); ++i)
            if (!(breaks_[i] > breaks_[i - 1]))
                throw std::invalid_argument("PiecewisePolynomial: breaks must be strictly increasing");
        if (origins_.empty()) origins_.assign(pieces_.size(), 0.0);
        if (origins_.size() != pieces_.size()) throw std::invalid_argument("PiecewisePolynomial: need one origin per piece");
    }

    const std::vector<double>& breaks() const { return breaks_; }
    const std::vector<Polynomial>& pieces() const { return pieces_; }
    double origin(std::size_t i) const { return origins_[i]; }
    double support_lo() const { return breaks_.front(); }
    double support_hi() const { return breaks_.back(); }

    /// Piece i evaluated at t, ignoring its interval.
    double piece_value(std::size_t i, double t) const { return pieces_[i](t - origins_[i]); }

    int max_degree() const {
        int d = -1;
        for (const auto& p : pieces_) d = std::max(d, p.degree());
        return d;
    }

    double operator()(double t) const {
        if (pieces_.empty() || t < breaks_.front() || t >= breaks_.back()) return 0.0;
        const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
        return piece_value(static_cast<std::size_t>(it - breaks_.begin()) - 1, t);
    }

    /// Exact ∫ t^power f(t) dt over the support.
    double moment(int power) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < pieces_.size(); ++i) {
            const double o = origins_[i];
            // t^power = (τ + o)^power with τ = t - o
            const Polynomial mono(detail::shifted_power(power, -o));
            acc += (pieces_[i] * mono).integrate(breaks_[i] - o, breaks_[i + 1] - o);
        }
        return acc;
    }

    /// t -> s^{-1} f(t / s), the usual bandwidth scaling.
    PiecewisePolynomial rescaled(double s) const {
        std::vector<double> b(breaks_), o(origins_);
        for (auto& v : b) v *= s;
        for (auto& v : o) v *= s;
        std::vector<Polynomial> p;
        p.reserve(pieces_.size());
        for (const auto& q : pieces_) {
            Polynomial r = q.scaled_argument(1.0 / s);
            r *= 1.0 / s;
            p.push_back(std::move(r));
        }
        return PiecewisePolynomial(std::move(b), std::move(p), std::move(o));
    }

private:
    std::vector<double> breaks_;
    std::vector<Polynomial> pieces_;
    std::vector<double> origins_;
};

/// Convolution (f * g)(t) = ∫ f(u) g(t - u) du of two piecewise polynomials.
/// Each output piece has degree deg f + deg g + 1; it is sampled at Chebyshev
/// nodes of its interval, with the inner integral done by Gauss–Legendre rules
/// that are exact on every polynomial stretch of the integrand, and
/// interpolated about the interval midpoint.
inline PiecewisePolynomial convolve(const PiecewisePolynomial& f, const PiecewisePolynomial& g) {
    using GL = boost::math::quadrature::gauss<long double, 15>;
    std::vector<double> cuts;
    for (double a : f.breaks())
        for (double b : g.breaks()) cuts.push_back(a + b);
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> breaks;
    const double scale = std::max(std::abs(cuts.front()), std::abs(cuts.back()));
    for (double c : cuts)
        if (breaks.empty() || c - breaks.back() > 1e-13 * scale) breaks.push_back(c);
    const int deg = f.max_degree() + g.max_degree() + 1;
    if (2 * 15 - 1 < deg - 1) throw std::invalid_argument("convolve: degree too high for the quadrature rule");

    const auto& fb = f.breaks();
    const auto& gb = g.breaks();
    auto value_at = [&](long double t) {
        std::vector<long double> u(fb.begin(), fb.end());
        for (double b : gb) u.push_back(t - b);
        std::sort(u.begin(), u.end());
        const long double lo = std::max<long double>(fb.front(), t - gb.back());
        const long double hi = std::min<long double>(fb.back(), t - gb.front());
        long double acc = 0.0L;
        for (std::size_t i = 0; i + 1 < u.size(); ++i) {
            const long double a = std::max(u[i], lo), b = std::min(u[i + 1], hi);
            if (!(b > a)) continue;
            const long double m = 0.5L * (a + b);
            std::size_t fi = static_cast<std::size_t>(std::upper_bound(fb.begin(), fb.end(), static_cast<double>(m)) - fb.begin()) - 1;
            std::size_t gi = static_cast<std::size_t>(std::upper_bound(gb.begin(), gb.end(), static_cast<double>(t - m)) - gb.begin()) - 1;
            fi = std::min(fi, f.pieces().size() - 1);
            gi = std::min(gi, g.pieces().size() - 1);
            acc += GL::integrate(
                [&](long double x) {
                    return static_cast<long double>(f.piece_value(fi, static_cast<double>(x))) *
                           static_cast<long double>(g.piece_value(gi, static_cast<double>(t - x)));
                },
                a, b);
        }
        return acc;
    };

    const auto n = static_cast<std::size_t>(deg) + 1;
    std::vector<Polynomial> out;
    std::vector<double> origins;
    out.reserve(breaks.size() - 1);
    for (std::size_t seg = 0; seg + 1 < breaks.size(); ++seg) {
        const long double mid = 0.5L * (static_cast<long double>(breaks[seg]) + breaks[seg + 1]);
        const long double half = 0.5L * (static_cast<long double>(breaks[seg + 1]) - breaks[seg]);
        Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> V(n, n);
        Eigen::Matrix<long double, Eigen::Dynamic, 1> y(n);
        for (std::size_t q = 0; q < n; ++q) {
            const long double s = std::cos(3.14159265358979323846264338327950288L * (2.0L * q + 1.0L) / (2.0L * n));
            long double pw = 1.0L;
            for (std::size_t c = 0; c < n; ++c) {
                V(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(c)) = pw;
                pw *= s;
            }
            y(static_cast<Eigen::Index>(q)) = value_at(mid + half * s);
        }
        const Eigen::Matrix<long double, Eigen::Dynamic, 1> c = V.colPivHouseholderQr().solve(y);
        std::vector<double> coeffs(n);
        long double inv = 1.0L;
        for (std::size_t i = 0; i < n; ++i) {
            coeffs[i] = static_cast<double>(c(static_cast<Eigen::Index>(i)) * inv);
            inv /= half;
        }
        out.emplace_back(std::move(coeffs));
        origins.push_back(static_cast<double>(mid));
    }
    return PiecewisePolynomial(std::move(breaks), std::move(out), std::move(origins));
}

}  // namespace jumpdrift
