#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "jumpdrift/grid.hpp"
#include "jumpdrift/kernels.hpp"
#include "jumpdrift/polynomial.hpp"
#include "jumpdrift/simulator.hpp"

namespace jumpdrift {

/// Weighted point cloud {(s_i, w_i)} with fast evaluation of x -> Σ_i w_i K(x - s_i)
/// for product kernels with piecewise polynomial factors.
class SampleSet {
public:
    SampleSet(std::size_t dim, std::span<const double> points, std::span<const double> weights) : dim_(dim) {
        if (dim == 0 || points.size() != weights.size() * dim)
            throw std::invalid_argument("SampleSet: points and weights do not match");
        const std::size_t n = weights.size();
        std::vector<std::pair<double, std::size_t>> keyed(n);
        for (std::size_t k = 0; k < n; ++k) keyed[k] = {points[k * dim], k};
        std::sort(keyed.begin(), keyed.end());
        order_.resize(n);
        for (std::size_t k = 0; k < n; ++k) order_[k] = keyed[k].second;
        pts_.resize(n * dim);
        for (std::size_t k = 0; k < n; ++k)
            std::copy_n(points.begin() + static_cast<std::ptrdiff_t>(order_[k] * dim), dim, pts_.begin() + static_cast<std::ptrdiff_t>(k * dim));
        axis0_.resize(n);
        for (std::size_t k = 0; k < n; ++k) axis0_[k] = pts_[k * dim];
        set_weights(weights);
    }

    /// Samples are the left points X_{t_0}, …, X_{t_{N-1}} of the path.
    static SampleSet left_points(const PathRecord& p, std::span<const double> weights) {
        if (weights.size() != p.steps()) throw std::invalid_argument("SampleSet::left_points: need one weight per step");
        return SampleSet(p.dim, std::span<const double>(p.states.data(), p.steps() * p.dim), weights);
    }

    /// Same points, new weights given in the original (unsorted) order.
    SampleSet with_weights(std::span<const double> weights) const {
        SampleSet s = *this;
        s.set_weights(weights);
        return s;
    }

    std::size_t size() const { return w_.size(); }
    std::size_t dim() const { return dim_; }

    /// Brute force over all samples; the reference for the faster paths.
    double evaluate_direct(const AxisKernels& K, std::span<const double> x) const {
        double acc = 0.0;
        std::vector<double> diff(dim_);
        for (std::size_t k = 0; k < w_.size(); ++k) {
            if (w_[k] == 0.0) continue;
            for (std::size_t i = 0; i < dim_; ++i) diff[i] = x[i] - pts_[k * dim_ + i];
            acc += w_[k] * K(diff);
        }
        return acc;
    }

    /// Only visits samples whose first coordinate is inside the kernel window.
    double evaluate_at(const AxisKernels& K, std::span<const double> x) const {
        const auto& a0 = K.axis(0);
        // x - s in [lo, hi)  <=>  s in (x - hi, x - lo]
        const auto first = std::upper_bound(axis0_.begin(), axis0_.end(), x[0] - a0.support_hi());
        const auto last = std::upper_bound(axis0_.begin(), axis0_.end(), x[0] - a0.support_lo());
        double acc = 0.0;
        std::vector<double> diff(dim_);
        for (auto it = first; it != last; ++it) {
            const std::size_t k = static_cast<std::size_t>(it - axis0_.begin());
            if (w_[k] == 0.0) continue;
            for (std::size_t i = 0; i < dim_; ++i) diff[i] = x[i] - pts_[k * dim_ + i];
            acc += w_[k] * K(diff);
        }
        return acc;
    }

    std::vector<double> evaluate(const AxisKernels& K, const EvaluationGrid& grid) const {
        if (grid.dim != dim_ || K.dim() != dim_) throw std::invalid_argument("SampleSet::evaluate: dimension mismatch");
        if (dim_ == 1 && K.max_degree() <= static_cast<int>(kTreeDegree)) return evaluate_1d(K.axis(0), grid.points);
        std::vector<double> out(grid.size());
        for (std::size_t p = 0; p < grid.size(); ++p) out[p] = evaluate_at(K, grid.point(p));
        return out;
    }

    /// Σ_i w_i A(x - s_i) for one-dimensional samples. Each piece of A is
    /// re-expanded about its midpoint, so the sum over the piece's window is a
    /// combination of window moments Σ w (s - x + mid)^l. Those come from a
    /// segment tree whose nodes hold moments about their own centres, shifted
    /// to the query centre; every expansion stays local and well conditioned.
    std::vector<double> evaluate_1d(const PiecewisePolynomial& A, std::span<const double> xs) const {
        if (dim_ != 1) throw std::invalid_argument("SampleSet::evaluate_1d: one-dimensional samples only");
        if (A.max_degree() > static_cast<int>(kTreeDegree)) throw std::invalid_argument("SampleSet::evaluate_1d: kernel degree too high");
        std::vector<double> out(xs.size(), 0.0);
        if (w_.empty()) return out;
        const auto& br = A.breaks();
        const std::size_t np = br.size() - 1;
        std::vector<std::vector<long double>> local(np);
        std::vector<long double> mids(np);
        for (std::size_t p = 0; p < np; ++p) {
            const auto& c = A.pieces()[p].coeffs();
            const long double mid = 0.5L * (static_cast<long double>(br[p]) + br[p + 1]);
            mids[p] = mid;
            const long double shift = mid - static_cast<long double>(A.origin(p));
            auto& a = local[p];
            a.assign(c.size(), 0.0L);
            for (std::size_t m = 0; m < c.size(); ++m) {
                long double pw = 1.0L;
                for (std::size_t k = m + 1; k-- > 0;) {
                    a[k] += static_cast<long double>(c[m]) * binomial_[m][k] * pw;
                    pw *= shift;
                }
            }
        }
        std::vector<std::size_t> idx(br.size());
        std::array<long double, kTreeDegree + 1> S{};
        for (std::size_t g = 0; g < xs.size(); ++g) {
            const double x = xs[g];
            // x - s in [b_p, b_{p+1})  <=>  s in (x - b_{p+1}, x - b_p]
            for (std::size_t b = 0; b < br.size(); ++b)
                idx[b] = static_cast<std::size_t>(std::upper_bound(axis0_.begin(), axis0_.end(), x - br[b]) - axis0_.begin());
            long double v = 0.0L;
            for (std::size_t p = 0; p < np; ++p) {
                const auto& a = local[p];
                if (idx[p + 1] == idx[p] || a.empty()) continue;
                // t - mid = -(s - (x - mid))
                window_moments(idx[p + 1], idx[p], static_cast<long double>(x) - mids[p], a.size(), S);
                for (std::size_t m = 0; m < a.size(); ++m) v += (m % 2) ? -a[m] * S[m] : a[m] * S[m];
            }
            out[g] = static_cast<double>(v);
        }
        return out;
    }

    static constexpr std::size_t kTreeDegree = 12;
    static constexpr std::size_t kLeaf = 64;

private:
    void set_weights(std::span<const double> weights) {
        if (weights.size() != order_.size()) throw std::invalid_argument("SampleSet: weight count changed");
        w_.resize(weights.size());
        for (std::size_t k = 0; k < w_.size(); ++k) w_[k] = weights[order_[k]];
        if (dim_ == 1) build_tree();
    }

    using Moments = std::array<long double, kTreeDegree + 1>;

    /// M_l(c') = Σ_m C(l,m) (c - c')^{l-m} M_m(c), accumulated into `into`.
    void shift_add(const Moments& m, long double from, long double to, std::size_t len, Moments& into) const {
        const long double d = from - to;
        std::array<long double, kTreeDegree + 1> pw;
        pw[0] = 1.0L;
        for (std::size_t l = 1; l < len; ++l) pw[l] = pw[l - 1] * d;
        for (std::size_t l = 0; l < len; ++l) {
            long double acc = 0.0L;
            for (std::size_t k = 0; k <= l; ++k) acc += binomial_[l][k] * pw[l - k] * m[k];
            into[l] += acc;
        }
    }

    void add_direct(std::size_t lo, std::size_t hi, long double centre, std::size_t len, Moments& into) const {
        for (std::size_t i = lo; i < hi; ++i) {
            const long double u = static_cast<long double>(axis0_[i]) - centre;
            long double v = w_[i];
            for (std::size_t l = 0; l < len; ++l) {
                into[l] += v;
                v *= u;
            }
        }
    }

    void build_tree() {
        for (std::size_t l = 0; l <= kTreeDegree; ++l) {
            binomial_[l].fill(0.0L);
            binomial_[l][0] = 1.0L;
            for (std::size_t k = 1; k <= l; ++k) binomial_[l][k] = binomial_[l - 1][k - 1] + (k < l ? binomial_[l - 1][k] : 0.0L);
        }
        const std::size_t n = w_.size();
        const std::size_t leaves = (n + kLeaf - 1) / kLeaf;
        leaves_ = 1;
        while (leaves_ < leaves) leaves_ *= 2;
        node_moments_.assign(2 * leaves_, Moments{});
        node_centre_.assign(2 * leaves_, 0.0L);
        for (std::size_t b = 0; b < leaves; ++b) {
            const std::size_t lo = b * kLeaf, hi = std::min(n, lo + kLeaf);
            const long double c = 0.5L * (static_cast<long double>(axis0_[lo]) + axis0_[hi - 1]);
            node_centre_[leaves_ + b] = c;
            add_direct(lo, hi, c, kTreeDegree + 1, node_moments_[leaves_ + b]);
        }
        for (std::size_t b = leaves; b < leaves_; ++b) node_centre_[leaves_ + b] = n ? axis0_[n - 1] : 0.0L;
        for (std::size_t v = leaves_ - 1; v >= 1; --v) {
            const long double c = 0.5L * (node_centre_[2 * v] + node_centre_[2 * v + 1]);
            node_centre_[v] = c;
            shift_add(node_moments_[2 * v], node_centre_[2 * v], c, kTreeDegree + 1, node_moments_[v]);
            shift_add(node_moments_[2 * v + 1], node_centre_[2 * v + 1], c, kTreeDegree + 1, node_moments_[v]);
        }
    }

    /// S_l = Σ_{lo<=i<hi} w_i (s_i - centre)^l for l < len.
    void window_moments(std::size_t lo, std::size_t hi, long double centre, std::size_t len, Moments& S) const {
        S.fill(0.0L);
        std::size_t bl = (lo + kLeaf - 1) / kLeaf, bh = hi / kLeaf;
        if (bl >= bh) {
            add_direct(lo, hi, centre, len, S);
            return;
        }
        add_direct(lo, bl * kLeaf, centre, len, S);
        add_direct(bh * kLeaf, hi, centre, len, S);
        for (std::size_t l = bl + leaves_, r = bh + leaves_; l < r; l /= 2, r /= 2) {
            if (l & 1) {
                shift_add(node_moments_[l], node_centre_[l], centre, len, S);
                ++l;
            }
            if (r & 1) {
                --r;
                shift_add(node_moments_[r], node_centre_[r], centre, len, S);
            }
        }
    }

    std::size_t dim_;
    std::vector<std::size_t> order_;
    std::vector<double> pts_;
    std::vector<double> axis0_;
    std::vector<double> w_;
    std::size_t leaves_ = 1;
    std::vector<Moments> node_moments_;
    std::vector<long double> node_centre_;
    std::array<std::array<long double, kTreeDegree + 1>, kTreeDegree + 1> binomial_{};
};

}  // namespace jumpdrift
