#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "jumpdrift/model.hpp"

namespace jumpdrift {

/// Uniform lattice on a box D, points stored row-major with the last axis fastest.
struct EvaluationGrid {
    std::size_t dim = 1;
    std::vector<std::size_t> shape;
    std::vector<double> points;
    Box domain;

    std::size_t size() const { return points.size() / dim; }
    std::span<const double> point(std::size_t i) const { return {points.data() + i * dim, dim}; }

    static EvaluationGrid lattice(const Box& D, std::vector<std::size_t> per_axis) {
        const std::size_t d = D.dim();
        if (d == 0 || per_axis.size() != d) throw std::invalid_argument("EvaluationGrid: shape does not match domain");
        EvaluationGrid g;
        g.dim = d;
        g.shape = per_axis;
        g.domain = D;
        std::size_t total = 1;
        for (std::size_t i = 0; i < d; ++i) {
            if (per_axis[i] < 1) throw std::invalid_argument("EvaluationGrid: need at least one point per axis");
            if (!(D.hi[i] >= D.lo[i])) throw std::invalid_argument("EvaluationGrid: empty domain");
            total *= per_axis[i];
        }
        g.points.resize(total * d);
        std::vector<std::size_t> idx(d, 0);
        for (std::size_t p = 0; p < total; ++p) {
            for (std::size_t i = 0; i < d; ++i) {
                const double frac = per_axis[i] == 1 ? 0.5 : static_cast<double>(idx[i]) / static_cast<double>(per_axis[i] - 1);
                g.points[p * d + i] = per_axis[i] - 1 == idx[i] && per_axis[i] > 1 ? D.hi[i] : D.lo[i] + frac * (D.hi[i] - D.lo[i]);
            }
            for (std::size_t i = d; i-- > 0;) {
                if (++idx[i] < per_axis[i]) break;
                idx[i] = 0;
            }
        }
        return g;
    }

    /// 201 points per axis for d <= 2, 41 per axis for d >= 3.
    static EvaluationGrid standard(const Box& D, std::optional<std::size_t> per_axis = std::nullopt) {
        const std::size_t n = per_axis.value_or(D.dim() <= 2 ? 201 : 41);
        return lattice(D, std::vector<std::size_t>(D.dim(), n));
    }

    bool contains_all_in_domain() const {
        for (std::size_t p = 0; p < size(); ++p)
            for (std::size_t i = 0; i < dim; ++i)
                if (points[p * dim + i] < domain.lo[i] || points[p * dim + i] > domain.hi[i]) return false;
        return true;
    }

    friend bool operator==(const EvaluationGrid& a, const EvaluationGrid& b) {
        return a.dim == b.dim && a.points == b.points;
    }
};

}  // namespace jumpdrift
