#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "jumpdrift/errors.hpp"
#include "jumpdrift/estimators.hpp"
#include "jumpdrift/kernel_sum.hpp"
#include "jumpdrift/kernels.hpp"
#include "jumpdrift/model.hpp"
#include "jumpdrift/parallel.hpp"

namespace jumpdrift {

/// c̃₁ at moment order p.
inline double c_tilde_1(double p = 1.0) {
    const double e = std::numbers::e;
    return 4.0 * std::exp(1.0 / (2.0 * e)) * std::pow(std::sqrt(8.0 * std::numbers::pi) * std::exp(1.0 / (12.0 * p)), 1.0 / p) / e;
}

/// c̃₂ at moment order p.
inline double c_tilde_2(double p = 1.0) {
    const double e = std::numbers::e;
    return 4.0 * std::exp(1.0 / (2.0 * e)) * std::pow(std::sqrt(2.0 * std::numbers::pi) * std::exp(1.0 / (6.0 * p)), 1.0 / p) *
           std::exp(-0.5);
}

/// ‖γ‖²_∞ [½ e^{c/2} ∫_{‖z‖≤1} ‖z‖² ν(dz) + 4c^{-2} ∫_{‖z‖>1} e^{c‖z‖} ν(dz)] with c = c_{1,ν}.
inline double compute_c1(const JumpLaw& law, double gamma_sup, std::optional<double> c1nu) {
    if (gamma_sup == 0.0 || law.degenerate()) return 0.0;
    if (!c1nu || !(*c1nu > 0.0))
        throw AssumptionViolationError("c1 needs a positive exponential moment rate for the jump law");
    const double c = *c1nu;
    const auto m = law.radial_moment([c](double r) {
        return r <= 1.0 ? 0.5 * std::exp(c / 2.0) * r * r : 4.0 / (c * c) * std::exp(c * r);
    });
    if (!m.finite())
        throw AssumptionViolationError("exponential moment of the jump law diverges at rate " + std::to_string(c));
    return gamma_sup * gamma_sup * m.value;
}

/// 𝓔_α = ‖γ‖²_∞ ν₂ exp(α‖γ‖_∞ σ_inv) / 2.
inline double compute_E_alpha(double nu2, double gamma_sup, double alpha, double sigma_inv_bound) {
    if (!(alpha > 0.0)) throw std::invalid_argument("compute_E_alpha: alpha must be positive");
    return gamma_sup * gamma_sup * nu2 * std::exp(alpha * gamma_sup * sigma_inv_bound) / 2.0;
}

struct PenaltyConstants {
    double C1 = 1.0;
    std::optional<double> kappa;
    double c_tilde_1 = 0.0;
    double c_tilde_2 = 0.0;
    /// Absent when the jump law has no exponential moment; only A_{T,1} needs it.
    std::optional<double> c1;
    double alpha = 1.0;
    double E_alpha = 0.0;
    double nu2 = 0.0;
    double a_sup = 0.0;
    std::vector<double> a_jj_sup;
    double gamma_sup = 0.0;
    double gamma_min = 0.0;
    double sigma_inv_bound = 0.0;
    double K_sup = 0.0;
    std::optional<double> theta;
    /// Constant of the density penalty C_ρ T^{-1/2} V^{-1/2} log^{1/2}.
    double C_rho = 1.0;
    std::size_t dim = 1;

    double theta_or_dim() const { return theta.value_or(static_cast<double>(dim)); }

    void require_complete(bool truncated) const {
        std::vector<std::string> missing;
        if (!kappa || !(*kappa > 0.0)) missing.emplace_back("kappa (mixing rate, > 0)");
        if (!truncated && !c1) missing.emplace_back("c1 (needs a finite exponential moment of the jump law)");
        if (truncated && !(gamma_min > 0.0) && gamma_sup > 0.0) missing.emplace_back("gamma_min (> 0)");
        if (!(K_sup > 0.0)) missing.emplace_back("K_sup");
        if (a_jj_sup.size() != dim) missing.emplace_back("a_jj_sup (one entry per coordinate)");
        if (!missing.empty()) {
            std::string msg = "penalty constants incomplete; required:";
            for (const auto& m : missing) msg += " " + m + ";";
            throw ConfigurationError(msg);
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["C1"] = C1;
        j["kappa"] = kappa ? nlohmann::json(*kappa) : nlohmann::json(nullptr);
        j["c_tilde_1"] = c_tilde_1;
        j["c_tilde_2"] = c_tilde_2;
        j["c1"] = c1 ? nlohmann::json(*c1) : nlohmann::json(nullptr);
        j["alpha"] = alpha;
        j["E_alpha"] = E_alpha;
        j["nu2"] = nu2;
        j["a_sup"] = a_sup;
        j["a_jj_sup"] = a_jj_sup;
        j["gamma_sup"] = gamma_sup;
        j["gamma_min"] = gamma_min;
        j["sigma_inv_bound"] = sigma_inv_bound;
        j["K_sup"] = K_sup;
        j["theta"] = theta_or_dim();
        j["C_rho"] = C_rho;
        return j;
    }
};

struct PenaltyOptions {
    double C1 = 1.0;
    /// Falls back to the model's κ.
    std::optional<double> kappa;
    double p = 1.0;
    double alpha = 1.0;
    /// Defaults to 1/γ_min.
    std::optional<double> sigma_inv_bound;
    std::optional<double> theta;
    double C_rho = 1.0;
};

/// Collects the constants from the model, its coefficient bounds and the kernel.
inline PenaltyConstants make_penalty_constants(const ModelSpec& spec, const CoefficientBounds& bounds, const KernelSpec& k,
                                               const PenaltyOptions& opt = {}) {
    PenaltyConstants c;
    c.dim = spec.dim;
    c.C1 = opt.C1;
    c.kappa = opt.kappa ? opt.kappa : spec.kappa;
    if (!c.kappa) throw ConfigurationError("penalty constants need the mixing rate kappa; set it in the model or pass --kappa");
    if (!(*c.kappa > 0.0)) throw ConfigurationError("kappa must be positive");
    c.c_tilde_1 = c_tilde_1(opt.p);
    c.c_tilde_2 = c_tilde_2(opt.p);
    c.a_sup = bounds.a_sup;
    c.a_jj_sup = bounds.a_jj_sup;
    c.gamma_sup = bounds.gamma_sup;
    c.gamma_min = bounds.gamma_min;
    c.K_sup = k.product_sup_norm(spec.dim);
    c.theta = opt.theta;
    c.C_rho = opt.C_rho;
    c.alpha = opt.alpha;
    const bool jumps = !spec.jump_law.degenerate() && bounds.gamma_sup > 0.0;
    if (jumps) {
        try {
            c.c1 = compute_c1(spec.jump_law, bounds.gamma_sup, spec.jump_law.exp_moment_rate);
        } catch (const AssumptionViolationError&) {
            c.c1.reset();
        }
        const auto nu = spec.jump_law.radial_moment([](double r) { return r * r; });
        if (!nu.finite()) throw InfiniteMomentError("nu2 of the jump law is infinite");
        c.nu2 = nu.value;
    } else {
        c.c1 = 0.0;
    }
    c.sigma_inv_bound = opt.sigma_inv_bound.value_or(bounds.gamma_min > 0.0 ? 1.0 / bounds.gamma_min : 0.0);
    c.E_alpha = jumps ? compute_E_alpha(c.nu2, c.gamma_sup, c.alpha, c.sigma_inv_bound) : 0.0;
    return c;
}

namespace detail {

inline double penalty_prefactor(const Bandwidth& h, double T, double K_sup) {
    return 2.0 * std::numbers::e / std::sqrt(T) / std::sqrt(h.volume()) * std::sqrt(h.log_inv_sum()) * K_sup;
}

}  // namespace detail

/// A_{T,1}(h, θ) for coordinate j.
inline double penalty_A1(const Bandwidth& h, double T, double theta, const PenaltyConstants& c, std::size_t j = 0) {
    c.require_complete(false);
    const double d = static_cast<double>(c.dim);
    const double c1 = *c.c1;
    const double bracket = c.C1 * (21.0 + 29.0 * d * std::sqrt(c.a_sup) + 17.0 * c1) +
                           std::sqrt(theta) * c.c_tilde_2 * (3.0 + 4.0 * std::sqrt(c.a_jj_sup.at(j)) + 3.0 * c1);
    return detail::penalty_prefactor(h, T, c.K_sup) * bracket;
}

/// A_{T,2}(h, θ, α) for coordinate j.
inline double penalty_A2(const Bandwidth& h, double T, double theta, double alpha, const PenaltyConstants& c, std::size_t j = 0) {
    c.require_complete(true);
    const double d = static_cast<double>(c.dim);
    const double sd = std::sqrt(d), st = std::sqrt(theta);
    const double E = c.gamma_sup > 0.0 ? compute_E_alpha(c.nu2, c.gamma_sup, alpha, c.sigma_inv_bound) : 0.0;
    const double ratio = c.gamma_sup > 0.0 ? c.gamma_sup / c.gamma_min : 0.0;
    const double tail = 64.0 * sd * c.C1 + 3.0 * st * c.c_tilde_2;
    const double bracket = 29.0 * c.C1 * d * std::sqrt(c.a_sup) + 4.0 * std::sqrt(theta * c.a_jj_sup.at(j)) * c.c_tilde_2 +
                           (1.0 + E) * tail +
                           ratio * (1.0 + c.nu2 * c.gamma_sup * c.gamma_sup / 2.0 * std::exp(alpha)) * tail;
    return detail::penalty_prefactor(h, T, c.K_sup) * bracket;
}

/// C_ρ T^{-1/2} V(h)^{-1/2} log(Σ h_i^{-1})^{1/2}.
inline double penalty_density(const Bandwidth& h, double T, const PenaltyConstants& c) {
    return c.C_rho / std::sqrt(T) / std::sqrt(h.volume()) * std::sqrt(h.log_inv_sum());
}

using PenaltyFn = std::function<double(const Bandwidth&)>;

namespace detail {

/// diff[a][b] = sup_grid |Σ w (K_{h_a} ⋆ K_{h_b})(x - s) - Σ w K_{h_b}(x - s)| / T.
/// The convolved sums are symmetric in (a, b), so each is computed once.
inline std::vector<std::vector<double>> gl_differences(const SampleSet& samples, const KernelSpec& k, const std::vector<Bandwidth>& cands,
                                                       const EvaluationGrid& grid, double T, const std::vector<std::size_t>& rows) {
    const std::size_t n = cands.size();
    std::vector<bool> need_row(n, false);
    for (auto r : rows) need_row[r] = true;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a; b < n; ++b)
            if (need_row[a] || need_row[b]) pairs.emplace_back(a, b);

    const auto singles = parallel_map(n, default_thread_count(), [&](std::size_t b) {
        return kernel_weighted_average(samples, AxisKernels::product(k, cands[b]), grid, T);
    });
    const auto conv = parallel_map(pairs.size(), default_thread_count(), [&](std::size_t q) {
        return kernel_weighted_average(samples, AxisKernels::convolved(k, cands[pairs[q].first], cands[pairs[q].second]), grid, T);
    });
    for (const auto& r : singles)
        if (r.error) std::rethrow_exception(r.error);
    for (const auto& r : conv)
        if (r.error) std::rethrow_exception(r.error);

    std::vector<std::vector<double>> diff(n, std::vector<double>(n, 0.0));
    auto sup_diff = [&](const std::vector<double>& u, const std::vector<double>& v) {
        double m = 0.0;
        for (std::size_t p = 0; p < u.size(); ++p) m = std::max(m, std::abs(u[p] - v[p]));
        return m;
    };
    for (std::size_t q = 0; q < pairs.size(); ++q) {
        const auto [a, b] = pairs[q];
        const auto& cv = *conv[q].value;
        if (need_row[a]) diff[a][b] = sup_diff(cv, *singles[b].value);
        if (need_row[b]) diff[b][a] = sup_diff(cv, *singles[a].value);
    }
    return diff;
}

inline std::vector<double> gl_weights(const PathRecord& path, std::size_t j, const std::optional<TruncationRule>& trunc) {
    return trunc ? truncate_path(path, *trunc, j) : plain_increments(path, j);
}

}  // namespace detail

/// Υ(h) = max_η (sup_D |b̄_{h,η} - b̄_η| - A(η))₊ over the candidate set.
inline double upsilon(const PathRecord& path, const KernelSpec& k, const Bandwidth& h, std::size_t j, const EvaluationGrid& grid,
                      const std::vector<Bandwidth>& candidates, const PenaltyFn& penalty,
                      const std::optional<TruncationRule>& truncation = std::nullopt) {
    if (candidates.empty()) throw EmptyGridError("upsilon: empty candidate set");
    std::vector<Bandwidth> all = candidates;
    all.push_back(h);
    const auto samples = SampleSet::left_points(path, detail::gl_weights(path, j, truncation));
    const auto diff = detail::gl_differences(samples, k, all, grid, path.horizon, {all.size() - 1});
    double u = 0.0;
    for (std::size_t e = 0; e < candidates.size(); ++e) u = std::max(u, diff.back()[e] - penalty(candidates[e]));
    return u;
}

struct SelectionCandidate {
    Bandwidth h;
    double upsilon = 0.0;
    double penalty = 0.0;
    double objective = 0.0;
};

struct SelectionTrace {
    std::string target;
    std::vector<SelectionCandidate> candidates;
    std::size_t chosen_index = 0;
    Bandwidth chosen;
    std::string tie_break;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["target"] = target;
        j["chosen"] = chosen.values();
        j["chosen_index"] = chosen_index;
        j["tie_break"] = tie_break;
        j["candidates"] = nlohmann::json::array();
        for (const auto& c : candidates)
            j["candidates"].push_back({{"h", c.h.values()}, {"upsilon", c.upsilon}, {"penalty", c.penalty}, {"objective", c.objective}});
        return j;
    }
};

namespace detail {

/// Exact argmin of Υ + A; equal objectives go to the larger V(h).
inline SelectionTrace gl_select(std::string target, const SampleSet& samples, const KernelSpec& k, const std::vector<Bandwidth>& cands,
                                const EvaluationGrid& grid, double T, const PenaltyFn& penalty) {
    const std::size_t n = cands.size();
    std::vector<std::size_t> rows(n);
    for (std::size_t a = 0; a < n; ++a) rows[a] = a;
    const auto diff = gl_differences(samples, k, cands, grid, T, rows);
    std::vector<double> pen(n);
    for (std::size_t a = 0; a < n; ++a) pen[a] = penalty(cands[a]);

    SelectionTrace tr;
    tr.target = std::move(target);
    for (std::size_t a = 0; a < n; ++a) {
        double u = 0.0;
        for (std::size_t e = 0; e < n; ++e) u = std::max(u, diff[a][e] - pen[e]);
        tr.candidates.push_back({cands[a], u, pen[a], u + pen[a]});
    }
    std::size_t best = 0, ties = 1;
    for (std::size_t a = 1; a < n; ++a) {
        const auto& c = tr.candidates[a];
        const auto& b = tr.candidates[best];
        if (c.objective < b.objective) {
            best = a;
            ties = 1;
        } else if (c.objective == b.objective) {
            ++ties;
            if (c.h.volume() > b.h.volume()) best = a;
        }
    }
    tr.chosen_index = best;
    tr.chosen = cands[best];
    tr.tie_break = ties == 1 ? "unique minimum" : std::to_string(ties) + " candidates tie at the minimum; took the largest V(h)";
    return tr;
}

}  // namespace detail

/// Goldenshluger–Lepski choice of the drift bandwidth for coordinate j. With a
/// truncation rule the truncated increments and A_{T,2} are used.
inline SelectionTrace select_bandwidth(const PathRecord& path, const KernelSpec& k, std::size_t j, const EvaluationGrid& grid,
                                       const std::vector<Bandwidth>& candidates, const PenaltyConstants& consts,
                                       const std::optional<TruncationRule>& truncation = std::nullopt) {
    if (candidates.empty()) throw EmptyGridError("select_bandwidth: empty candidate set");
    const double T = path.horizon;
    const double theta = consts.theta_or_dim();
    PenaltyFn pen;
    if (truncation) {
        const double alpha = truncation->alpha.value_or(truncation->delta / std::pow(T, 0.25));
        consts.require_complete(true);
        pen = [=, &consts](const Bandwidth& h) { return penalty_A2(h, T, theta, alpha, consts, j); };
    } else {
        consts.require_complete(false);
        pen = [=, &consts](const Bandwidth& h) { return penalty_A1(h, T, theta, consts, j); };
    }
    const auto samples = SampleSet::left_points(path, detail::gl_weights(path, j, truncation));
    return detail::gl_select(truncation ? "drift_truncated" : "drift", samples, k, candidates, grid, T, pen);
}

/// Same template for ρ̂ with the density penalty.
inline SelectionTrace select_density_bandwidth(const PathRecord& path, const KernelSpec& k, const EvaluationGrid& grid,
                                               const std::vector<Bandwidth>& candidates, const PenaltyConstants& consts) {
    if (candidates.empty()) throw EmptyGridError("select_density_bandwidth: empty candidate set");
    const double T = path.horizon;
    const std::vector<double> w(path.steps(), path.dt);
    const auto samples = SampleSet::left_points(path, w);
    return detail::gl_select("density", samples, k, candidates, grid, T,
                             [&](const Bandwidth& h) { return penalty_density(h, T, consts); });
}

struct AdaptiveEstimate {
    EstimatorOutput estimate;
    EstimatorOutput numerator;
    EstimatorOutput density;
    SelectionTrace drift_trace;
    SelectionTrace density_trace;
};

/// b̄_ĥ / (ρ̂_{ĥ_ρ} ∨ ρ_min) with both bandwidths chosen from `candidates`.
inline AdaptiveEstimate adaptive_nw(const PathRecord& path, const KernelSpec& k, std::size_t j, const EvaluationGrid& grid,
                                    const std::vector<Bandwidth>& candidates, const PenaltyConstants& consts, double rho_min,
                                    const std::optional<TruncationRule>& truncation = std::nullopt) {
    if (!(rho_min > 0.0)) throw std::invalid_argument("adaptive_nw: rho_min must be positive");
    AdaptiveEstimate out;
    out.drift_trace = select_bandwidth(path, k, j, grid, candidates, consts, truncation);
    out.density_trace = select_density_bandwidth(path, k, grid, candidates, consts);
    out.numerator = bar_b(path, k, out.drift_trace.chosen, j, grid, truncation);
    out.density = rho_hat(path, k, out.density_trace.chosen, grid);
    auto& e = out.estimate;
    e.grid = grid;
    e.values.resize(grid.size());
    for (std::size_t p = 0; p < grid.size(); ++p) e.values[p] = out.numerator.values[p] / std::max(out.density.values[p], rho_min);
    e.meta = out.numerator.meta;
    e.meta.kind = truncation ? "adaptive_nw_truncated" : "adaptive_nw";
    e.meta.bandwidth_rho = out.density_trace.chosen.values();
    e.meta.rho_min = rho_min;
    return out;
}

}  // namespace jumpdrift
