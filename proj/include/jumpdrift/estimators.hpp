#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "jumpdrift/errors.hpp"
#include "jumpdrift/grid.hpp"
#include "jumpdrift/kernel_sum.hpp"
#include "jumpdrift/kernels.hpp"
#include "jumpdrift/path_io.hpp"
#include "jumpdrift/rates.hpp"
#include "jumpdrift/simulator.hpp"

namespace jumpdrift {

/// Σ_i g(X_{t_i}) (X^j_{t_{i+1}} - X^j_{t_i}), the left-point Itô sum.
inline double integral_vs_path(const TestFunction& g, const PathRecord& path, std::size_t j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < path.steps(); ++i) {
        const double gv = g(path.state(i));
        if (gv != 0.0) acc += gv * path.increment(i, j);
    }
    return acc;
}

struct TruncationRule {
    enum class Mode { ExactJump, Threshold };
    Mode mode = Mode::ExactJump;
    double delta = 1.0;
    /// Set when δ = α T^{1/4}.
    std::optional<double> alpha;

    static TruncationRule fixed(Mode m, double delta) {
        if (!(delta > 0.0)) throw std::invalid_argument("TruncationRule: delta must be positive");
        return {m, delta, std::nullopt};
    }
    static TruncationRule rate_linked(Mode m, double alpha, double T) {
        if (!(alpha > 0.0)) throw std::invalid_argument("TruncationRule: alpha must be positive");
        return {m, alpha * std::pow(T, 0.25), alpha};
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["mode"] = mode == Mode::ExactJump ? "exact-jump" : "threshold";
        j["delta"] = delta;
        if (alpha) j["alpha"] = *alpha;
        return j;
    }
};

inline std::vector<double> plain_increments(const PathRecord& path, std::size_t j) {
    std::vector<double> inc(path.steps());
    for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = path.increment(i, j);
    return inc;
}

inline bool exceeds(std::span<const double> v, double delta) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s) > delta;
}

/// Increments of X^{j,δ}: exact-jump mode removes logged displacements with
/// ‖ΔX‖ > δ from their step; threshold mode drops any step whose full
/// increment has norm > δ.
inline std::vector<double> truncate_path(const PathRecord& path, const TruncationRule& rule, std::size_t j) {
    if (j >= path.dim) throw std::invalid_argument("truncate_path: coordinate out of range");
    auto inc = plain_increments(path, j);
    if (rule.mode == TruncationRule::Mode::ExactJump) {
        if (!path.has_jump_log) throw MissingJumpLogError("exact-jump truncation needs the path's jump-event log");
        for (const auto& ev : path.jumps)
            if (exceeds(ev.displacement, rule.delta)) inc[ev.step] -= ev.displacement[j];
    } else {
        std::vector<double> full(path.dim);
        for (std::size_t i = 0; i < inc.size(); ++i) {
            for (std::size_t k = 0; k < path.dim; ++k) full[k] = path.increment(i, k);
            if (exceeds(full, rule.delta)) inc[i] = 0.0;
        }
    }
    return inc;
}

struct EstimatorMeta {
    std::string kind;
    std::vector<double> bandwidth;
    std::vector<double> bandwidth_rho;
    std::optional<std::size_t> coord;
    std::optional<TruncationRule> truncation;
    std::optional<double> ridge;
    std::optional<double> rho_min;
    double T = 0.0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    int kernel_order = 0;
    std::vector<double> kernel_moment_residuals;
};

struct EstimatorOutput {
    EvaluationGrid grid;
    std::vector<double> values;
    EstimatorMeta meta;

    double sup_abs() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, std::abs(v));
        return m;
    }

    nlohmann::json meta_json() const {
        nlohmann::json j;
        j["kind"] = meta.kind;
        j["bandwidth"] = meta.bandwidth;
        if (!meta.bandwidth_rho.empty()) j["bandwidth_rho"] = meta.bandwidth_rho;
        j["coord"] = meta.coord ? nlohmann::json(*meta.coord) : nlohmann::json(nullptr);
        j["truncation"] = meta.truncation ? meta.truncation->to_json() : nlohmann::json(nullptr);
        j["ridge"] = meta.ridge ? nlohmann::json(*meta.ridge) : nlohmann::json(nullptr);
        if (meta.rho_min) j["rho_min"] = *meta.rho_min;
        j["T"] = meta.T;
        j["dt"] = meta.dt;
        j["seed"] = meta.seed;
        j["kernel_order"] = meta.kernel_order;
        j["kernel_moment_residuals"] = meta.kernel_moment_residuals;
        j["grid_points"] = grid.size();
        j["domain"] = {{"lo", grid.domain.lo}, {"hi", grid.domain.hi}};
        return j;
    }

    /// CSV with columns x1..xd,estimate plus `<file>.meta.json`.
    void write(const std::string& file) const {
        std::ofstream out(file);
        if (!out) throw ConfigurationError("cannot write " + file);
        for (std::size_t k = 0; k < grid.dim; ++k) out << 'x' << k + 1 << ',';
        out << "estimate\n";
        for (std::size_t p = 0; p < grid.size(); ++p) {
            for (double v : grid.point(p)) out << detail::fmt17(v) << ',';
            out << detail::fmt17(values[p]) << '\n';
        }
        std::ofstream(file + ".meta.json") << meta_json().dump(2) << '\n';
    }
};

namespace detail {

inline EstimatorMeta base_meta(const PathRecord& path, const KernelSpec& k, std::string kind) {
    EstimatorMeta m;
    m.kind = std::move(kind);
    m.T = path.horizon;
    m.dt = path.dt;
    m.seed = path.seed;
    m.kernel_order = k.order;
    m.kernel_moment_residuals = k.moment_residuals;
    return m;
}

inline void check_bandwidth(const Bandwidth& h, const PathRecord& path, const EvaluationGrid& grid) {
    if (h.dim() != path.dim || grid.dim != path.dim) throw std::invalid_argument("estimator: dimension mismatch");
}

}  // namespace detail

/// (1/T) Σ_i K_h(x - X_{t_i}) w_i on the grid, for an explicit weight stream.
inline std::vector<double> kernel_weighted_average(const SampleSet& samples, const AxisKernels& K, const EvaluationGrid& grid, double T) {
    auto v = samples.evaluate(K, grid);
    for (auto& x : v) x /= T;
    return v;
}

/// b̄^{(j)}_h (plain) or b̄^{(j),δ}_h (with a truncation rule).
inline EstimatorOutput bar_b(const PathRecord& path, const KernelSpec& k, const Bandwidth& h, std::size_t j,
                             const EvaluationGrid& grid, const std::optional<TruncationRule>& truncation = std::nullopt) {
    detail::check_bandwidth(h, path, grid);
    const auto inc = truncation ? truncate_path(path, *truncation, j) : plain_increments(path, j);
    const auto samples = SampleSet::left_points(path, inc);
    EstimatorOutput out;
    out.grid = grid;
    out.values = kernel_weighted_average(samples, AxisKernels::product(k, h), grid, path.horizon);
    out.meta = detail::base_meta(path, k, truncation ? "bar_b_truncated" : "bar_b");
    out.meta.bandwidth = h.values();
    out.meta.coord = j;
    out.meta.truncation = truncation;
    return out;
}

/// ρ̂_h(x) = (1/T) Σ_i K_h(x - X_{t_i}) Δ.
inline EstimatorOutput rho_hat(const PathRecord& path, const KernelSpec& k, const Bandwidth& h, const EvaluationGrid& grid) {
    detail::check_bandwidth(h, path, grid);
    const std::vector<double> w(path.steps(), path.dt);
    const auto samples = SampleSet::left_points(path, w);
    EstimatorOutput out;
    out.grid = grid;
    out.values = kernel_weighted_average(samples, AxisKernels::product(k, h), grid, path.horizon);
    out.meta = detail::base_meta(path, k, "rho_hat");
    out.meta.bandwidth_rho = h.values();
    return out;
}

/// b̄ / (|ρ̂| + r(T)) pointwise.
inline EstimatorOutput nw_ratio(const EstimatorOutput& numerator, const EstimatorOutput& density, double ridge) {
    if (!(ridge > 0.0)) throw std::invalid_argument("nw_ratio: ridge must be positive");
    if (!(numerator.grid == density.grid)) throw AlignmentError("nw_ratio: numerator and density live on different grids");
    EstimatorOutput out;
    out.grid = numerator.grid;
    out.values.resize(numerator.values.size());
    for (std::size_t p = 0; p < out.values.size(); ++p) out.values[p] = numerator.values[p] / (std::abs(density.values[p]) + ridge);
    out.meta = numerator.meta;
    out.meta.kind = numerator.meta.truncation ? "nw_ratio_truncated" : "nw_ratio";
    out.meta.bandwidth_rho = density.meta.bandwidth_rho;
    out.meta.ridge = ridge;
    return out;
}

/// r(T) = Φ_{d,β}(T) exp(√log T).
inline double ridge_rT(double T, std::size_t d, double beta_bar) {
    return phi(T, d, beta_bar) * std::exp(std::sqrt(std::log(T)));
}

struct BandwidthConstants {
    double drift = 1.0;
    double density = 0.1;
};

struct OptimalBandwidths {
    std::vector<double> h_b;
    std::vector<double> h_rho;
    std::vector<std::string> warnings;
};

/// Rate-optimal bandwidth rules, each scaled by its proportionality constant.
inline OptimalBandwidths optimal_bandwidths(double T, std::size_t d, const HolderParams& beta, const BandwidthConstants& c = {}) {
    if (!(T >= 3.0)) throw std::invalid_argument("optimal_bandwidths: T must be >= 3");
    if (beta.dim() != d) throw std::invalid_argument("optimal_bandwidths: beta has the wrong length");
    OptimalBandwidths out;
    const double bb = beta.beta_bar();
    const double dd = static_cast<double>(d);
    const double need = std::max(dd / 2.0, std::min(2.0, dd));
    if (!(bb > need))
        out.warnings.push_back("beta_bar = " + std::to_string(bb) + " does not exceed d/2 v (2 ^ d) = " + std::to_string(need));
    const double lt = std::log(T);
    for (std::size_t i = 0; i < d; ++i) {
        const double bi = beta.beta()[i];
        out.h_b.push_back(c.drift * std::pow(lt / T, bb / ((2.0 * bb + dd) * bi)));
        double hr = 0.0;
        if (d == 1)
            hr = lt * lt / std::sqrt(T);
        else if (d == 2)
            hr = std::pow(std::pow(lt, 4.0) / T, bb / (4.0 * bi));
        else
            hr = std::pow(lt / T, bb / ((2.0 * bb + dd - 2.0) * bi));
        out.h_rho.push_back(c.density * hr);
    }
    for (double v : out.h_b)
        if (!(v < 1.0)) out.warnings.push_back("drift bandwidth " + std::to_string(v) + " is not below 1 at this T");
    for (double v : out.h_rho)
        if (!(v < 1.0)) out.warnings.push_back("density bandwidth " + std::to_string(v) + " is not below 1 at this T");
    return out;
}

}  // namespace jumpdrift
