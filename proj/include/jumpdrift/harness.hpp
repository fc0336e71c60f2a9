#pragma once

#include <algorithm>
#include <bit>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "jumpdrift/adaptive.hpp"
#include "jumpdrift/errors.hpp"
#include "jumpdrift/estimators.hpp"
#include "jumpdrift/grid.hpp"
#include "jumpdrift/kernel_sum.hpp"
#include "jumpdrift/parallel.hpp"
#include "jumpdrift/path_io.hpp"
#include "jumpdrift/presets.hpp"
#include "jumpdrift/rates.hpp"
#include "jumpdrift/simulator.hpp"

namespace jumpdrift {

struct ExperimentPlan {
    /// Preset name or path to a model JSON file; `model_inline` wins when set.
    std::string model = "ou1d";
    std::optional<nlohmann::json> model_inline;
    std::vector<double> T_list;
    double dt = 0.01;
    std::size_t replications = 30;
    /// plain | trunc
    std::string estimator = "plain";
    double trunc_alpha = 1.0;
    TruncationRule::Mode trunc_mode = TruncationRule::Mode::ExactJump;
    /// auto (rate-optimal rules) | fixed | adaptive
    std::string bandwidth_policy = "auto";
    std::vector<double> fixed_h;
    std::vector<double> fixed_h_rho;
    std::vector<double> beta;
    BandwidthConstants bandwidth_constants;
    /// rho | plain
    std::string risk_weight = "rho";
    std::optional<Box> domain;
    std::optional<std::size_t> grid_per_axis;
    std::uint64_t seed = 1;
    std::string output_dir = ".";
    int kernel_order = 1;
    std::size_t coord = 0;
    /// Multiplies the ridge r(T) of the Nadaraya–Watson ratio.
    double ridge_scale = 1.0;
    double rho_min = 0.1;
    /// literal | relaxed
    std::string candidate_rule = "literal";
    double iota = 2.0;
    PenaltyOptions penalty;
    /// T_over_logT | T
    std::string regressor = "T_over_logT";
    std::optional<double> burn_in;
    std::vector<double> h_list;
    std::size_t class_size = 41;
    double aux_factor = 20.0;
    std::vector<std::string> compare_models = {"jump-ou1d", "pareto-ou1d"};
    unsigned threads = default_thread_count();

    Box domain_or_default(std::size_t d) const { return domain.value_or(Box::cube(d, -1.0, 1.0)); }

    CandidateGridRule grid_rule() const {
        return candidate_rule == "relaxed" ? CandidateGridRule::relaxed(iota) : CandidateGridRule::literal(iota);
    }

    void validate() const {
        auto bad = [](const std::string& m) { throw ConfigurationError("plan: " + m); };
        if (T_list.empty()) bad("T_list must not be empty");
        for (std::size_t i = 0; i < T_list.size(); ++i) {
            if (!(T_list[i] >= 3.0)) bad("every T must be >= 3");
            if (i > 0 && !(T_list[i] > T_list[i - 1])) bad("T_list must be strictly increasing");
            const double n = std::round(T_list[i] / dt);
            if (std::abs(n * dt - T_list[i]) > 1e-9 * T_list[i]) bad("every T must be a multiple of dt");
        }
        if (!(dt > 0.0)) bad("dt must be positive");
        if (replications < 1) bad("replications must be >= 1");
        if (estimator != "plain" && estimator != "trunc") bad("estimator must be plain or trunc");
        if (bandwidth_policy != "auto" && bandwidth_policy != "fixed" && bandwidth_policy != "adaptive")
            bad("bandwidth_policy must be auto, fixed or adaptive");
        if (bandwidth_policy == "fixed" && fixed_h.empty()) bad("bandwidth_policy fixed needs fixed_h");
        if (risk_weight != "rho" && risk_weight != "plain") bad("risk_weight must be rho or plain");
        if (candidate_rule != "literal" && candidate_rule != "relaxed") bad("candidate_rule must be literal or relaxed");
        if (regressor != "T_over_logT" && regressor != "T") bad("regressor must be T_over_logT or T");
        if (!(trunc_alpha > 0.0)) bad("trunc_alpha must be positive");
        if (!(ridge_scale > 0.0)) bad("ridge_scale must be positive");
        if (!(rho_min > 0.0)) bad("rho_min must be positive");
        if (!(iota > 1.0)) bad("iota must be > 1");
        if (kernel_order < 1 || kernel_order > 8) bad("kernel_order must be in 1..8");
        if (class_size < 1) bad("class_size must be >= 1");
        if (!(aux_factor > 0.0)) bad("aux_factor must be positive");
        if (domain) {
            if (domain->lo.size() != domain->hi.size() || domain->lo.empty()) bad("domain lo/hi mismatch");
            for (std::size_t i = 0; i < domain->lo.size(); ++i)
                if (!(domain->hi[i] > domain->lo[i])) bad("domain must have hi > lo");
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["model"] = model;
        if (model_inline) j["model_inline"] = *model_inline;
        j["T_list"] = T_list;
        j["dt"] = dt;
        j["replications"] = replications;
        j["estimator"] = estimator;
        j["trunc_alpha"] = trunc_alpha;
        j["trunc_mode"] = trunc_mode == TruncationRule::Mode::ExactJump ? "exact-jump" : "threshold";
        j["bandwidth_policy"] = bandwidth_policy;
        j["fixed_h"] = fixed_h;
        j["fixed_h_rho"] = fixed_h_rho;
        j["beta"] = beta;
        j["bandwidth_constants"] = {{"drift", bandwidth_constants.drift}, {"density", bandwidth_constants.density}};
        j["risk_weight"] = risk_weight;
        if (domain) j["domain"] = {{"lo", domain->lo}, {"hi", domain->hi}};
        if (grid_per_axis) j["grid_per_axis"] = *grid_per_axis;
        j["seed"] = seed;
        j["output_dir"] = output_dir;
        j["kernel_order"] = kernel_order;
        j["coord"] = coord;
        j["ridge_scale"] = ridge_scale;
        j["rho_min"] = rho_min;
        j["candidate_rule"] = candidate_rule;
        j["iota"] = iota;
        j["penalty"] = {{"C1", penalty.C1}, {"p", penalty.p}, {"alpha", penalty.alpha}, {"C_rho", penalty.C_rho}};
        if (penalty.kappa) j["penalty"]["kappa"] = *penalty.kappa;
        if (penalty.sigma_inv_bound) j["penalty"]["sigma_inv_bound"] = *penalty.sigma_inv_bound;
        if (penalty.theta) j["penalty"]["theta"] = *penalty.theta;
        j["regressor"] = regressor;
        if (burn_in) j["burn_in"] = *burn_in;
        j["h_list"] = h_list;
        j["class_size"] = class_size;
        j["aux_factor"] = aux_factor;
        j["compare_models"] = compare_models;
        return j;
    }

    static ExperimentPlan from_json(const nlohmann::json& j) {
        ExperimentPlan p;
        try {
            static const std::vector<std::string> known = {
                "model", "model_inline", "T_list", "dt", "replications", "estimator", "trunc_alpha", "trunc_mode",
                "bandwidth_policy", "fixed_h", "fixed_h_rho", "beta", "bandwidth_constants", "risk_weight", "domain",
                "grid_per_axis", "seed", "output_dir", "kernel_order", "coord", "ridge_scale", "rho_min", "candidate_rule",
                "iota", "penalty", "regressor", "burn_in", "h_list", "class_size", "aux_factor", "compare_models", "threads"};
            if (!j.is_object()) throw ConfigurationError("plan must be a JSON object");
            for (const auto& [k, v] : j.items())
                if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigurationError("plan: unknown key '" + k + "'");
            if (j.contains("model")) {
                if (j["model"].is_object())
                    p.model_inline = j["model"];
                else
                    p.model = j["model"].get<std::string>();
            }
            if (j.contains("model_inline")) p.model_inline = j["model_inline"];
            if (j.contains("T_list")) p.T_list = j["T_list"].get<std::vector<double>>();
            p.dt = j.value("dt", p.dt);
            p.replications = j.value("replications", p.replications);
            p.estimator = j.value("estimator", p.estimator);
            if (p.estimator.rfind("trunc:", 0) == 0) {
                p.trunc_alpha = std::stod(p.estimator.substr(6));
                p.estimator = "trunc";
            }
            p.trunc_alpha = j.value("trunc_alpha", p.trunc_alpha);
            const std::string tm = j.value("trunc_mode", std::string("exact-jump"));
            if (tm == "exact-jump")
                p.trunc_mode = TruncationRule::Mode::ExactJump;
            else if (tm == "threshold")
                p.trunc_mode = TruncationRule::Mode::Threshold;
            else
                throw ConfigurationError("plan: trunc_mode must be exact-jump or threshold");
            p.bandwidth_policy = j.value("bandwidth_policy", p.bandwidth_policy);
            if (j.contains("fixed_h")) p.fixed_h = j["fixed_h"].get<std::vector<double>>();
            if (j.contains("fixed_h_rho")) p.fixed_h_rho = j["fixed_h_rho"].get<std::vector<double>>();
            if (j.contains("beta")) p.beta = j["beta"].get<std::vector<double>>();
            if (j.contains("bandwidth_constants")) {
                p.bandwidth_constants.drift = j["bandwidth_constants"].value("drift", p.bandwidth_constants.drift);
                p.bandwidth_constants.density = j["bandwidth_constants"].value("density", p.bandwidth_constants.density);
            }
            p.risk_weight = j.value("risk_weight", p.risk_weight);
            if (j.contains("domain")) {
                const auto& d = j["domain"];
                p.domain = Box{d.at("lo").get<std::vector<double>>(), d.at("hi").get<std::vector<double>>()};
            }
            if (j.contains("grid_per_axis")) p.grid_per_axis = j["grid_per_axis"].get<std::size_t>();
            p.seed = j.value("seed", p.seed);
            p.output_dir = j.value("output_dir", p.output_dir);
            p.kernel_order = j.value("kernel_order", p.kernel_order);
            p.coord = j.value("coord", p.coord);
            p.ridge_scale = j.value("ridge_scale", p.ridge_scale);
            p.rho_min = j.value("rho_min", p.rho_min);
            p.candidate_rule = j.value("candidate_rule", p.candidate_rule);
            p.iota = j.value("iota", p.iota);
            if (j.contains("penalty")) {
                const auto& q = j["penalty"];
                p.penalty.C1 = q.value("C1", p.penalty.C1);
                p.penalty.p = q.value("p", p.penalty.p);
                p.penalty.alpha = q.value("alpha", p.penalty.alpha);
                p.penalty.C_rho = q.value("C_rho", p.penalty.C_rho);
                if (q.contains("kappa")) p.penalty.kappa = q["kappa"].get<double>();
                if (q.contains("sigma_inv_bound")) p.penalty.sigma_inv_bound = q["sigma_inv_bound"].get<double>();
                if (q.contains("theta")) p.penalty.theta = q["theta"].get<double>();
            }
            p.regressor = j.value("regressor", p.regressor);
            if (j.contains("burn_in")) p.burn_in = j["burn_in"].get<double>();
            if (j.contains("h_list")) p.h_list = j["h_list"].get<std::vector<double>>();
            p.class_size = j.value("class_size", p.class_size);
            p.aux_factor = j.value("aux_factor", p.aux_factor);
            if (j.contains("compare_models")) p.compare_models = j["compare_models"].get<std::vector<std::string>>();
            p.threads = j.value("threads", p.threads);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigurationError(std::string("plan: ") + e.what());
        } catch (const std::invalid_argument& e) {
            throw ConfigurationError(std::string("plan: ") + e.what());
        }
        p.validate();
        return p;
    }

    static ExperimentPlan load(const std::string& file) {
        std::ifstream in(file);
        if (!in) throw ConfigurationError("cannot read plan file " + file);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigurationError("cannot parse plan file " + file + ": " + e.what());
        }
        return from_json(j);
    }
};

inline LinearModelConfig plan_model_config(const ExperimentPlan& plan, const std::optional<std::string>& override_model = std::nullopt) {
    LinearModelConfig c = override_model ? load_model_config(*override_model)
                          : plan.model_inline ? config_from_json(*plan.model_inline)
                                              : load_model_config(plan.model);
    if (plan.burn_in) c.burn_in = plan.burn_in;
    return c;
}

/// Stationary path for (master seed, T, replication): burn-in from the initial
/// law, then the observed path. Seeds depend only on these three values.
inline PathRecord replication_path(const ModelSpec& m, double T, double dt, std::uint64_t master, std::size_t rep, bool instrumented = false) {
    const std::uint64_t s = derive_seed(master, {std::bit_cast<std::uint64_t>(T), rep});
    SimulationOptions opt;
    opt.instrumented = instrumented;
    opt.initial_state = burn_in(m, m.initial_law.burn_in, dt, derive_seed(s, {0}));
    return simulate(m, T, dt, derive_seed(s, {1}), opt);
}

/// Target b_j(x) and risk weight on the grid, shared by every replication.
struct RiskTarget {
    std::vector<double> drift;
    std::vector<double> weight;
    std::vector<std::string> warnings;
};

inline RiskTarget make_risk_target(const ModelSpec& m, const EvaluationGrid& grid, std::size_t j, const ExperimentPlan& plan,
                                   const KernelSpec& k) {
    RiskTarget t;
    std::vector<double> b(m.dim);
    for (std::size_t p = 0; p < grid.size(); ++p) {
        m.drift(grid.point(p), b);
        t.drift.push_back(b[j]);
    }
    if (plan.risk_weight == "plain") {
        t.weight.assign(grid.size(), 1.0);
    } else if (m.invariant_density) {
        for (std::size_t p = 0; p < grid.size(); ++p) t.weight.push_back(m.invariant_density(grid.point(p)));
    } else {
        const double T_aux = plan.aux_factor * plan.T_list.back();
        const auto path = replication_path(m, std::ceil(T_aux / plan.dt) * plan.dt, plan.dt, derive_seed(plan.seed, {0x61757800ULL}), 0);
        const double h = std::pow(path.horizon, -0.2);
        t.weight = rho_hat(path, k, Bandwidth(std::vector<double>(m.dim, std::min(h, 0.5))), grid).values;
        t.warnings.push_back("model '" + m.name + "' has no closed-form invariant density; the risk weight is a rho_hat estimate from a path of length " +
                             std::to_string(path.horizon));
    }
    return t;
}

inline double weighted_sup_error(const std::vector<double>& est, const RiskTarget& t) {
    double r = 0.0;
    for (std::size_t p = 0; p < est.size(); ++p) r = std::max(r, std::abs((est[p] - t.drift[p]) * t.weight[p]));
    return r;
}

struct SlopeFit {
    std::string regressor;
    double slope = 0.0;
    double intercept = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::size_t dof = 0;

    bool excludes_zero() const { return ci_hi < 0.0 || ci_lo > 0.0; }
};

/// OLS of log(mean) on log(T/log T) (or log T). The slope variance adds the
/// residual term and the Monte Carlo variance of each log mean propagated
/// through the OLS weights; the interval uses the t quantile with n-2 dof.
inline std::optional<SlopeFit> fit_rate_slope(const std::vector<double>& T, const std::vector<double>& mean, const std::vector<double>& se,
                                              const std::string& regressor = "T_over_logT") {
    const std::size_t n = T.size();
    if (n < 3) return std::nullopt;
    std::vector<double> x(n), y(n), vy(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(mean[i] > 0.0) || !std::isfinite(mean[i])) return std::nullopt;
        x[i] = regressor == "T" ? std::log(T[i]) : std::log(T[i] / std::log(T[i]));
        y[i] = std::log(mean[i]);
        vy[i] = std::pow(se[i] / mean[i], 2);
    }
    const double xm = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double ym = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - xm) * (x[i] - xm);
        sxy += (x[i] - xm) * (y[i] - ym);
    }
    SlopeFit f;
    f.regressor = regressor;
    f.slope = sxy / sxx;
    f.intercept = ym - f.slope * xm;
    double ssr = 0.0, mc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ssr += std::pow(y[i] - f.intercept - f.slope * x[i], 2);
        mc += std::pow((x[i] - xm) / sxx, 2) * vy[i];
    }
    f.dof = n - 2;
    f.se = std::sqrt(ssr / static_cast<double>(f.dof) / sxx + mc);
    const double q = boost::math::quantile(boost::math::students_t(static_cast<double>(f.dof)), 0.975);
    f.ci_lo = f.slope - q * f.se;
    f.ci_hi = f.slope + q * f.se;
    return f;
}

struct RiskAtT {
    double T = 0.0;
    std::vector<double> values;
    std::vector<std::size_t> reps;
    std::vector<std::string> failures;
    double mean = 0.0;
    double se = 0.0;
    /// (mean of squared risks)^{1/2}
    double p2 = 0.0;
    std::vector<double> bandwidth_b;
    std::vector<double> bandwidth_rho;
};

struct RiskReport {
    ExperimentPlan plan;
    std::string model_name;
    std::vector<RiskAtT> per_T;
    std::optional<SlopeFit> slope;
    double theoretical_exponent = 0.0;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["model"] = model_name;
        j["theoretical_slope"] = -theoretical_exponent;
        j["per_T"] = nlohmann::json::array();
        for (const auto& r : per_T)
            j["per_T"].push_back({{"T", r.T}, {"mean", r.mean}, {"se", r.se}, {"p2", r.p2}, {"n", r.values.size()},
                                  {"failures", r.failures.size()}, {"failure_messages", r.failures},
                                  {"bandwidth_b", r.bandwidth_b}, {"bandwidth_rho", r.bandwidth_rho}});
        if (slope)
            j["slope"] = {{"regressor", slope->regressor}, {"slope", slope->slope}, {"intercept", slope->intercept}, {"se", slope->se},
                          {"ci95", {slope->ci_lo, slope->ci_hi}}, {"dof", slope->dof}};
        else
            j["slope"] = nullptr;
        j["warnings"] = warnings;
        j["note"] = "finite-T thresholds are empirical calibrations; the rate statements are asymptotic";
        j["settings"] = plan.to_json();
        return j;
    }
};

inline void summarize(RiskAtT& r) {
    const double n = static_cast<double>(r.values.size());
    if (r.values.empty()) return;
    r.mean = std::accumulate(r.values.begin(), r.values.end(), 0.0) / n;
    double ss = 0.0, sq = 0.0;
    for (double v : r.values) {
        ss += (v - r.mean) * (v - r.mean);
        sq += v * v;
    }
    r.se = r.values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    r.p2 = std::sqrt(sq / n);
}

/// Penalty constants with coefficient bounds probed on D enlarged by 1.
inline PenaltyConstants model_penalty_constants(const ModelSpec& m, const Box& D, const KernelSpec& k, const PenaltyOptions& opt) {
    Box probe = D;
    for (std::size_t i = 0; i < probe.dim(); ++i) {
        probe.lo[i] -= 1.0;
        probe.hi[i] += 1.0;
    }
    const auto rep = validate_model(m, probe, std::max<std::size_t>(256, std::size_t{1} << m.dim));
    return make_penalty_constants(m, rep.bounds, k, opt);
}

namespace detail {

struct ReplicationOutcome {
    double risk = 0.0;
    std::vector<double> h_b;
    std::vector<double> h_rho;
};

/// Everything that is fixed across replications of one experiment.
struct RiskContext {
    ModelSpec model;
    KernelSpec kernel;
    EvaluationGrid grid;
    RiskTarget target;
    HolderParams beta{std::vector<double>{2.0}};
    std::optional<PenaltyConstants> penalty;
};

inline RiskContext make_context(const ExperimentPlan& plan, const LinearModelConfig& cfg) {
    RiskContext c;
    c.model = build_model(cfg);
    const std::size_t d = c.model.dim;
    if (plan.coord >= d) throw ConfigurationError("plan: coord out of range for the model dimension");
    c.kernel = make_kernel(plan.kernel_order);
    const Box D = plan.domain_or_default(d);
    if (D.dim() != d) throw ConfigurationError("plan: domain dimension does not match the model");
    c.grid = EvaluationGrid::standard(D, plan.grid_per_axis);
    c.target = make_risk_target(c.model, c.grid, plan.coord, plan, c.kernel);
    c.beta = HolderParams(plan.beta.empty() ? std::vector<double>(d, 2.0) : plan.beta);
    if (c.beta.dim() != d) throw ConfigurationError("plan: beta must have one entry per dimension");
    if (plan.bandwidth_policy == "adaptive") c.penalty = model_penalty_constants(c.model, D, c.kernel, plan.penalty);
    return c;
}

inline std::optional<TruncationRule> plan_truncation(const ExperimentPlan& plan, double T) {
    if (plan.estimator != "trunc") return std::nullopt;
    return TruncationRule::rate_linked(plan.trunc_mode, plan.trunc_alpha, T);
}

/// One estimate of b_j on the grid under the plan's bandwidth policy.
inline EstimatorOutput estimate_drift(const ExperimentPlan& plan, const RiskContext& c, const PathRecord& path,
                                      const std::vector<Bandwidth>& candidates, const std::optional<TruncationRule>& trunc) {
    const double T = path.horizon;
    const std::size_t d = c.model.dim;
    if (plan.bandwidth_policy == "adaptive")
        return adaptive_nw(path, c.kernel, plan.coord, c.grid, candidates, *c.penalty, plan.rho_min, trunc).estimate;
    Bandwidth hb, hr;
    if (plan.bandwidth_policy == "fixed") {
        hb = Bandwidth(plan.fixed_h);
        hr = Bandwidth(plan.fixed_h_rho.empty() ? plan.fixed_h : plan.fixed_h_rho);
    } else {
        const auto ob = optimal_bandwidths(T, d, c.beta, plan.bandwidth_constants);
        hb = Bandwidth(ob.h_b);
        hr = Bandwidth(ob.h_rho);
    }
    const auto num = bar_b(path, c.kernel, hb, plan.coord, c.grid, trunc);
    const auto den = rho_hat(path, c.kernel, hr, c.grid);
    return nw_ratio(num, den, plan.ridge_scale * ridge_rT(T, d, c.beta.beta_bar()));
}

}  // namespace detail

/// Replicated simulate → estimate → weighted sup-error over the plan's T list.
inline RiskReport run_risk_experiment(const ExperimentPlan& plan) {
    plan.validate();
    const auto cfg = plan_model_config(plan);
    const auto ctx = detail::make_context(plan, cfg);
    RiskReport rep;
    rep.plan = plan;
    rep.model_name = ctx.model.name;
    rep.theoretical_exponent = rate_exponent(ctx.beta, ctx.model.dim);
    rep.warnings = ctx.target.warnings;

    std::vector<std::vector<Bandwidth>> candidates(plan.T_list.size());
    if (plan.bandwidth_policy == "adaptive")
        for (std::size_t t = 0; t < plan.T_list.size(); ++t) candidates[t] = grid_scriptHT(plan.T_list[t], ctx.model.dim, plan.grid_rule());

    const std::size_t R = plan.replications;
    const auto results = parallel_map(plan.T_list.size() * R, plan.threads, [&](std::size_t task) {
        const std::size_t t = task / R, r = task % R;
        const double T = plan.T_list[t];
        const auto path = replication_path(ctx.model, T, plan.dt, plan.seed, r);
        const auto est = detail::estimate_drift(plan, ctx, path, candidates[t], detail::plan_truncation(plan, T));
        detail::ReplicationOutcome o;
        o.risk = weighted_sup_error(est.values, ctx.target);
        o.h_b = est.meta.bandwidth;
        o.h_rho = est.meta.bandwidth_rho;
        if (!std::isfinite(o.risk)) throw ExperimentError("non-finite risk");
        return o;
    });

    for (std::size_t t = 0; t < plan.T_list.size(); ++t) {
        RiskAtT row;
        row.T = plan.T_list[t];
        for (std::size_t r = 0; r < R; ++r) {
            const auto& res = results[t * R + r];
            if (res.ok()) {
                row.values.push_back(res.value->risk);
                row.reps.push_back(r);
                if (row.bandwidth_b.empty() && plan.bandwidth_policy != "adaptive") {
                    row.bandwidth_b = res.value->h_b;
                    row.bandwidth_rho = res.value->h_rho;
                }
            } else {
                try {
                    std::rethrow_exception(res.error);
                } catch (const std::exception& e) {
                    row.failures.push_back("rep " + std::to_string(r) + ": " + e.what());
                }
            }
        }
        if (static_cast<double>(row.failures.size()) > 0.1 * static_cast<double>(R))
            throw ExperimentError("T=" + std::to_string(row.T) + ": " + std::to_string(row.failures.size()) + " of " + std::to_string(R) +
                                  " replications failed; first: " + row.failures.front());
        summarize(row);
        rep.per_T.push_back(std::move(row));
    }
    std::vector<double> Ts, means, ses;
    for (const auto& r : rep.per_T) {
        Ts.push_back(r.T);
        means.push_back(r.mean);
        ses.push_back(r.se);
    }
    rep.slope = fit_rate_slope(Ts, means, ses, plan.regressor);
    return rep;
}

/// Fraction of bootstrap resamples (replications resampled independently per
/// T) in which the mean risk at per_T[j] is below that at per_T[i].
inline double bootstrap_monotonicity(const RiskReport& rep, std::size_t i, std::size_t j, std::size_t B = 1000, std::uint64_t seed = 7) {
    const auto& a = rep.per_T.at(i).values;
    const auto& b = rep.per_T.at(j).values;
    if (a.empty() || b.empty()) throw std::invalid_argument("bootstrap_monotonicity: empty replication set");
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> ua(0, a.size() - 1), ub(0, b.size() - 1);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < B; ++k) {
        double ma = 0.0, mb = 0.0;
        for (std::size_t q = 0; q < a.size(); ++q) ma += a[ua(rng)];
        for (std::size_t q = 0; q < b.size(); ++q) mb += b[ub(rng)];
        hits += mb / static_cast<double>(b.size()) < ma / static_cast<double>(a.size());
    }
    return static_cast<double>(hits) / static_cast<double>(B);
}

/// Adaptive risk next to the risk of every fixed candidate bandwidth, on the
/// same paths. Fixed estimators share the adaptive density denominator.
struct OracleComparison {
    double T = 0.0;
    std::vector<Bandwidth> candidates;
    std::vector<double> adaptive;
    std::vector<std::vector<double>> fixed;  // [candidate][replication]
    std::vector<std::vector<double>> chosen;  // chosen drift bandwidth per replication

    double adaptive_mean() const { return std::accumulate(adaptive.begin(), adaptive.end(), 0.0) / static_cast<double>(adaptive.size()); }
    std::vector<double> fixed_means() const {
        std::vector<double> m;
        for (const auto& f : fixed) m.push_back(std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size()));
        return m;
    }
    double best_fixed_mean() const {
        const auto m = fixed_means();
        return *std::min_element(m.begin(), m.end());
    }
};

inline OracleComparison run_oracle_comparison(const ExperimentPlan& plan, double T) {
    auto p = plan;
    p.bandwidth_policy = "adaptive";
    p.validate();
    const auto ctx = detail::make_context(p, plan_model_config(p));
    OracleComparison oc;
    oc.T = T;
    oc.candidates = grid_scriptHT(T, ctx.model.dim, p.grid_rule());
    const std::size_t R = p.replications;
    struct Out {
        double adaptive;
        std::vector<double> fixed;
        std::vector<double> chosen;
    };
    const auto results = parallel_map(R, p.threads, [&](std::size_t r) {
        const auto path = replication_path(ctx.model, T, p.dt, p.seed, r);
        const auto trunc = detail::plan_truncation(p, T);
        const auto ad = adaptive_nw(path, ctx.kernel, p.coord, ctx.grid, oc.candidates, *ctx.penalty, p.rho_min, trunc);
        Out o;
        o.adaptive = weighted_sup_error(ad.estimate.values, ctx.target);
        o.chosen = ad.drift_trace.chosen.values();
        for (const auto& h : oc.candidates) {
            const auto num = bar_b(path, ctx.kernel, h, p.coord, ctx.grid, trunc);
            std::vector<double> v(num.values.size());
            for (std::size_t g = 0; g < v.size(); ++g) v[g] = num.values[g] / std::max(ad.density.values[g], p.rho_min);
            o.fixed.push_back(weighted_sup_error(v, ctx.target));
        }
        return o;
    });
    oc.fixed.assign(oc.candidates.size(), {});
    std::size_t failed = 0;
    std::string first;
    for (const auto& res : results) {
        if (!res.ok()) {
            if (failed++ == 0) {
                try {
                    std::rethrow_exception(res.error);
                } catch (const std::exception& e) {
                    first = e.what();
                }
            }
            continue;
        }
        oc.adaptive.push_back(res.value->adaptive);
        oc.chosen.push_back(res.value->chosen);
        for (std::size_t c = 0; c < oc.candidates.size(); ++c) oc.fixed[c].push_back(res.value->fixed[c]);
    }
    if (static_cast<double>(failed) > 0.1 * static_cast<double>(R))
        throw ExperimentError(std::to_string(failed) + " of " + std::to_string(R) + " replications failed; first: " + first);
    return oc;
}

struct ConcentrationRow {
    std::string model;
    double h = 0.0;
    std::size_t rep = 0;
    double sup_H = 0.0;
    double sup_M = 0.0;
    double sup_J = 0.0;
};

struct ConcentrationSummary {
    std::string model;
    double h = 0.0;
    double p95_H = 0.0;
    double p95_M = 0.0;
    double p95_J = 0.0;
    /// √(V(h) log Σ h_i^{-1})
    double scale = 0.0;
};

struct ConcentrationReport {
    std::vector<ConcentrationRow> rows;
    std::vector<ConcentrationSummary> summary;
};

inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Sup over the class {y ↦ Π k((x_i - y_i)/h_i) : x on a lattice of D} of
/// |ℍ - √T μ(g b_j)|, |𝕄| and |𝕁| at T = T_list.front(), for each h in h_list.
inline ConcentrationReport run_concentration_diagnostic(const ExperimentPlan& plan, const std::vector<double>& h_list, std::size_t m) {
    plan.validate();
    if (m < 1) throw ConfigurationError("diagnose: class size must be >= 1");
    if (h_list.empty()) throw ConfigurationError("diagnose: h_list must not be empty");
    const auto cfg = plan_model_config(plan);
    const ModelSpec model = build_model(cfg);
    const std::size_t d = model.dim, j = plan.coord;
    if (j >= d) throw ConfigurationError("plan: coord out of range for the model dimension");
    const KernelSpec k = make_kernel(plan.kernel_order);
    const Box D = plan.domain_or_default(d);
    const auto per_axis = static_cast<std::size_t>(std::max(1.0, std::round(std::pow(static_cast<double>(m), 1.0 / static_cast<double>(d)))));
    const auto cls = EvaluationGrid::lattice(D, std::vector<std::size_t>(d, per_axis));
    const double T = plan.T_list.front();
    std::vector<Bandwidth> hs;
    for (double h : h_list) hs.emplace_back(std::vector<double>(d, h));

    // μ(g b_j) from one long auxiliary path
    const double T_aux = std::ceil(plan.aux_factor * T / plan.dt) * plan.dt;
    const auto aux = replication_path(model, T_aux, plan.dt, derive_seed(plan.seed, {0x6d75ULL}), 0);
    std::vector<double> bw(aux.steps()), b(d);
    for (std::size_t i = 0; i < aux.steps(); ++i) {
        model.drift(aux.state(i), b);
        bw[i] = b[j] * aux.dt / aux.horizon;
    }
    const auto aux_samples = SampleSet::left_points(aux, bw);
    std::vector<std::vector<double>> mu;
    for (const auto& h : hs) {
        auto v = aux_samples.evaluate(AxisKernels::product(k, h), cls);
        for (auto& x : v) x *= h.volume();
        mu.push_back(std::move(v));
    }

    const std::size_t R = plan.replications;
    const auto results = parallel_map(R, plan.threads, [&](std::size_t r) {
        const auto path = replication_path(model, T, plan.dt, plan.seed, r, true);
        const std::size_t n = path.steps();
        std::vector<double> wH(n), wM(n), wJ(n, 0.0), bb(d), s(d * d), g(d * d), tmp(d);
        const auto& m_nu = model.jump_law.mean_mark;
        for (std::size_t i = 0; i < n; ++i) {
            const auto x = path.state(i);
            model.drift(x, bb);
            model.dispersion(x, s);
            detail::matvec(s, path.brownian(i), tmp);
            wH[i] = bb[j] * path.dt;
            wM[i] = tmp[j];
            if (!model.jump_law.degenerate()) {
                model.jump_coeff(x, g);
                detail::matvec(g, m_nu, tmp);
                wJ[i] = -tmp[j] * path.dt;
            }
        }
        for (const auto& ev : path.jumps) wJ[ev.step] += ev.displacement[j];
        const auto sH = SampleSet::left_points(path, wH);
        const auto sM = sH.with_weights(wM);
        const auto sJ = sH.with_weights(wJ);
        const double rt = std::sqrt(path.horizon);
        std::vector<ConcentrationRow> rows;
        for (std::size_t q = 0; q < hs.size(); ++q) {
            const auto K = AxisKernels::product(k, hs[q]);
            const double v = hs[q].volume();
            const auto H = sH.evaluate(K, cls), M = sM.evaluate(K, cls), J = sJ.evaluate(K, cls);
            ConcentrationRow row;
            row.model = model.name;
            row.h = h_list[q];
            row.rep = r;
            for (std::size_t p = 0; p < cls.size(); ++p) {
                row.sup_H = std::max(row.sup_H, std::abs(v * H[p] / rt - rt * mu[q][p]));
                row.sup_M = std::max(row.sup_M, std::abs(v * M[p] / rt));
                row.sup_J = std::max(row.sup_J, std::abs(v * J[p] / rt));
            }
            rows.push_back(row);
        }
        return rows;
    });
    ConcentrationReport rep;
    std::size_t failed = 0;
    for (const auto& res : results) {
        if (!res.ok()) {
            ++failed;
            continue;
        }
        rep.rows.insert(rep.rows.end(), res.value->begin(), res.value->end());
    }
    if (static_cast<double>(failed) > 0.1 * static_cast<double>(R))
        throw ExperimentError(std::to_string(failed) + " of " + std::to_string(R) + " diagnostic replications failed");
    for (std::size_t q = 0; q < hs.size(); ++q) {
        std::vector<double> H, M, J;
        for (const auto& row : rep.rows)
            if (row.h == h_list[q]) {
                H.push_back(row.sup_H);
                M.push_back(row.sup_M);
                J.push_back(row.sup_J);
            }
        rep.summary.push_back({model.name, h_list[q], percentile(H, 0.95), percentile(M, 0.95), percentile(J, 0.95),
                               std::sqrt(hs[q].volume() * hs[q].log_inv_sum())});
    }
    return rep;
}

struct TruncationRow {
    std::string model;
    double T = 0.0;
    std::size_t rep = 0;
    double risk_plain = 0.0;
    double risk_trunc = 0.0;
    std::size_t truncated_jumps = 0;
};

struct TruncationSummary {
    std::string model;
    double T = 0.0;
    std::size_t n = 0;
    /// Fraction of paired replications with truncated risk <= plain risk.
    double trunc_not_worse = 0.0;
    double mean_ratio = 0.0;
    double median_ratio = 0.0;
};

struct TruncationReport {
    std::vector<TruncationRow> rows;
    std::vector<TruncationSummary> summary;
    std::vector<std::string> warnings;
};

/// Paired plain vs truncated estimators on identical paths, per model in
/// plan.compare_models and per T.
inline TruncationReport run_truncation_comparison(const ExperimentPlan& plan) {
    plan.validate();
    TruncationReport rep;
    for (const auto& name : plan.compare_models) {
        auto p = plan;
        p.model = name;
        p.model_inline.reset();
        const auto ctx = detail::make_context(p, plan_model_config(p, name));
        rep.warnings.insert(rep.warnings.end(), ctx.target.warnings.begin(), ctx.target.warnings.end());
        for (double T : p.T_list) {
            std::vector<Bandwidth> cands;
            if (p.bandwidth_policy == "adaptive") cands = grid_scriptHT(T, ctx.model.dim, p.grid_rule());
            const auto rule = TruncationRule::rate_linked(p.trunc_mode, p.trunc_alpha, T);
            const auto results = parallel_map(p.replications, p.threads, [&](std::size_t r) {
                const auto path = replication_path(ctx.model, T, p.dt, p.seed, r);
                TruncationRow row;
                row.model = ctx.model.name;
                row.T = T;
                row.rep = r;
                row.risk_plain = weighted_sup_error(detail::estimate_drift(p, ctx, path, cands, std::nullopt).values, ctx.target);
                row.risk_trunc = weighted_sup_error(detail::estimate_drift(p, ctx, path, cands, rule).values, ctx.target);
                for (const auto& ev : path.jumps) row.truncated_jumps += exceeds(ev.displacement, rule.delta);
                return row;
            });
            TruncationSummary s;
            s.model = ctx.model.name;
            s.T = T;
            std::vector<double> ratios;
            std::size_t not_worse = 0, failed = 0;
            for (const auto& res : results) {
                if (!res.ok()) {
                    ++failed;
                    continue;
                }
                rep.rows.push_back(*res.value);
                not_worse += res.value->risk_trunc <= res.value->risk_plain;
                ratios.push_back(res.value->risk_plain > 0.0 ? res.value->risk_trunc / res.value->risk_plain : 1.0);
            }
            if (static_cast<double>(failed) > 0.1 * static_cast<double>(p.replications))
                throw ExperimentError(std::to_string(failed) + " paired replications failed for " + name);
            s.n = ratios.size();
            s.trunc_not_worse = static_cast<double>(not_worse) / static_cast<double>(s.n);
            s.mean_ratio = std::accumulate(ratios.begin(), ratios.end(), 0.0) / static_cast<double>(s.n);
            s.median_ratio = percentile(ratios, 0.5);
            rep.summary.push_back(s);
        }
    }
    return rep;
}

/// CSV writers; every number is printed with 17 significant digits.
inline void write_risk_csv(const RiskReport& rep, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw ConfigurationError("cannot write " + file);
    out << "T,rep,risk\n";
    for (const auto& r : rep.per_T)
        for (std::size_t q = 0; q < r.values.size(); ++q) out << detail::fmt17(r.T) << ',' << r.reps[q] << ',' << detail::fmt17(r.values[q]) << '\n';
}

inline void write_summary_json(const RiskReport& rep, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw ConfigurationError("cannot write " + file);
    out << rep.to_json().dump(2) << '\n';
}

inline void write_diag_csv(const ConcentrationReport& rep, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw ConfigurationError("cannot write " + file);
    out << "model,h,rep,sup_H_centered,sup_M,sup_J\n";
    for (const auto& r : rep.rows)
        out << r.model << ',' << detail::fmt17(r.h) << ',' << r.rep << ',' << detail::fmt17(r.sup_H) << ',' << detail::fmt17(r.sup_M) << ','
            << detail::fmt17(r.sup_J) << '\n';
    std::ofstream sum(file + ".summary.csv");
    sum << "model,h,p95_H_centered,p95_M,p95_J,sqrt_V_log\n";
    for (const auto& s : rep.summary)
        sum << s.model << ',' << detail::fmt17(s.h) << ',' << detail::fmt17(s.p95_H) << ',' << detail::fmt17(s.p95_M) << ',' << detail::fmt17(s.p95_J)
            << ',' << detail::fmt17(s.scale) << '\n';
}

inline void write_trunc_csv(const TruncationReport& rep, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw ConfigurationError("cannot write " + file);
    out << "model,T,rep,risk_plain,risk_trunc,ratio,truncated_jumps\n";
    for (const auto& r : rep.rows)
        out << r.model << ',' << detail::fmt17(r.T) << ',' << r.rep << ',' << detail::fmt17(r.risk_plain) << ',' << detail::fmt17(r.risk_trunc) << ','
            << detail::fmt17(r.risk_plain > 0.0 ? r.risk_trunc / r.risk_plain : 1.0) << ',' << r.truncated_jumps << '\n';
}

inline void write_oracle_csv(const OracleComparison& oc, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw ConfigurationError("cannot write " + file);
    out << "T,rep,estimator,h,risk\n";
    for (std::size_t r = 0; r < oc.adaptive.size(); ++r) {
        out << detail::fmt17(oc.T) << ',' << r << ",adaptive," << detail::fmt17(oc.chosen[r][0]) << ',' << detail::fmt17(oc.adaptive[r]) << '\n';
        for (std::size_t c = 0; c < oc.candidates.size(); ++c)
            out << detail::fmt17(oc.T) << ',' << r << ",fixed," << detail::fmt17(oc.candidates[c][0]) << ',' << detail::fmt17(oc.fixed[c][r]) << '\n';
    }
}

}  // namespace jumpdrift
