#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "jumpdrift/jumpdrift.hpp"

using namespace jumpdrift;
namespace fs = std::filesystem;

namespace {

constexpr int kExperimentError = 2;
constexpr int kConfigurationError = 3;

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

double to_number(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigurationError("cannot read " + what + " from '" + s + "'");
    }
}

/// "lo:hi:n" for every axis, or one such triple per axis separated by ';'.
EvaluationGrid parse_grid(const std::string& spec, std::size_t d) {
    if (spec.empty()) return EvaluationGrid::standard(Box::cube(d, -1.0, 1.0));
    auto axes = split(spec, ';');
    if (axes.size() == 1) axes.assign(d, axes[0]);
    if (axes.size() != d) throw ConfigurationError("--grid needs one lo:hi:n triple or one per axis");
    Box D{std::vector<double>(d), std::vector<double>(d)};
    std::vector<std::size_t> n(d);
    for (std::size_t i = 0; i < d; ++i) {
        const auto t = split(axes[i], ':');
        if (t.size() != 3) throw ConfigurationError("--grid axis '" + axes[i] + "' is not lo:hi:n");
        D.lo[i] = to_number(t[0], "grid lower bound");
        D.hi[i] = to_number(t[1], "grid upper bound");
        const double cnt = to_number(t[2], "grid point count");
        if (!(D.hi[i] > D.lo[i]) || cnt < 1 || cnt != std::floor(cnt)) throw ConfigurationError("--grid axis '" + axes[i] + "' is invalid");
        n[i] = static_cast<std::size_t>(cnt);
    }
    return EvaluationGrid::lattice(D, n);
}

std::vector<double> parse_list(const std::string& s, std::size_t d, const std::string& what) {
    std::vector<double> v;
    for (const auto& t : split(s, ',')) v.push_back(to_number(t, what));
    if (v.size() == 1) v.assign(d, v[0]);
    if (v.size() != d) throw ConfigurationError(what + " needs 1 or " + std::to_string(d) + " values");
    return v;
}

std::size_t coord_index(int coord, std::size_t d) {
    if (coord < 1 || static_cast<std::size_t>(coord) > d) throw ConfigurationError("--coord must be in 1.." + std::to_string(d));
    return static_cast<std::size_t>(coord - 1);
}

std::optional<TruncationRule> parse_trunc(const std::string& s, const std::string& mode, double T) {
    TruncationRule::Mode m;
    if (mode == "exact-jump")
        m = TruncationRule::Mode::ExactJump;
    else if (mode == "threshold")
        m = TruncationRule::Mode::Threshold;
    else
        throw ConfigurationError("--trunc-mode must be exact-jump or threshold");
    if (s == "none" || s == "plain") return std::nullopt;
    const auto pos = s.find(':');
    if (pos == std::string::npos) throw ConfigurationError("--trunc must be none, alpha:VALUE or delta:VALUE");
    const std::string key = s.substr(0, pos);
    const double v = to_number(s.substr(pos + 1), "truncation level");
    if (!(v > 0.0)) throw ConfigurationError("truncation level must be positive");
    if (key == "alpha" || key == "trunc") return TruncationRule::rate_linked(m, v, T);
    if (key == "delta") return TruncationRule::fixed(m, v);
    throw ConfigurationError("--trunc must be none, alpha:VALUE or delta:VALUE");
}

void print_warnings(const std::vector<std::string>& w) {
    for (const auto& s : w) std::cerr << "warning: " << s << '\n';
}

void ensure_parent(const std::string& file) {
    const auto parent = fs::path(file).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

struct SimulateArgs {
    std::string model, out;
    double T = 0.0, dt = 0.01;
    std::uint64_t seed = 1;
    bool instrumented = false;
    std::optional<double> burn;
};

int cmd_simulate(const SimulateArgs& a) {
    auto cfg = load_model_config(a.model);
    if (a.burn) cfg.burn_in = a.burn;
    const auto m = build_model(cfg);
    SimulationOptions opt;
    opt.instrumented = a.instrumented;
    opt.initial_state = burn_in(m, m.initial_law.burn_in, a.dt, derive_seed(a.seed, {0}));
    const auto path = simulate(m, a.T, a.dt, a.seed, opt);
    ensure_parent(a.out);
    write_path(path, a.out, to_json(cfg));
    print_warnings(path.warnings);
    std::cout << "wrote " << a.out << ": " << path.steps() << " steps, " << path.jumps.size() << " jumps, burn-in " << m.initial_law.burn_in << '\n';
    return 0;
}

struct EstimateArgs {
    std::string path, out, h = "auto", h_rho = "auto", beta = "2", trunc = "none", trunc_mode = "exact-jump", ridge = "auto", grid, what = "nw";
    int coord = 1, order = 1;
};

int cmd_estimate(const EstimateArgs& a) {
    const auto lp = read_path(a.path);
    const auto& path = lp.path;
    const std::size_t d = path.dim;
    const auto j = coord_index(a.coord, d);
    const auto k = make_kernel(a.order);
    const auto grid = parse_grid(a.grid, d);
    const HolderParams beta(parse_list(a.beta, d, "--beta"));
    const auto ob = optimal_bandwidths(path.horizon, d, beta);
    print_warnings(ob.warnings);
    const Bandwidth hb(a.h == "auto" ? ob.h_b : parse_list(a.h, d, "--h"));
    const Bandwidth hr(a.h_rho == "auto" ? ob.h_rho : parse_list(a.h_rho, d, "--h-rho"));
    const auto trunc = parse_trunc(a.trunc, a.trunc_mode, path.horizon);
    EstimatorOutput out;
    if (a.what == "rho") {
        out = rho_hat(path, k, hr, grid);
    } else {
        const auto num = bar_b(path, k, hb, j, grid, trunc);
        if (a.what == "bar_b") {
            out = num;
        } else if (a.what == "nw") {
            const double ridge = a.ridge == "auto" ? ridge_rT(path.horizon, d, beta.beta_bar()) : to_number(a.ridge, "--ridge");
            out = nw_ratio(num, rho_hat(path, k, hr, grid), ridge);
        } else {
            throw ConfigurationError("--what must be nw, bar_b or rho");
        }
    }
    ensure_parent(a.out);
    out.write(a.out);
    std::cout << "wrote " << a.out << " (" << out.grid.size() << " points, sup |estimate| = " << out.sup_abs() << ")\n";
    return 0;
}

struct AdaptArgs {
    std::string path, out, mode = "plain", trunc_mode = "exact-jump", model, grid, rule = "literal";
    int coord = 1, order = 1;
    std::optional<double> kappa;
    double C1 = 1.0, rho_min = 0.1, iota = 2.0;
    std::optional<double> alpha;
};

int cmd_adapt(const AdaptArgs& a) {
    const auto lp = read_path(a.path);
    const auto& path = lp.path;
    const std::size_t d = path.dim;
    const auto j = coord_index(a.coord, d);
    LinearModelConfig cfg;
    if (!a.model.empty())
        cfg = load_model_config(a.model);
    else if (lp.meta.contains("model"))
        cfg = config_from_json(lp.meta["model"]);
    else
        throw ConfigurationError("the path carries no model description; pass --model");
    if (cfg.dim != d) throw ConfigurationError("model dimension does not match the path");
    const auto m = build_model(cfg);
    const auto k = make_kernel(a.order);
    const auto grid = parse_grid(a.grid, d);
    PenaltyOptions po;
    po.C1 = a.C1;
    po.kappa = a.kappa;
    po.p = 1.0;
    if (a.alpha) po.alpha = *a.alpha;
    const auto consts = model_penalty_constants(m, grid.domain, k, po);
    std::optional<TruncationRule> trunc;
    if (a.mode != "plain") {
        if (a.mode.rfind("trunc:", 0) != 0) throw ConfigurationError("--mode must be plain or trunc:ALPHA");
        trunc = parse_trunc("alpha:" + a.mode.substr(6), a.trunc_mode, path.horizon);
    }
    if (a.rule != "literal" && a.rule != "relaxed") throw ConfigurationError("--rule must be literal or relaxed");
    const auto rule = a.rule == "relaxed" ? CandidateGridRule::relaxed(a.iota) : CandidateGridRule::literal(a.iota);
    const auto cands = grid_scriptHT(path.horizon, d, rule);
    const auto est = adaptive_nw(path, k, j, grid, cands, consts, a.rho_min, trunc);
    ensure_parent(a.out);
    est.estimate.write(a.out);
    nlohmann::json trace;
    trace["drift"] = est.drift_trace.to_json();
    trace["density"] = est.density_trace.to_json();
    trace["constants"] = consts.to_json();
    trace["candidate_rule"] = a.rule;
    std::ofstream(a.out + ".trace.json") << trace.dump(2) << '\n';
    std::cout << "wrote " << a.out << "; chosen h = " << est.drift_trace.chosen[0];
    for (std::size_t i = 1; i < d; ++i) std::cout << 'x' << est.drift_trace.chosen[i];
    std::cout << " from " << cands.size() << " candidates (" << est.drift_trace.tie_break << ")\n";
    return 0;
}

struct PlanArgs {
    std::string plan, out_dir;
    std::optional<unsigned> threads;
};

ExperimentPlan load_plan(const PlanArgs& a) {
    auto p = ExperimentPlan::load(a.plan);
    if (!a.out_dir.empty()) p.output_dir = a.out_dir;
    if (a.threads) p.threads = *a.threads;
    fs::create_directories(p.output_dir);
    return p;
}

int cmd_risk(const PlanArgs& a) {
    const auto p = load_plan(a);
    const auto rep = run_risk_experiment(p);
    print_warnings(rep.warnings);
    const auto dir = fs::path(p.output_dir);
    write_risk_csv(rep, (dir / "risk.csv").string());
    write_summary_json(rep, (dir / "summary.json").string());
    for (const auto& r : rep.per_T)
        std::cout << "T=" << r.T << " mean=" << r.mean << " se=" << r.se << " n=" << r.values.size() << " failures=" << r.failures.size() << '\n';
    if (rep.slope)
        std::cout << "slope=" << rep.slope->slope << " ci95=[" << rep.slope->ci_lo << ", " << rep.slope->ci_hi << "] theoretical=" << -rep.theoretical_exponent
                  << '\n';
    return 0;
}

int cmd_diagnose(const PlanArgs& a) {
    const auto p = load_plan(a);
    const std::vector<double> hs = p.h_list.empty() ? std::vector<double>{1.0 / 8, 1.0 / 32} : p.h_list;
    const auto rep = run_concentration_diagnostic(p, hs, p.class_size);
    write_diag_csv(rep, (fs::path(p.output_dir) / "diag.csv").string());
    for (const auto& s : rep.summary)
        std::cout << s.model << " h=" << s.h << " p95|H-sqrtT mu|=" << s.p95_H << " p95|M|=" << s.p95_M << " p95|J|=" << s.p95_J
                  << " sqrt(V log)=" << s.scale << '\n';
    return 0;
}

int cmd_compare_trunc(const PlanArgs& a) {
    const auto p = load_plan(a);
    const auto rep = run_truncation_comparison(p);
    print_warnings(rep.warnings);
    const auto dir = fs::path(p.output_dir);
    write_trunc_csv(rep, (dir / "trunc.csv").string());
    nlohmann::json j = nlohmann::json::array();
    for (const auto& s : rep.summary) {
        j.push_back({{"model", s.model}, {"T", s.T}, {"n", s.n}, {"trunc_not_worse", s.trunc_not_worse}, {"mean_ratio", s.mean_ratio},
                     {"median_ratio", s.median_ratio}});
        std::cout << s.model << " T=" << s.T << " truncated<=plain in " << s.trunc_not_worse * 100.0 << "% of " << s.n
                  << " pairs, median ratio " << s.median_ratio << '\n';
    }
    std::ofstream(dir / "trunc_summary.json") << nlohmann::json{{"summary", j}, {"warnings", rep.warnings}, {"settings", p.to_json()}}.dump(2)
                                              << '\n';
    return 0;
}

void add_plan_options(CLI::App* sub, PlanArgs& a) {
    sub->add_option("--plan", a.plan, "experiment plan (JSON)")->required();
    sub->add_option("--out-dir", a.out_dir, "override the plan's output directory");
    sub->add_option("--threads", a.threads, "worker threads");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and drift estimation for ergodic jump diffusions"};
    app.require_subcommand(1);

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "simulate a stationary path and write it to CSV");
    sim->add_option("--model", sa.model, "preset name or model JSON file")->required();
    sim->add_option("--T", sa.T, "horizon")->required();
    sim->add_option("--dt", sa.dt, "step size");
    sim->add_option("--seed", sa.seed, "seed");
    sim->add_option("--out", sa.out, "output CSV path")->required();
    sim->add_option("--burn-in", sa.burn, "burn-in duration (default from the model)");
    sim->add_flag("--instrumented", sa.instrumented, "record Brownian increments");

    EstimateArgs ea;
    auto* est = app.add_subcommand("estimate", "kernel drift or density estimate from a path");
    est->set_help_flag("--help", "print this help message and exit");
    est->add_option("--path", ea.path, "path CSV")->required();
    est->add_option("--coord", ea.coord, "drift coordinate, 1-based");
    est->add_option("--h", ea.h, "drift bandwidth: auto or comma list");
    est->add_option("--h-rho", ea.h_rho, "density bandwidth: auto or comma list");
    est->add_option("--beta", ea.beta, "smoothness used by the auto bandwidths");
    est->add_option("--order", ea.order, "kernel order");
    est->add_option("--trunc", ea.trunc, "none, alpha:VALUE or delta:VALUE");
    est->add_option("--trunc-mode", ea.trunc_mode, "exact-jump or threshold");
    est->add_option("--ridge", ea.ridge, "auto or VALUE");
    est->add_option("--grid", ea.grid, "lo:hi:n (per axis with ';')");
    est->add_option("--what", ea.what, "nw, bar_b or rho");
    est->add_option("--out", ea.out, "output CSV")->required();

    AdaptArgs aa;
    auto* ad = app.add_subcommand("adapt", "Goldenshluger-Lepski adaptive drift estimate");
    ad->add_option("--path", aa.path, "path CSV")->required();
    ad->add_option("--coord", aa.coord, "drift coordinate, 1-based");
    ad->add_option("--mode", aa.mode, "plain or trunc:ALPHA");
    ad->add_option("--trunc-mode", aa.trunc_mode, "exact-jump or threshold");
    ad->add_option("--kappa", aa.kappa, "mixing rate (default from the model)");
    ad->add_option("--C1", aa.C1, "penalty constant C1");
    ad->add_option("--alpha", aa.alpha, "exponential-moment parameter of the truncated penalty");
    ad->add_option("--rho-min", aa.rho_min, "density floor");
    ad->add_option("--model", aa.model, "model, when the path has no model sidecar");
    ad->add_option("--rule", aa.rule, "candidate rule: literal or relaxed");
    ad->add_option("--iota", aa.iota, "candidate grid base");
    ad->add_option("--order", aa.order, "kernel order");
    ad->add_option("--grid", aa.grid, "lo:hi:n (per axis with ';')");
    ad->add_option("--out", aa.out, "output CSV")->required();

    PlanArgs ra, da, ca;
    auto* risk = app.add_subcommand("risk", "replicated risk experiment and rate fit");
    add_plan_options(risk, ra);
    auto* diag = app.add_subcommand("diagnose", "concentration diagnostic");
    add_plan_options(diag, da);
    auto* cmp = app.add_subcommand("compare-trunc", "paired plain versus truncated estimators");
    add_plan_options(cmp, ca);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfigurationError;
    }

    try {
        if (*sim) return cmd_simulate(sa);
        if (*est) return cmd_estimate(ea);
        if (*ad) return cmd_adapt(aa);
        if (*risk) return cmd_risk(ra);
        if (*diag) return cmd_diagnose(da);
        if (*cmp) return cmd_compare_trunc(ca);
    } catch (const ConfigurationError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfigurationError;
    } catch (const EmptyGridError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfigurationError;
    } catch (const MissingJumpLogError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfigurationError;
    } catch (const KernelConstructionError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfigurationError;
    } catch (const AssumptionViolationError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfigurationError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfigurationError;
    } catch (const std::exception& e) {
        std::cerr << "experiment error: " << e.what() << '\n';
        return kExperimentError;
    }
    return 0;
}
