#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jumpdrift/errors.hpp"
#include "jumpdrift/model.hpp"
#include "jumpdrift/rng.hpp"

namespace jumpdrift {

struct JumpEvent {
    double time = 0.0;
    std::vector<double> mark;
    std::vector<double> displacement;
    std::vector<double> pre_state;
    /// Index i of the grid step (t_i, t_{i+1}] containing the jump.
    std::size_t step = 0;
};

/// Discretely observed path on the uniform grid t_i = iΔ, i = 0..N.
struct PathRecord {
    std::size_t dim = 1;
    double dt = 0.0;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    /// (N+1)·d values, row i is X_{t_i}.
    std::vector<double> states;
    std::vector<JumpEvent> jumps;
    /// False for imported paths that came without a jump-event sidecar.
    bool has_jump_log = true;
    /// N·d values when instrumented, otherwise empty.
    std::vector<double> brownian_increments;
    std::vector<std::string> warnings;

    std::size_t steps() const { return states.size() / dim - 1; }
    double time(std::size_t i) const { return i == steps() ? horizon : static_cast<double>(i) * dt; }
    std::span<const double> state(std::size_t i) const { return {states.data() + i * dim, dim}; }
    double coord(std::size_t i, std::size_t j) const { return states[i * dim + j]; }
    double increment(std::size_t i, std::size_t j) const { return states[(i + 1) * dim + j] - states[i * dim + j]; }
    bool instrumented() const { return !brownian_increments.empty() || steps() == 0; }
    std::span<const double> brownian(std::size_t i) const { return {brownian_increments.data() + i * dim, dim}; }
};

struct SimulationOptions {
    bool instrumented = false;
    /// Starting point; drawn from the model's initial law when absent.
    std::optional<std::vector<double>> initial_state;
};

namespace detail {

inline std::size_t step_count(double horizon, double dt) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("simulate: horizon must be positive");
    if (!(dt > 0.0) || dt > horizon) throw std::invalid_argument("simulate: need 0 < dt <= T");
    const double n = std::round(horizon / dt);
    if (std::abs(n * dt - horizon) > 1e-9 * horizon)
        throw std::invalid_argument("simulate: T must be an integer multiple of dt");
    return static_cast<std::size_t>(n);
}

inline void matvec(std::span<const double> m, std::span<const double> v, std::span<double> out) {
    const std::size_t d = v.size();
    for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += m[r * d + c] * v[c];
        out[r] = acc;
    }
}

}  // namespace detail

/// Euler–Maruyama scheme with exact compound-Poisson jump times. Jumps in
/// (t_i, t_{i+1}] are applied after the continuous increment of that step.
inline PathRecord simulate(const ModelSpec& spec, double horizon, double dt, std::uint64_t seed,
                           const SimulationOptions& opt = {}) {
    const std::size_t n = detail::step_count(horizon, dt);
    const std::size_t d = spec.dim;
    PathRecord path;
    path.dim = d;
    path.dt = dt;
    path.horizon = horizon;
    path.seed = seed;
    path.states.resize((n + 1) * d);
    if (opt.instrumented) path.brownian_increments.resize(n * d);

    const double lambda = spec.jump_law.intensity;
    if (lambda * dt > 0.1)
        path.warnings.push_back("lambda*dt = " + std::to_string(lambda * dt) + " exceeds 0.1; several jumps per step are likely");

    std::vector<double> x;
    if (opt.initial_state) {
        x = *opt.initial_state;
    } else {
        Rng init = make_rng(seed, Stream::Initial);
        x = spec.initial_law.sample(init);
    }
    if (x.size() != d) throw std::invalid_argument("simulate: initial state has wrong dimension");
    std::copy(x.begin(), x.end(), path.states.begin());

    Rng bm = make_rng(seed, Stream::Brownian);
    Rng jr = make_rng(seed, Stream::Jumps);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::exponential_distribution<double> wait(lambda > 0.0 ? lambda : 1.0);

    const auto& m_nu = spec.jump_law.mean_mark;
    bool compensate = false;
    for (double v : m_nu) compensate = compensate || v != 0.0;

    std::vector<double> b(d), s(d * d), g(d * d), dw(d), tmp(d), z(d);
    const double sqdt = std::sqrt(dt);
    double next_jump = lambda > 0.0 ? wait(jr) : std::numeric_limits<double>::infinity();

    for (std::size_t i = 0; i < n; ++i) {
        spec.drift(x, b);
        spec.dispersion(x, s);
        for (std::size_t k = 0; k < d; ++k) dw[k] = sqdt * normal(bm);
        detail::matvec(s, dw, tmp);
        if (compensate) {
            spec.jump_coeff(x, g);
            std::vector<double> gm(d);
            detail::matvec(g, m_nu, gm);
            for (std::size_t k = 0; k < d; ++k) x[k] += (b[k] - gm[k]) * dt + tmp[k];
        } else {
            for (std::size_t k = 0; k < d; ++k) x[k] += b[k] * dt + tmp[k];
        }
        if (opt.instrumented) std::copy(dw.begin(), dw.end(), path.brownian_increments.begin() + static_cast<std::ptrdiff_t>(i * d));

        const double t_next = (i + 1 == n) ? horizon : static_cast<double>(i + 1) * dt;
        while (next_jump <= t_next) {
            JumpEvent ev;
            ev.time = next_jump;
            ev.step = i;
            spec.jump_law.sample_mark(jr, z);
            ev.mark = z;
            ev.pre_state = x;
            spec.jump_coeff(x, g);
            ev.displacement.resize(d);
            detail::matvec(g, z, ev.displacement);
            for (std::size_t k = 0; k < d; ++k) x[k] += ev.displacement[k];
            path.jumps.push_back(std::move(ev));
            next_jump += wait(jr);
        }
        for (double v : x)
            if (!std::isfinite(v))
                throw ExplosionError("state became non-finite at t = " + std::to_string(t_next), t_next);
        std::copy(x.begin(), x.end(), path.states.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    }
    return path;
}

/// Terminal state of a throwaway path of length `duration` started from the
/// initial law; duration 0 returns the initial draw itself.
inline std::vector<double> burn_in(const ModelSpec& spec, double duration, double dt, std::uint64_t seed) {
    if (duration < 0.0) throw std::invalid_argument("burn_in: duration must be >= 0");
    if (duration == 0.0) {
        Rng init = make_rng(seed, Stream::Initial);
        return spec.initial_law.sample(init);
    }
    // round the warm-up up to a whole number of steps
    const double steps = std::ceil(duration / dt - 1e-9);
    const auto p = simulate(spec, steps * dt, dt, seed);
    const auto last = p.state(p.steps());
    return {last.begin(), last.end()};
}

using TestFunction = std::function<double(std::span<const double>)>;

struct Functionals {
    double H = 0.0;
    double M = 0.0;
    double J = 0.0;
    /// (1/√T) Σ g(X_{t_i}) ΔX^j_i, for checking H + M + J.
    double I = 0.0;
};

/// Discretized empirical-process components of (1/√T)∫ g(X_{s-}) dX^j_s.
/// The jump part evaluates g at the left end of the step containing the jump,
/// so H + M + J reproduces I up to rounding.
inline std::vector<Functionals> instrumented_functionals(const ModelSpec& spec, const PathRecord& path,
                                                         const std::vector<TestFunction>& test_fns, std::size_t j) {
    if (j >= path.dim) throw std::invalid_argument("instrumented_functionals: coordinate out of range");
    const std::size_t n = path.steps();
    if (n > 0 && path.brownian_increments.size() != n * path.dim)
        throw InstrumentationRequiredError("path was simulated without Brownian increments; rerun with instrumented = true");
    const std::size_t d = path.dim;
    const double scale = 1.0 / std::sqrt(path.horizon);

    std::vector<double> bj(n), mj(n), cj(n, 0.0), dx(n);
    std::vector<double> b(d), s(d * d), g(d * d), tmp(d);
    const auto& m_nu = spec.jump_law.mean_mark;
    bool compensate = false;
    for (double v : m_nu) compensate = compensate || v != 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = path.state(i);
        spec.drift(x, b);
        spec.dispersion(x, s);
        detail::matvec(s, path.brownian(i), tmp);
        bj[i] = b[j] * path.dt;
        mj[i] = tmp[j];
        if (compensate) {
            spec.jump_coeff(x, g);
            detail::matvec(g, m_nu, tmp);
            cj[i] = tmp[j] * path.dt;
        }
        dx[i] = path.increment(i, j);
    }
    std::vector<double> jump_sum(n, 0.0);
    for (const auto& ev : path.jumps) jump_sum[ev.step] += ev.displacement[j];

    std::vector<Functionals> out(test_fns.size());
    for (std::size_t f = 0; f < test_fns.size(); ++f) {
        double H = 0, M = 0, J = 0, I = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double gv = test_fns[f](path.state(i));
            if (gv == 0.0) continue;
            H += gv * bj[i];
            M += gv * mj[i];
            J += gv * (jump_sum[i] - cj[i]);
            I += gv * dx[i];
        }
        out[f] = {scale * H, scale * M, scale * J, scale * I};
    }
    return out;
}

}  // namespace jumpdrift
