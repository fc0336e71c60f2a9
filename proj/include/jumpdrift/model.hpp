#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "jumpdrift/errors.hpp"
#include "jumpdrift/rng.hpp"

namespace jumpdrift {

/// x -> out, both of length d.
using VectorField = std::function<void(std::span<const double> x, std::span<double> out)>;
/// x -> out, a row-major d×d matrix.
using MatrixField = std::function<void(std::span<const double> x, std::span<double> out)>;
using ScalarField = std::function<double(std::span<const double> x)>;

struct MomentEstimate {
    double value = 0.0;
    double abs_error = 0.0;
    bool finite() const { return std::isfinite(value); }
};

/// ∫ φ(‖z‖) ν(dz) for a radial test function φ.
using RadialMomentOracle = std::function<MomentEstimate(const std::function<double(double)>& phi)>;

/// Finite-activity Lévy measure ν = λ·F.
struct JumpLaw {
    std::string kind = "none";
    std::size_t dim = 1;
    double intensity = 0.0;
    std::function<void(Rng&, std::span<double>)> sample_mark;
    /// m_ν = ∫ z ν(dz) (includes the intensity factor).
    std::vector<double> mean_mark;
    RadialMomentOracle radial_moment;
    /// c_{1,ν}: asserted rate for ∫_{‖z‖≥1} exp(c‖z‖) ν(dz) < ∞.
    std::optional<double> exp_moment_rate;

    bool degenerate() const { return intensity == 0.0; }

    static JumpLaw none(std::size_t d) {
        JumpLaw l;
        l.dim = d;
        l.mean_mark.assign(d, 0.0);
        l.sample_mark = [](Rng&, std::span<double> z) { std::fill(z.begin(), z.end(), 0.0); };
        l.radial_moment = [](const std::function<double(double)>&) { return MomentEstimate{0.0, 0.0}; };
        return l;
    }

    /// Marks ~ N(0, scale² I_d).
    static JumpLaw gaussian(std::size_t d, double intensity, double scale, std::optional<double> exp_rate = 1.0);
    /// d = 1, marks ±magnitude with probability 1/2 each.
    static JumpLaw two_point(double intensity, double magnitude);
    /// All marks equal to `location`.
    static JumpLaw point_mass(double intensity, std::vector<double> location);
    /// d = 1, |Z| ~ Pareto(tail_index, scale) with a symmetric random sign.
    static JumpLaw symmetric_pareto(double intensity, double tail_index, double scale);
};

namespace detail {

inline MomentEstimate safe_estimate(double v, double err) {
    if (!std::isfinite(v) || !std::isfinite(err) || err > 1e-6 * std::abs(v) + 1e-12)
        return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    return {v, err};
}

/// λ ∫_0^∞ φ(r) f(r) dr for a radial density f, split at r = 1 where the
/// test functions used by the library have their indicator jumps.
inline MomentEstimate radial_quadrature(double intensity, const std::function<double(double)>& density,
                                        const std::function<double(double)>& phi, double lower = 0.0) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    auto f = [&](double r) {
        const double d = density(r);
        if (d == 0.0) return 0.0;
        return phi(r) * d;
    };
    double total = 0.0, err_total = 0.0;
    try {
        double e1 = 0.0, e2 = 0.0;
        const double split = std::max(lower, 1.0);
        double v1 = 0.0;
        if (split > lower) v1 = GK::integrate(f, lower, split, 15, 1e-12, &e1);
        const double v2 = GK::integrate(f, split, std::numeric_limits<double>::infinity(), 15, 1e-12, &e2);
        total = v1 + v2;
        err_total = e1 + e2;
    } catch (const std::exception&) {
        return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    }
    return safe_estimate(intensity * total, intensity * err_total);
}

}  // namespace detail

inline JumpLaw JumpLaw::gaussian(std::size_t d, double intensity, double scale, std::optional<double> exp_rate) {
    if (intensity < 0.0 || !(scale > 0.0)) throw std::invalid_argument("JumpLaw::gaussian: bad parameters");
    JumpLaw l;
    l.kind = "gaussian";
    l.dim = d;
    l.intensity = intensity;
    l.mean_mark.assign(d, 0.0);
    l.exp_moment_rate = exp_rate;
    l.sample_mark = [scale](Rng& rng, std::span<double> z) {
        std::normal_distribution<double> n(0.0, scale);
        for (auto& v : z) v = n(rng);
    };
    // ‖Z‖/scale follows the chi law with d degrees of freedom.
    const double k = static_cast<double>(d);
    const double log_norm = (1.0 - 0.5 * k) * std::log(2.0) - boost::math::lgamma(0.5 * k);
    auto density = [k, log_norm, scale](double r) {
        if (r <= 0.0) return 0.0;
        const double u = r / scale;
        return std::exp(log_norm + (k - 1.0) * std::log(u) - 0.5 * u * u) / scale;
    };
    l.radial_moment = [intensity, density](const std::function<double(double)>& phi) {
        if (intensity == 0.0) return MomentEstimate{0.0, 0.0};
        return detail::radial_quadrature(intensity, density, phi);
    };
    return l;
}

inline JumpLaw JumpLaw::two_point(double intensity, double magnitude) {
    JumpLaw l;
    l.kind = "two-point";
    l.dim = 1;
    l.intensity = intensity;
    l.mean_mark = {0.0};
    l.exp_moment_rate = 1.0;
    l.sample_mark = [magnitude](Rng& rng, std::span<double> z) {
        z[0] = (rng() >> 63) ? magnitude : -magnitude;
    };
    l.radial_moment = [intensity, magnitude](const std::function<double(double)>& phi) {
        return MomentEstimate{intensity * phi(std::abs(magnitude)), 0.0};
    };
    return l;
}

inline JumpLaw JumpLaw::point_mass(double intensity, std::vector<double> location) {
    JumpLaw l;
    l.kind = "point-mass";
    l.dim = location.size();
    l.intensity = intensity;
    l.exp_moment_rate = 1.0;
    double norm = 0.0;
    for (double v : location) norm += v * v;
    norm = std::sqrt(norm);
    l.mean_mark = location;
    for (auto& v : l.mean_mark) v *= intensity;
    l.sample_mark = [location](Rng&, std::span<double> z) { std::copy(location.begin(), location.end(), z.begin()); };
    l.radial_moment = [intensity, norm](const std::function<double(double)>& phi) {
        return MomentEstimate{intensity * phi(norm), 0.0};
    };
    return l;
}

inline JumpLaw JumpLaw::symmetric_pareto(double intensity, double tail_index, double scale) {
    if (intensity < 0.0 || !(tail_index > 0.0) || !(scale > 0.0))
        throw std::invalid_argument("JumpLaw::symmetric_pareto: bad parameters");
    JumpLaw l;
    l.kind = "pareto";
    l.dim = 1;
    l.intensity = intensity;
    l.mean_mark = {0.0};
    l.sample_mark = [tail_index, scale](Rng& rng, std::span<double> z) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double r = scale * std::pow(1.0 - u(rng), -1.0 / tail_index);
        z[0] = (rng() >> 63) ? r : -r;
    };
    // Substituting r = scale·u^{-1/α} maps the tail to u ∈ (0, 1]; tanh-sinh copes with the endpoint singularity.
    l.radial_moment = [intensity, tail_index, scale](const std::function<double(double)>& phi) {
        if (intensity == 0.0) return MomentEstimate{0.0, 0.0};
        boost::math::quadrature::tanh_sinh<double> ts;
        double err = 0.0;
        try {
            const double v = ts.integrate(
                [&](double u) {
                    const double r = scale * std::pow(u, -1.0 / tail_index);
                    const double y = phi(r);
                    if (!std::isfinite(y)) throw std::overflow_error("divergent");
                    return y;
                },
                0.0, 1.0, 1e-10, &err);
            return detail::safe_estimate(intensity * v, intensity * err);
        } catch (const std::exception&) {
            return MomentEstimate{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
        }
    };
    return l;
}

struct LevyMoments {
    double nu2 = 0.0;
    double nu3 = 0.0;
    std::vector<double> mean;
    double nu2_error = 0.0;
    double nu3_error = 0.0;
};

/// ν₂ = ∫‖z‖²ν(dz), ν₃ = ∫‖z‖³ν(dz) and m_ν.
inline LevyMoments levy_moments(const JumpLaw& law) {
    LevyMoments m;
    m.mean = law.mean_mark;
    if (law.degenerate()) {
        m.mean.assign(law.dim, 0.0);
        return m;
    }
    const auto e2 = law.radial_moment([](double r) { return r * r; });
    if (!e2.finite()) throw InfiniteMomentError("second moment nu2 = ∫‖z‖²ν(dz) is infinite");
    const auto e3 = law.radial_moment([](double r) { return r * r * r; });
    if (!e3.finite()) throw InfiniteMomentError("third moment nu3 = ∫‖z‖³ν(dz) is infinite");
    m.nu2 = e2.value;
    m.nu2_error = e2.abs_error;
    m.nu3 = e3.value;
    m.nu3_error = e3.abs_error;
    return m;
}

/// Initial condition: a sampler for ξ plus an optional warm-up period.
struct InitialLaw {
    std::function<std::vector<double>(Rng&)> sample;
    double burn_in = 0.0;

    static InitialLaw fixed(std::vector<double> x0, double burn_in = 0.0) {
        return {[x0](Rng&) { return x0; }, burn_in};
    }
};

/// dX = b(X)dt + σ(X)dW + ∫ γ(X_-) z Ñ(dt, dz).
struct ModelSpec {
    std::string name;
    std::size_t dim = 1;
    VectorField drift;
    MatrixField dispersion;
    MatrixField jump_coeff;
    JumpLaw jump_law;
    InitialLaw initial_law;
    /// Exponential β-mixing rate κ, a configuration input.
    std::optional<double> kappa;
    /// Invariant density when known in closed form (or by numerical inversion).
    ScalarField invariant_density;
};

namespace detail {

inline std::string format_point(std::span<const double> x) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ')';
    return os.str();
}

inline void check_finite(std::span<const double> v, std::span<const double> x, const char* what) {
    for (double e : v)
        if (!std::isfinite(e))
            throw ModelEvaluationError(std::string(what) + " is not finite at x = " + format_point(x));
}

}  // namespace detail

struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    std::size_t dim() const { return lo.size(); }
    static Box cube(std::size_t d, double a, double b) { return {std::vector<double>(d, a), std::vector<double>(d, b)}; }
};

struct CoefficientBounds {
    double a_sup = 0.0;
    std::vector<double> a_jj_sup;
    double gamma_sup = 0.0;
    double gamma_min = 0.0;
    double b_sup_D = 0.0;

    void require_truncation_ready() const {
        if (!(gamma_min > 0.0))
            throw AssumptionViolationError(
                "truncated estimation needs a positive lower bound on the smallest singular value of gamma");
    }
};

struct ValidationOptions {
    /// Offset into the Halton sequence; the probe set is a function of it.
    std::uint64_t seed = 0;
    /// Radius beyond which dissipativity is probed; default half the largest corner radius.
    std::optional<double> eta1;
};

struct ValidationReport {
    CoefficientBounds bounds;
    double a_min_eigenvalue = 0.0;
    /// Smallest -<x, b(x)>/‖x‖ over probes with ‖x‖ >= eta1.
    double eta0_estimate = 0.0;
    double eta1 = 0.0;
    bool ellipticity_flag = false;
    bool dissipativity_flag = false;
    std::vector<std::string> notes;
};

namespace detail {

inline double radical_inverse(std::uint64_t i, unsigned base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

inline unsigned nth_prime(std::size_t n) {
    static constexpr unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    return primes[n % 12];
}

}  // namespace detail

/// Empirical coefficient bounds over a Halton probe set, with flags (not
/// rejections) for probable ellipticity and dissipativity violations.
inline ValidationReport validate_model(const ModelSpec& spec, const Box& region, std::size_t probe_count,
                                       const ValidationOptions& opt = {}) {
    const std::size_t d = spec.dim;
    if (region.dim() != d) throw std::invalid_argument("validate_model: probe region dimension mismatch");
    for (std::size_t i = 0; i < d; ++i)
        if (!(region.hi[i] > region.lo[i])) throw std::invalid_argument("validate_model: empty probe region");
    if (probe_count < (std::size_t{1} << d)) throw std::invalid_argument("validate_model: probe_count must be >= 2^d");

    ValidationReport rep;
    auto& bd = rep.bounds;
    bd.a_jj_sup.assign(d, 0.0);
    bd.gamma_min = std::numeric_limits<double>::infinity();
    rep.a_min_eigenvalue = std::numeric_limits<double>::infinity();
    rep.eta0_estimate = std::numeric_limits<double>::infinity();

    double corner = 0.0;
    for (std::size_t i = 0; i < d; ++i) corner += std::pow(std::max(std::abs(region.lo[i]), std::abs(region.hi[i])), 2);
    rep.eta1 = opt.eta1.value_or(0.5 * std::sqrt(corner));

    std::vector<double> x(d), b(d), s(d * d), g(d * d);
    bool any_far = false;
    for (std::size_t p = 0; p < probe_count; ++p) {
        for (std::size_t i = 0; i < d; ++i) {
            const double u = detail::radical_inverse(opt.seed + p + 1, detail::nth_prime(i));
            x[i] = region.lo[i] + u * (region.hi[i] - region.lo[i]);
        }
        spec.drift(x, b);
        detail::check_finite(b, x, "drift");
        spec.dispersion(x, s);
        detail::check_finite(s, x, "dispersion");
        spec.jump_coeff(x, g);
        detail::check_finite(g, x, "jump coefficient");

        const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> sm(s.data(), d, d);
        const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gm(g.data(), d, d);
        const Eigen::MatrixXd a = sm * sm.transpose();
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
        bd.a_sup = std::max(bd.a_sup, es.eigenvalues().maxCoeff());
        rep.a_min_eigenvalue = std::min(rep.a_min_eigenvalue, es.eigenvalues().minCoeff());
        for (std::size_t j = 0; j < d; ++j) bd.a_jj_sup[j] = std::max(bd.a_jj_sup[j], a(j, j));

        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(gm);
        bd.gamma_sup = std::max(bd.gamma_sup, svd.singularValues().maxCoeff());
        bd.gamma_min = std::min(bd.gamma_min, svd.singularValues().minCoeff());

        double bn = 0.0, xn = 0.0, xb = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            bn += b[i] * b[i];
            xn += x[i] * x[i];
            xb += x[i] * b[i];
        }
        bd.b_sup_D = std::max(bd.b_sup_D, std::sqrt(bn));
        xn = std::sqrt(xn);
        if (xn >= rep.eta1 && xn > 0.0) {
            any_far = true;
            rep.eta0_estimate = std::min(rep.eta0_estimate, -xb / xn);
        }
    }
    if (!any_far) {
        rep.eta0_estimate = std::numeric_limits<double>::quiet_NaN();
        rep.notes.emplace_back("no probe beyond eta1; dissipativity not probed");
    } else if (!(rep.eta0_estimate > 0.0)) {
        rep.dissipativity_flag = true;
        rep.notes.emplace_back("<x, b(x)> <= -eta0 ‖x‖ fails for every eta0 > 0 on the probe set");
    }
    if (!(rep.a_min_eigenvalue > 1e-12 * std::max(1.0, bd.a_sup))) {
        rep.ellipticity_flag = true;
        rep.notes.emplace_back("sigma sigma^T is not uniformly positive definite on the probe set");
    }
    return rep;
}

}  // namespace jumpdrift
