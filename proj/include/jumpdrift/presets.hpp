#pragma once

#include <Eigen/Dense>
#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/expint.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "jumpdrift/errors.hpp"
#include "jumpdrift/model.hpp"

namespace jumpdrift {

using json = nlohmann::json;

struct JumpConfig {
    std::string law = "none";  // none | gaussian | two-point | point-mass | pareto
    double intensity = 0.0;
    double scale = 1.0;
    double tail_index = 3.5;
    double magnitude = 1.0;
    std::vector<double> location;
    std::optional<double> exp_moment_rate;
};

/// dX = (M X + c) dt + Σ dW + Γ ∫ z Ñ(dt, dz) with constant matrices.
struct LinearModelConfig {
    std::string name = "custom";
    std::size_t dim = 1;
    Eigen::MatrixXd drift_matrix;
    Eigen::VectorXd drift_offset;
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd gamma;
    JumpConfig jumps;
    std::optional<double> kappa;
    std::optional<double> burn_in;
    std::vector<double> initial_state;
};

namespace detail {

inline Eigen::MatrixXd matrix_from_json(const json& j, std::size_t d, const char* key) {
    if (j.is_number()) return j.get<double>() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    if (!j.is_array() || j.size() != d) throw ConfigurationError(std::string(key) + " must be a number or a d×d array");
    Eigen::MatrixXd m(d, d);
    for (std::size_t r = 0; r < d; ++r) {
        if (!j[r].is_array() || j[r].size() != d) throw ConfigurationError(std::string(key) + " must be a d×d array");
        for (std::size_t c = 0; c < d; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
    return m;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(row);
    }
    return a;
}

}  // namespace detail

inline LinearModelConfig config_from_json(const json& j) {
    try {
        LinearModelConfig c;
        c.name = j.value("name", std::string("custom"));
        const auto d = j.at("dim").get<std::size_t>();
        if (d == 0) throw ConfigurationError("dim must be >= 1");
        c.dim = d;
        const auto& drift = j.at("drift");
        c.drift_matrix = detail::matrix_from_json(drift.at("matrix"), d, "drift.matrix");
        c.drift_offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
        if (drift.contains("offset")) {
            const auto off = drift.at("offset").get<std::vector<double>>();
            if (off.size() != d) throw ConfigurationError("drift.offset must have length dim");
            for (std::size_t i = 0; i < d; ++i) c.drift_offset(static_cast<Eigen::Index>(i)) = off[i];
        }
        c.sigma = detail::matrix_from_json(j.at("sigma"), d, "sigma");
        c.gamma = detail::matrix_from_json(j.value("gamma", json(0.0)), d, "gamma");
        if (j.contains("jumps")) {
            const auto& jj = j.at("jumps");
            c.jumps.law = jj.value("law", std::string("none"));
            c.jumps.intensity = jj.value("intensity", 0.0);
            c.jumps.scale = jj.value("scale", 1.0);
            c.jumps.tail_index = jj.value("tail_index", 3.5);
            c.jumps.magnitude = jj.value("magnitude", 1.0);
            if (jj.contains("location")) c.jumps.location = jj.at("location").get<std::vector<double>>();
            if (jj.contains("exp_moment_rate")) c.jumps.exp_moment_rate = jj.at("exp_moment_rate").get<double>();
        }
        if (j.contains("kappa")) c.kappa = j.at("kappa").get<double>();
        if (j.contains("burn_in")) c.burn_in = j.at("burn_in").get<double>();
        c.initial_state = j.value("initial_state", std::vector<double>(d, 0.0));
        if (c.initial_state.size() != d) throw ConfigurationError("initial_state must have length dim");
        return c;
    } catch (const json::exception& e) {
        throw ConfigurationError(std::string("model config: ") + e.what());
    }
}

inline json to_json(const LinearModelConfig& c) {
    json j;
    j["name"] = c.name;
    j["dim"] = c.dim;
    j["drift"]["matrix"] = detail::matrix_to_json(c.drift_matrix);
    j["drift"]["offset"] = std::vector<double>(c.drift_offset.data(), c.drift_offset.data() + c.drift_offset.size());
    j["sigma"] = detail::matrix_to_json(c.sigma);
    j["gamma"] = detail::matrix_to_json(c.gamma);
    json jj;
    jj["law"] = c.jumps.law;
    jj["intensity"] = c.jumps.intensity;
    jj["scale"] = c.jumps.scale;
    jj["tail_index"] = c.jumps.tail_index;
    jj["magnitude"] = c.jumps.magnitude;
    if (!c.jumps.location.empty()) jj["location"] = c.jumps.location;
    if (c.jumps.exp_moment_rate) jj["exp_moment_rate"] = *c.jumps.exp_moment_rate;
    j["jumps"] = jj;
    if (c.kappa) j["kappa"] = *c.kappa;
    if (c.burn_in) j["burn_in"] = *c.burn_in;
    j["initial_state"] = c.initial_state;
    return j;
}

inline std::vector<std::string> preset_names() { return {"ou1d", "jump-ou1d", "aniso2d", "pareto-ou1d"}; }

inline LinearModelConfig preset_config(std::string_view name) {
    auto ou = [](std::string n) {
        LinearModelConfig c;
        c.name = std::move(n);
        c.dim = 1;
        c.drift_matrix = Eigen::MatrixXd::Constant(1, 1, -1.0);
        c.drift_offset = Eigen::VectorXd::Zero(1);
        c.sigma = Eigen::MatrixXd::Identity(1, 1);
        c.gamma = Eigen::MatrixXd::Zero(1, 1);
        c.kappa = 1.0;
        c.initial_state = {0.0};
        return c;
    };
    if (name == "ou1d") return ou("ou1d");
    if (name == "jump-ou1d") {
        auto c = ou("jump-ou1d");
        c.gamma(0, 0) = 0.5;
        c.jumps.law = "gaussian";
        c.jumps.intensity = 1.0;
        c.jumps.scale = 1.0;
        c.jumps.exp_moment_rate = 1.0;
        return c;
    }
    if (name == "pareto-ou1d") {
        auto c = ou("pareto-ou1d");
        c.gamma(0, 0) = 0.5;
        c.jumps.law = "pareto";
        c.jumps.intensity = 1.0;
        c.jumps.tail_index = 3.5;
        c.jumps.scale = 1.0;
        return c;
    }
    if (name == "aniso2d") {
        LinearModelConfig c;
        c.name = "aniso2d";
        c.dim = 2;
        c.drift_matrix.resize(2, 2);
        c.drift_matrix << -1.0, 0.5, -0.5, -2.0;
        c.drift_offset = Eigen::VectorXd::Zero(2);
        c.sigma = Eigen::MatrixXd::Identity(2, 2);
        c.gamma = Eigen::MatrixXd::Zero(2, 2);
        c.kappa = 1.0;
        c.initial_state = {0.0, 0.0};
        return c;
    }
    throw ConfigurationError("unknown model preset '" + std::string(name) + "'");
}

/// A preset name, or a path to a JSON model file.
inline LinearModelConfig load_model_config(const std::string& preset_or_path) {
    for (const auto& n : preset_names())
        if (n == preset_or_path) return preset_config(n);
    if (!std::filesystem::exists(preset_or_path))
        throw ConfigurationError("'" + preset_or_path + "' is neither a model preset nor a readable file");
    std::ifstream in(preset_or_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigurationError("cannot parse model file " + preset_or_path + ": " + e.what());
    }
    return config_from_json(j);
}

inline JumpLaw build_jump_law(const JumpConfig& jc, std::size_t d) {
    if (jc.intensity < 0.0) throw ConfigurationError("jumps.intensity must be >= 0");
    if (jc.law == "none" || jc.intensity == 0.0) return JumpLaw::none(d);
    if (jc.law == "gaussian") return JumpLaw::gaussian(d, jc.intensity, jc.scale, jc.exp_moment_rate.value_or(1.0));
    if (d != 1 && (jc.law == "two-point" || jc.law == "pareto"))
        throw ConfigurationError("jump law '" + jc.law + "' is only available in dimension 1");
    if (jc.law == "two-point") return JumpLaw::two_point(jc.intensity, jc.magnitude);
    if (jc.law == "pareto") return JumpLaw::symmetric_pareto(jc.intensity, jc.tail_index, jc.scale);
    if (jc.law == "point-mass") {
        if (jc.location.size() != d) throw ConfigurationError("jumps.location must have length dim");
        return JumpLaw::point_mass(jc.intensity, jc.location);
    }
    throw ConfigurationError("unknown jump law '" + jc.law + "'");
}

namespace detail {

/// Ein(x) = ∫_0^x (1 - e^{-t}) / t dt.
inline double ein(double x) {
    if (x < 1.0) {
        double term = x, sum = x;
        for (int k = 2; k < 40; ++k) {
            term *= -x / k;
            sum += term / k;
        }
        return sum;
    }
    return boost::math::expint(1, x) + boost::math::constants::euler<double>() + std::log(x);
}

/// Stationary Gaussian law N(m, S) of dX = (MX + c)dt + Σ dW, or nullopt if M is not stable.
inline std::optional<std::pair<Eigen::VectorXd, Eigen::MatrixXd>> gaussian_stationary(const LinearModelConfig& c) {
    const Eigen::EigenSolver<Eigen::MatrixXd> es(c.drift_matrix, false);
    if (es.eigenvalues().real().maxCoeff() >= 0.0) return std::nullopt;
    const Eigen::Index d = static_cast<Eigen::Index>(c.dim);
    const Eigen::VectorXd mean = -c.drift_matrix.fullPivLu().solve(c.drift_offset);
    const Eigen::MatrixXd a = c.sigma * c.sigma.transpose();
    // M S + S Mᵀ + a = 0 as a Kronecker system on vec(S).
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d * d, d * d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) {
            L.block(i * d, j * d, d, d) += I(i, j) * c.drift_matrix;
            L.block(i * d, j * d, d, d) += c.drift_matrix(i, j) * I;
        }
    const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(a.data(), d * d);
    const Eigen::VectorXd v = L.fullPivLu().solve(rhs);
    Eigen::MatrixXd S = Eigen::Map<const Eigen::MatrixXd>(v.data(), d, d);
    S = 0.5 * (S + S.transpose());
    return std::make_pair(mean, S);
}

}  // namespace detail

/// Invariant density in closed form (Gaussian) or by Fourier inversion of the
/// stationary characteristic function (d = 1 with Gaussian marks); empty otherwise.
inline ScalarField analytic_invariant_density(const LinearModelConfig& c) {
    const bool no_jumps = c.jumps.law == "none" || c.jumps.intensity == 0.0 || c.gamma.isZero(0.0);
    auto gs = detail::gaussian_stationary(c);
    if (!gs) return {};
    if (no_jumps) {
        const Eigen::VectorXd mean = gs->first;
        const Eigen::LLT<Eigen::MatrixXd> llt(gs->second);
        if (llt.info() != Eigen::Success) return {};
        const Eigen::MatrixXd Linv = llt.matrixL().solve(Eigen::MatrixXd::Identity(mean.size(), mean.size()));
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < mean.size(); ++i) logdet += std::log(llt.matrixL()(i, i));
        const double lognorm = -0.5 * static_cast<double>(mean.size()) * std::log(2.0 * boost::math::constants::pi<double>()) - logdet;
        return [mean, Linv, lognorm](std::span<const double> x) {
            Eigen::VectorXd z(mean.size());
            for (Eigen::Index i = 0; i < mean.size(); ++i) z(i) = x[static_cast<std::size_t>(i)] - mean(i);
            const Eigen::VectorXd w = Linv * z;
            return std::exp(lognorm - 0.5 * w.squaredNorm());
        };
    }
    if (c.dim == 1 && c.jumps.law == "gaussian" && c.sigma(0, 0) != 0.0) {
        const double a = -c.drift_matrix(0, 0);
        const double s2 = c.sigma(0, 0) * c.sigma(0, 0);
        const double lam = c.jumps.intensity;
        const double g2 = std::pow(c.gamma(0, 0) * c.jumps.scale, 2);
        const double mean = gs->first(0);
        auto phi = [=](double u) { return std::exp(-s2 * u * u / (4.0 * a) - lam / (2.0 * a) * detail::ein(g2 * u * u / 2.0)); };
        // the Gaussian factor bounds φ; cut where it is below e^{-40}
        const double cutoff = std::sqrt(160.0 * a / s2);
        return [=](std::span<const double> x) {
            using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
            const double y = x[0] - mean;
            double v = 0.0;
            constexpr int pieces = 8;
            for (int p = 0; p < pieces; ++p)
                v += GK::integrate([&](double u) { return std::cos(u * y) * phi(u); }, cutoff * p / pieces,
                                   cutoff * (p + 1) / pieces, 10, 1e-13);
            return v / boost::math::constants::pi<double>();
        };
    }
    return {};
}

inline ModelSpec build_model(const LinearModelConfig& c) {
    const std::size_t d = c.dim;
    auto check = [&](const Eigen::MatrixXd& m, const char* what) {
        if (static_cast<std::size_t>(m.rows()) != d || static_cast<std::size_t>(m.cols()) != d)
            throw ConfigurationError(std::string(what) + " must be d×d");
        if (!m.allFinite()) throw ConfigurationError(std::string(what) + " has non-finite entries");
    };
    check(c.drift_matrix, "drift.matrix");
    check(c.sigma, "sigma");
    check(c.gamma, "gamma");
    if (static_cast<std::size_t>(c.drift_offset.size()) != d) throw ConfigurationError("drift.offset must have length dim");

    ModelSpec m;
    m.name = c.name;
    m.dim = d;
    const Eigen::MatrixXd M = c.drift_matrix;
    const Eigen::VectorXd off = c.drift_offset;
    m.drift = [M, off](std::span<const double> x, std::span<double> out) {
        const auto n = M.rows();
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = off(i);
            for (Eigen::Index k = 0; k < n; ++k) acc += M(i, k) * x[static_cast<std::size_t>(k)];
            out[static_cast<std::size_t>(i)] = acc;
        }
    };
    auto constant = [](const Eigen::MatrixXd& A) {
        std::vector<double> flat;
        for (Eigen::Index r = 0; r < A.rows(); ++r)
            for (Eigen::Index col = 0; col < A.cols(); ++col) flat.push_back(A(r, col));
        return MatrixField([flat](std::span<const double>, std::span<double> out) { std::copy(flat.begin(), flat.end(), out.begin()); });
    };
    m.dispersion = constant(c.sigma);
    m.jump_coeff = constant(c.gamma);
    m.jump_law = build_jump_law(c.jumps, d);
    m.kappa = c.kappa;
    m.invariant_density = analytic_invariant_density(c);

    double burn = 0.0;
    if (c.burn_in) {
        burn = *c.burn_in;
    } else {
        const auto rep = validate_model(m, Box::cube(d, -3.0, 3.0), std::max<std::size_t>(256, std::size_t{1} << d));
        burn = (rep.eta0_estimate > 0.0 && !rep.dissipativity_flag) ? 10.0 / rep.eta0_estimate : 50.0;
    }
    m.initial_law = InitialLaw::fixed(c.initial_state, burn);
    return m;
}

}  // namespace jumpdrift
