#pragma once

// Poisson-lognormal model with an intrinsic CAR spatial effect:
//   y_i ~ Poisson(lambda_i),  log lambda_i = x_i'beta + theta_i + phi_i
//   theta_i ~ N(0, sigma_theta^2),  phi | W, tau_c ~ ICAR.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crashcar/error.hpp"
#include "crashcar/spatial_weights.hpp"
#include "crashcar/taz_data.hpp"

namespace crashcar {

struct NormalPrior {
    double mean = 0.0;
    double variance = 1000.0;
};

/// Inverse-gamma(shape, scale) on a variance.
struct InverseGammaPrior {
    double shape = 0.001;
    double scale = 0.001;
};

/// Gamma(shape, rate) on a precision.
struct GammaPrior {
    double shape = 0.1;
    double rate = 0.1;
};

enum class BetaPriorMode {
    Vague,       ///< every coefficient gets default_beta
    Informative  ///< mean/variance from a maximum-likelihood Poisson fit
};

struct ModelSpec {
    DesignOptions design;
    bool include_theta = true;
    bool include_car = true;
    ProximityMode proximity = ProximityMode::Adjacency;

    BetaPriorMode beta_prior_mode = BetaPriorMode::Vague;
    NormalPrior default_beta;
    /// Multiplies the maximum-likelihood variances in informative mode.
    double informative_variance_inflation = 1.0;
    /// Optional per-coefficient override; must match the design width when set.
    std::vector<NormalPrior> beta;

    InverseGammaPrior sigma_theta2;
    GammaPrior tau_c;

    /// Hold a hyperparameter at a known value instead of sampling it.
    std::optional<double> fixed_sigma_theta2;
    std::optional<double> fixed_tau_c;

    void validate() const {
        auto positive = [](double v, const char* what) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(what) + " must be > 0");
        };
        positive(default_beta.variance, "default beta prior variance");
        for (const auto& b : beta) positive(b.variance, "beta prior variance");
        positive(sigma_theta2.shape, "sigma_theta2 prior shape");
        positive(sigma_theta2.scale, "sigma_theta2 prior scale");
        positive(tau_c.shape, "tau_c prior shape");
        positive(tau_c.rate, "tau_c prior rate");
        positive(informative_variance_inflation, "informative_variance_inflation");
        if (fixed_sigma_theta2) positive(*fixed_sigma_theta2, "fixed_sigma_theta2");
        if (fixed_tau_c) positive(*fixed_tau_c, "fixed_tau_c");
    }
};

// --- ModelSpec JSON ----------------------------------------------------------------

inline nlohmann::json to_json(const ModelSpec& s) {
    using nlohmann::json;
    json cov = json::array();
    for (auto c : s.design.covariates) cov.push_back(std::string(to_string(c)));
    json j;
    j["covariates"] = cov;
    j["include_pattern"] = s.design.include_pattern;
    j["include_land_use"] = s.design.include_land_use;
    j["standardize"] = s.design.standardize;
    j["offset_log_arterial_length"] = s.design.offset_log_arterial_length;
    j["include_theta"] = s.include_theta;
    j["include_car"] = s.include_car;
    j["proximity_mode"] = std::string(to_string(s.proximity));
    json priors;
    priors["beta_mode"] = s.beta_prior_mode == BetaPriorMode::Vague ? "vague" : "informative";
    priors["beta_default"] = {{"mean", s.default_beta.mean}, {"variance", s.default_beta.variance}};
    priors["informative_variance_inflation"] = s.informative_variance_inflation;
    if (!s.beta.empty()) {
        json arr = json::array();
        for (const auto& b : s.beta) arr.push_back({{"mean", b.mean}, {"variance", b.variance}});
        priors["beta"] = arr;
    }
    priors["sigma_theta2"] = {{"shape", s.sigma_theta2.shape}, {"scale", s.sigma_theta2.scale}};
    priors["tau_c"] = {{"shape", s.tau_c.shape}, {"rate", s.tau_c.rate}};
    j["priors"] = priors;
    j["fixed_sigma_theta2"] = s.fixed_sigma_theta2 ? json(*s.fixed_sigma_theta2) : json(nullptr);
    j["fixed_tau_c"] = s.fixed_tau_c ? json(*s.fixed_tau_c) : json(nullptr);
    return j;
}

/// Absent fields keep their defaults; present fields of the wrong type or
/// unknown tokens throw ValidationError.
inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    try {
        if (!j.is_object()) throw ValidationError("model spec must be a JSON object");
        if (j.contains("covariates")) {
            s.design.covariates.clear();
            for (const auto& c : j.at("covariates")) {
                auto cv = parse_covariate(c.get<std::string>());
                if (!cv) throw ValidationError("unknown covariate '" + c.get<std::string>() + "'");
                s.design.covariates.push_back(*cv);
            }
        }
        auto flag = [&](const char* key, bool& dst) {
            if (j.contains(key)) dst = j.at(key).get<bool>();
        };
        flag("include_pattern", s.design.include_pattern);
        flag("include_land_use", s.design.include_land_use);
        flag("standardize", s.design.standardize);
        flag("offset_log_arterial_length", s.design.offset_log_arterial_length);
        flag("include_theta", s.include_theta);
        flag("include_car", s.include_car);
        if (j.contains("proximity_mode")) {
            auto m = parse_proximity_mode(j.at("proximity_mode").get<std::string>());
            if (!m) throw ValidationError("unknown proximity_mode");
            s.proximity = *m;
        }
        if (j.contains("priors")) {
            const auto& p = j.at("priors");
            if (p.contains("beta_mode")) {
                const auto mode = p.at("beta_mode").get<std::string>();
                if (mode == "vague") s.beta_prior_mode = BetaPriorMode::Vague;
                else if (mode == "informative") s.beta_prior_mode = BetaPriorMode::Informative;
                else throw ValidationError("unknown beta_mode '" + mode + "'");
            }
            if (p.contains("beta_default")) {
                s.default_beta.mean = p.at("beta_default").at("mean").get<double>();
                s.default_beta.variance = p.at("beta_default").at("variance").get<double>();
            }
            if (p.contains("informative_variance_inflation"))
                s.informative_variance_inflation = p.at("informative_variance_inflation").get<double>();
            if (p.contains("beta"))
                for (const auto& b : p.at("beta"))
                    s.beta.push_back({b.at("mean").get<double>(), b.at("variance").get<double>()});
            if (p.contains("sigma_theta2")) {
                s.sigma_theta2.shape = p.at("sigma_theta2").at("shape").get<double>();
                s.sigma_theta2.scale = p.at("sigma_theta2").at("scale").get<double>();
            }
            if (p.contains("tau_c")) {
                s.tau_c.shape = p.at("tau_c").at("shape").get<double>();
                s.tau_c.rate = p.at("tau_c").at("rate").get<double>();
            }
        }
        if (j.contains("fixed_sigma_theta2") && !j.at("fixed_sigma_theta2").is_null())
            s.fixed_sigma_theta2 = j.at("fixed_sigma_theta2").get<double>();
        if (j.contains("fixed_tau_c") && !j.at("fixed_tau_c").is_null())
            s.fixed_tau_c = j.at("fixed_tau_c").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("model spec: ") + e.what());
    }
    s.validate();
    return s;
}

inline ModelSpec load_model_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open model spec: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("model spec is not valid JSON: ") + e.what());
    }
    return model_spec_from_json(j);
}

// --- state and likelihood pieces ---------------------------------------------------------

struct ModelState {
    Eigen::VectorXd beta;
    Eigen::VectorXd theta;  ///< unstructured heterogeneity
    Eigen::VectorXd phi;    ///< spatial effect, zero-sum per component
    double sigma_theta2 = 1.0;
    double tau_c = 1.0;
};

inline constexpr double kPsiClamp = 30.0;

struct LinearPredictor {
    double psi = 0.0;
    double lambda = 1.0;
    bool clamped = false;
};

/// psi is clamped to [-30, 30] before exponentiation; `clamped` records it.
inline LinearPredictor linear_predictor(const ModelState& s, const DesignMatrix& d, std::size_t i) {
    const auto n = static_cast<Eigen::Index>(d.rows());
    const auto row = static_cast<Eigen::Index>(i);
    if (s.beta.size() != d.x.cols() || s.theta.size() != n || s.phi.size() != n || row >= n)
        throw ValidationError("linear predictor: dimension mismatch");
    LinearPredictor lp;
    lp.psi = d.x.row(row).dot(s.beta) + d.offset(row) + s.theta(row) + s.phi(row);
    if (std::abs(lp.psi) > kPsiClamp) {
        lp.psi = std::copysign(kPsiClamp, lp.psi);
        lp.clamped = true;
    }
    lp.lambda = std::exp(lp.psi);
    return lp;
}

/// y ln(lambda) - lambda - ln(y!).
inline double poisson_loglik(double y, double lambda) {
    if (!(lambda > 0.0)) throw DomainError("Poisson mean must be > 0");
    if (y < 0.0) throw DomainError("Poisson count must be >= 0");
    return y * std::log(lambda) - lambda - std::lgamma(y + 1.0);
}

/// Same quantity from the log mean, without the domain checks.
inline double poisson_loglik_psi(double y, double psi, double lgamma_y1) {
    return y * psi - std::exp(psi) - lgamma_y1;
}

struct ConditionalMoments {
    double mean = 0.0;
    double variance = 0.0;
    bool island = false;  ///< w_{i+} = 0: phi_i is pinned to 0
};

/// Full conditional of phi_i under the ICAR prior.
inline ConditionalMoments car_conditional(const Eigen::VectorXd& phi, const ProximityMatrix& w, double tau_c,
                                          std::size_t i) {
    ConditionalMoments m;
    const double wsum = w.row_sum(i);
    if (wsum == 0.0) {
        m.island = true;
        return m;
    }
    double acc = 0.0;
    for (const auto& e : w.row(i)) acc += e.w * phi(static_cast<Eigen::Index>(e.j));
    m.mean = acc / wsum;
    m.variance = 1.0 / (tau_c * wsum);
    return m;
}

/// sum_{i<j} w_ij (phi_i - phi_j)^2
inline double icar_quadratic_form(const Eigen::VectorXd& phi, const ProximityMatrix& w) {
    double q = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        for (const auto& e : w.row(i))
            if (e.j > i) {
                const double d = phi(static_cast<Eigen::Index>(i)) - phi(static_cast<Eigen::Index>(e.j));
                q += e.w * d * d;
            }
    return q;
}

inline bool satisfies_zero_sum(const Eigen::VectorXd& phi, const Components& comps, double tol = 1e-10) {
    std::vector<double> sum(comps.count, 0.0);
    std::vector<double> mag(comps.count, 0.0);
    for (std::size_t i = 0; i < comps.label.size(); ++i) {
        sum[comps.label[i]] += phi(static_cast<Eigen::Index>(i));
        mag[comps.label[i]] += std::abs(phi(static_cast<Eigen::Index>(i)));
    }
    for (std::size_t c = 0; c < comps.count; ++c)
        if (std::abs(sum[c]) > tol * std::max(1.0, mag[c])) return false;
    return true;
}

/// Subtracts each component's mean; islands end at exactly 0. Returns the
/// mean removed from the largest component.
inline double center_per_component(Eigen::VectorXd& phi, const Components& comps) {
    std::vector<double> sum(comps.count, 0.0);
    for (std::size_t i = 0; i < comps.label.size(); ++i) sum[comps.label[i]] += phi(static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < comps.label.size(); ++i) {
        const auto c = comps.label[i];
        phi(static_cast<Eigen::Index>(i)) -= sum[c] / static_cast<double>(comps.sizes[c]);
    }
    std::size_t big = 0;
    for (std::size_t c = 1; c < comps.count; ++c)
        if (comps.sizes[c] > comps.sizes[big]) big = c;
    return comps.count ? sum[big] / static_cast<double>(comps.sizes[big]) : 0.0;
}

/// (n - G)/2 ln tau_c - tau_c/2 sum_{i<j} w_ij (phi_i - phi_j)^2
inline double icar_log_density_kernel(const Eigen::VectorXd& phi, const ProximityMatrix& w, double tau_c) {
    if (static_cast<std::size_t>(phi.size()) != w.size()) throw ValidationError("phi length does not match W");
    const auto comps = connected_components(w);
    if (!satisfies_zero_sum(phi, comps))
        throw DomainError("phi violates the per-component sum-to-zero constraint");
    const double df = static_cast<double>(w.size() - comps.count);
    return 0.5 * df * std::log(tau_c) - 0.5 * tau_c * icar_quadratic_form(phi, w);
}

}  // namespace crashcar
