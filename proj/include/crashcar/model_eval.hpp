#pragma once

// Model assessment: deviance, DIC, predictive R^2, spatial share alpha and
// multiplicative effect sizes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crashcar/car_model.hpp"
#include "crashcar/error.hpp"
#include "crashcar/stats.hpp"

namespace crashcar {

/// -2 sum_i [y_i ln lambda_i - lambda_i - ln(y_i!)], constants included.
inline double deviance(std::span<const double> y, std::span<const double> lambda) {
    if (y.size() != lambda.size()) throw ValidationError("deviance: length mismatch");
    double ll = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) ll += poisson_loglik(y[i], lambda[i]);
    return -2.0 * ll;
}

struct DicResult {
    double mean_deviance = 0.0;      ///< D-bar
    double deviance_at_mean = 0.0;   ///< D(theta-bar)
    double p_d = 0.0;
    double dic = 0.0;
    bool negative_pd = false;
};

inline DicResult dic(std::span<const double> deviance_trace, double deviance_at_posterior_mean) {
    if (deviance_trace.empty()) throw DomainError("DIC needs a nonempty deviance trace");
    DicResult r;
    r.mean_deviance = mean_of(deviance_trace);
    r.deviance_at_mean = deviance_at_posterior_mean;
    r.p_d = r.mean_deviance - deviance_at_posterior_mean;
    r.dic = r.mean_deviance + r.p_d;
    r.negative_pd = r.p_d < 0.0;
    return r;
}

/// Plug-in deviance at posterior means of beta, theta and phi.
inline double deviance_at_means(std::span<const double> y, const DesignMatrix& d, const Eigen::VectorXd& beta_mean,
                                const Eigen::VectorXd& theta_mean, const Eigen::VectorXd& phi_mean) {
    ModelState s;
    s.beta = beta_mean;
    s.theta = theta_mean;
    s.phi = phi_mean;
    std::vector<double> lambda(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) lambda[i] = linear_predictor(s, d, i).lambda;
    return deviance(y, lambda);
}

enum class DicVerdict { Equivalent, Substantial, Decisive };

inline std::string_view to_string(DicVerdict v) {
    switch (v) {
        case DicVerdict::Equivalent: return "equivalent";
        case DicVerdict::Substantial: return "substantial";
        case DicVerdict::Decisive: return "decisive";
    }
    return "equivalent";
}

/// |delta| > 10 decisive, 5..10 substantial, below 5 equivalent.
inline DicVerdict dic_verdict(double delta) {
    const double d = std::abs(delta);
    if (d > 10.0) return DicVerdict::Decisive;
    if (d >= 5.0) return DicVerdict::Substantial;
    return DicVerdict::Equivalent;
}

struct NamedDic {
    std::string name;
    double dic = 0.0;
};

struct PairwiseVerdict {
    std::string better;
    std::string worse;
    double delta = 0.0;  ///< worse.dic - better.dic, >= 0
    DicVerdict verdict = DicVerdict::Equivalent;
};

struct DicComparison {
    std::vector<NamedDic> ranking;  ///< ascending DIC
    std::vector<PairwiseVerdict> pairs;
};

inline DicComparison compare_dic(std::vector<NamedDic> runs) {
    if (runs.size() < 2) throw DomainError("DIC comparison needs at least 2 runs");
    std::stable_sort(runs.begin(), runs.end(), [](const NamedDic& a, const NamedDic& b) { return a.dic < b.dic; });
    DicComparison c;
    c.ranking = runs;
    for (std::size_t a = 0; a < runs.size(); ++a)
        for (std::size_t b = a + 1; b < runs.size(); ++b) {
            const double delta = runs[b].dic - runs[a].dic;
            c.pairs.push_back({runs[a].name, runs[b].name, delta, dic_verdict(delta)});
        }
    return c;
}

/// 1 - sum (y - yhat)^2 / sum (y - ybar)^2
inline double r_squared(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw ValidationError("r_squared: length mismatch");
    if (y.size() < 2) throw DomainError("r_squared needs at least 2 observations");
    const double ybar = mean_of(y);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        ss_tot += (y[i] - ybar) * (y[i] - ybar);
    }
    if (ss_tot == 0.0) throw DomainError("r_squared undefined: all observations equal");
    return 1.0 - ss_res / ss_tot;
}

/// sd(phi) / (sd(theta) + sd(phi)) over zones for one draw; nullopt when both sds vanish.
inline std::optional<double> alpha_spatial_share(std::span<const double> theta, std::span<const double> phi) {
    if (theta.size() != phi.size()) throw ValidationError("alpha: theta and phi lengths differ");
    if (theta.size() < 2) return std::nullopt;
    const double st = sd_of(theta);
    const double sp = sd_of(phi);
    if (st + sp == 0.0) return std::nullopt;
    return sp / (st + sp);
}

inline double alpha_from_sds(double sd_theta, double sd_phi) {
    if (sd_theta + sd_phi == 0.0) throw DomainError("alpha undefined: both standard deviations are zero");
    return sd_phi / (sd_theta + sd_phi);
}

struct AlphaSummary {
    std::optional<PosteriorSummary> summary;
    std::size_t missing = 0;  ///< iterations where alpha was undefined
};

inline AlphaSummary summarize_alpha(std::span<const std::optional<double>> per_iteration) {
    AlphaSummary out;
    std::vector<double> v;
    v.reserve(per_iteration.size());
    for (const auto& a : per_iteration) {
        if (a) v.push_back(*a);
        else ++out.missing;
    }
    if (!v.empty()) out.summary = summarize_draws(v);
    return out;
}

/// Multiplicative change in expected crashes per unit covariate increase.
inline double percent_change(double beta) {
    if (!std::isfinite(beta)) throw DomainError("percent_change needs a finite coefficient");
    return std::expm1(beta);
}

}  // namespace crashcar
