#pragma once

// Metropolis-within-Gibbs sampler for the Poisson-lognormal ICAR model,
// with a maximum-likelihood Poisson fit for initialization and informative
// priors, the Gelman-Rubin diagnostic, and posterior report assembly.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "crashcar/car_model.hpp"
#include "crashcar/error.hpp"
#include "crashcar/model_eval.hpp"
#include "crashcar/spatial_weights.hpp"
#include "crashcar/stats.hpp"
#include "crashcar/taz_data.hpp"

namespace crashcar {

struct McmcConfig {
    std::size_t chains = 2;
    std::size_t burn_in = 20000;  ///< adaptation happens here and only here
    std::size_t iterations = 50000;
    std::size_t thin = 1;
    std::uint64_t seed = 1;
    double target_accept_scalar = 0.44;
    double target_accept_block = 0.234;
    double bgr_threshold = 1.1;
    std::size_t threads = 0;  ///< 0: CRASHCAR_THREADS or hardware concurrency
    std::size_t adapt_batch = 50;
    bool debug_checks = false;

    void validate() const {
        if (chains < 2) throw ValidationError("at least 2 chains are required for the BGR diagnostic");
        if (burn_in == 0 || iterations == 0 || thin == 0 || adapt_batch == 0)
            throw ValidationError("iteration counts must be > 0");
        if (iterations / thin < 2) throw ValidationError("need at least 2 retained draws per chain");
    }
};

inline std::size_t resolve_thread_count(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("CRASHCAR_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// --- maximum-likelihood Poisson regression ------------------------------------------------

struct IrlsResult {
    Eigen::VectorXd beta;
    Eigen::MatrixXd covariance;  ///< inverse Fisher information at the optimum
    std::size_t iterations = 0;
    double gradient_norm = 0.0;
};

/// Newton-Raphson (equivalently IRLS) for the canonical-link Poisson GLM.
/// Stops when ||X'(y - mu)|| < 1e-8 (scaled by max(1, ||X'y||)).
inline IrlsResult irls_poisson_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                   const std::optional<Eigen::VectorXd>& offset = std::nullopt,
                                   std::size_t max_iterations = 100) {
    const auto n = x.rows();
    const auto p = x.cols();
    if (y.size() != n) throw ValidationError("irls: response length does not match design");
    if (n == 0 || p == 0) throw DomainError("irls: empty design");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < p) throw DomainError("irls: design matrix is rank deficient");
    if ((y.array() < 0.0).any()) throw DomainError("irls: negative counts");
    const double ybar = y.mean();
    if (!(ybar > 0.0)) throw DomainError("irls: all counts are zero, the maximum-likelihood estimate does not exist");

    const Eigen::VectorXd off = offset ? *offset : Eigen::VectorXd::Zero(n);
    // Start from the least-squares fit of a shifted log response.
    Eigen::VectorXd z = ((y.array() + 0.5).log() - off.array()).matrix();
    Eigen::VectorXd beta = qr.solve(z);

    auto loglik = [&](const Eigen::VectorXd& b) {
        Eigen::ArrayXd eta = (x * b + off).array();
        return (y.array() * eta - eta.exp()).sum();
    };
    const double tol = 1e-8 * std::max(1.0, (x.transpose() * y).norm());

    IrlsResult r;
    double ll = loglik(beta);
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        Eigen::VectorXd mu = (x * beta + off).array().exp().matrix();
        Eigen::VectorXd grad = x.transpose() * (y - mu);
        r.gradient_norm = grad.norm();
        if (r.gradient_norm < tol) {
            r.beta = beta;
            r.iterations = it - 1;
            Eigen::MatrixXd info = x.transpose() * mu.asDiagonal() * x;
            r.covariance = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
            return r;
        }
        Eigen::MatrixXd info = x.transpose() * mu.asDiagonal() * x;
        Eigen::VectorXd step = info.ldlt().solve(grad);
        double t = 1.0;
        Eigen::VectorXd next = beta + step;
        double ll_next = loglik(next);
        while (!(ll_next >= ll) && t > 1e-10) {
            t *= 0.5;
            next = beta + t * step;
            ll_next = loglik(next);
        }
        beta = next;
        ll = ll_next;
    }
    throw DomainError("irls: no convergence after " + std::to_string(max_iterations) + " iterations");
}

// --- conjugate hyperparameter updates ----------------------------------------------------

/// Inverse-gamma(a + n/2, b + sum theta^2 / 2).
inline InverseGammaPrior sigma_theta_posterior(const Eigen::VectorXd& theta, const InverseGammaPrior& prior) {
    return {prior.shape + 0.5 * static_cast<double>(theta.size()), prior.scale + 0.5 * theta.squaredNorm()};
}

template <class Rng>
double update_sigma_theta(const Eigen::VectorXd& theta, const InverseGammaPrior& prior, Rng& rng) {
    const auto post = sigma_theta_posterior(theta, prior);
    std::gamma_distribution<double> g(post.shape, 1.0 / post.scale);
    return 1.0 / g(rng);
}

/// Gamma(a + (n - G)/2, b + sum_{i<j} w_ij (phi_i - phi_j)^2 / 2).
inline GammaPrior tau_c_posterior(const Eigen::VectorXd& phi, const ProximityMatrix& w, std::size_t components,
                                  const GammaPrior& prior) {
    const double df = static_cast<double>(w.size() - components);
    return {prior.shape + 0.5 * df, prior.rate + 0.5 * icar_quadratic_form(phi, w)};
}

template <class Rng>
double update_tau_c(const Eigen::VectorXd& phi, const ProximityMatrix& w, std::size_t components,
                    const GammaPrior& prior, Rng& rng) {
    const auto post = tau_c_posterior(phi, w, components, prior);
    std::gamma_distribution<double> g(post.shape, 1.0 / post.rate);
    return g(rng);
}

// --- convergence diagnostic ------------------------------------------------------------------

/// Univariate potential scale reduction factor over equal-length chains.
inline double gelman_rubin(std::span<const std::vector<double>> chains) {
    if (chains.size() < 2) throw DomainError("gelman_rubin needs at least 2 chains");
    const std::size_t n = chains.front().size();
    for (const auto& c : chains)
        if (c.size() != n) throw ValidationError("gelman_rubin: chains have unequal lengths");
    if (n < 2) throw DomainError("gelman_rubin needs at least 2 draws per chain");
    std::vector<double> means;
    double within = 0.0;
    for (const auto& c : chains) {
        means.push_back(mean_of(c));
        within += variance_of(c);
    }
    within /= static_cast<double>(chains.size());
    const double between_over_n = variance_of(means);
    if (within == 0.0) return between_over_n == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    const double nn = static_cast<double>(n);
    return std::sqrt(((nn - 1.0) / nn * within + between_over_n) / within);
}

// --- sampler ---------------------------------------------------------------------------------

struct ChainDiagnostics {
    double beta_acceptance = 0.0;
    double theta_acceptance = 0.0;  ///< mean over zones
    double phi_acceptance = 0.0;    ///< mean over non-island zones
    std::size_t clamp_events = 0;
    std::size_t recentering_checks = 0;
};

namespace detail {

struct FitContext {
    const DesignMatrix* design = nullptr;
    Eigen::VectorXd y;
    Eigen::VectorXd lgamma_y1;
    const ProximityMatrix* w = nullptr;
    Components comps;
    std::size_t nonisland_components = 0;
    std::vector<std::vector<Eigen::Index>> members;  ///< zones per component
    ModelSpec spec;
    Eigen::VectorXd prior_mean;
    Eigen::VectorXd prior_precision;
    Eigen::VectorXd beta_start;
    Eigen::MatrixXd beta_cov_start;
};

struct ChainOutput {
    std::vector<std::vector<double>> beta;  ///< [coefficient][draw], raw covariate scale
    std::vector<double> sigma_theta2;
    std::vector<double> tau_c;
    std::vector<std::optional<double>> alpha;
    std::vector<double> deviance;
    Eigen::VectorXd beta_design_sum;
    Eigen::VectorXd theta_sum;
    Eigen::VectorXd phi_sum;
    Eigen::VectorXd lambda_sum;
    std::size_t kept = 0;
    ChainDiagnostics diag;
    bool adaptation_frozen = false;
};

class ChainSampler {
public:
    ChainSampler(const FitContext& ctx, const McmcConfig& cfg, std::size_t chain_index)
        : ctx_(ctx), cfg_(cfg), x_(ctx.design->x), n_(x_.rows()), p_(x_.cols()) {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu),
                          static_cast<std::uint32_t>(cfg.seed >> 32), static_cast<std::uint32_t>(chain_index),
                          0x9e3779b9u};
        rng_.seed(seq);
        use_theta_ = ctx.spec.include_theta;
        use_phi_ = ctx.spec.include_car;
        compensate_ = use_phi_ && ctx.comps.count == 1;
        initialize();
    }

    ChainOutput run() {
        ChainOutput out;
        out.beta.assign(static_cast<std::size_t>(p_), {});
        out.beta_design_sum = Eigen::VectorXd::Zero(p_);
        out.theta_sum = Eigen::VectorXd::Zero(n_);
        out.phi_sum = Eigen::VectorXd::Zero(n_);
        out.lambda_sum = Eigen::VectorXd::Zero(n_);
        const std::size_t keep = cfg_.iterations / cfg_.thin;
        for (auto& b : out.beta) b.reserve(keep);
        out.deviance.reserve(keep);

        for (std::size_t it = 0; it < cfg_.burn_in; ++it) {
            sweep();
            if ((it + 1) % cfg_.adapt_batch == 0) adapt();
            if (refresh_every_ > 0 && (it + 1) % refresh_every_ == 0 && it + 1 < cfg_.burn_in) refresh_beta_proposal();
        }
        adapting_ = false;
        out.adaptation_frozen = true;
        reset_counters();

        for (std::size_t it = 0; it < cfg_.iterations; ++it) {
            sweep();
            if ((it + 1) % cfg_.thin == 0) record(out);
        }
        out.diag = diagnostics();
        return out;
    }

private:
    // -- setup --

    void initialize() {
        std::normal_distribution<double> z(0.0, 1.0);
        std::uniform_real_distribution<double> u(0.5, 2.0);

        Eigen::LLT<Eigen::MatrixXd> llt(ctx_.beta_cov_start);
        chol_ = llt.info() == Eigen::Success ? Eigen::MatrixXd(llt.matrixL())
                                             : Eigen::MatrixXd(ctx_.beta_cov_start.diagonal().cwiseSqrt().asDiagonal());
        Eigen::VectorXd zz(p_);
        for (Eigen::Index j = 0; j < p_; ++j) zz(j) = z(rng_);
        // Overdispersed start around the maximum-likelihood fit.
        beta_ = ctx_.beta_start + 2.0 * chol_ * zz;
        beta_scale_ = 2.38 / std::sqrt(static_cast<double>(p_));

        theta_ = Eigen::VectorXd::Zero(n_);
        phi_ = Eigen::VectorXd::Zero(n_);
        sigma2_ = ctx_.spec.fixed_sigma_theta2.value_or(0.1 * u(rng_));
        tau_ = ctx_.spec.fixed_tau_c.value_or(1.0 * u(rng_));
        if (use_theta_)
            for (Eigen::Index i = 0; i < n_; ++i) theta_(i) = 0.1 * z(rng_);
        if (use_phi_) {
            for (Eigen::Index i = 0; i < n_; ++i)
                if (!ctx_.w->is_island(static_cast<std::size_t>(i))) phi_(i) = 0.1 * z(rng_);
            center_per_component(phi_, ctx_.comps);
        }

        theta_sd_.assign(static_cast<std::size_t>(n_), 0.0);
        phi_sd_.assign(static_cast<std::size_t>(n_), 0.0);
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double s = 1.0 / std::sqrt(ctx_.y(i) + 1.0);
            theta_sd_[static_cast<std::size_t>(i)] = s;
            phi_sd_[static_cast<std::size_t>(i)] = s;
        }
        theta_acc_.assign(static_cast<std::size_t>(n_), 0);
        phi_acc_.assign(static_cast<std::size_t>(n_), 0);
        theta_tot_.assign(static_cast<std::size_t>(n_), 0);
        phi_tot_.assign(static_cast<std::size_t>(n_), 0);
        refresh_every_ = std::max<std::size_t>(cfg_.burn_in / 10, 1);

        eta_ = x_ * beta_ + ctx_.design->offset;
        refresh_beta_proposal();
    }

    // -- log densities --

    double clamp_psi(double psi) {
        if (std::abs(psi) > kPsiClamp) {
            ++clamp_events_;
            return std::copysign(kPsiClamp, psi);
        }
        return psi;
    }

    double zone_loglik(Eigen::Index i, double psi) {
        return poisson_loglik_psi(ctx_.y(i), clamp_psi(psi), ctx_.lgamma_y1(i));
    }

    double beta_log_prior(const Eigen::VectorXd& b) const {
        return -0.5 * ((b - ctx_.prior_mean).array().square() * ctx_.prior_precision.array()).sum();
    }

    double intercept_log_prior(double b0) const {
        const double d = b0 - ctx_.prior_mean(0);
        return -0.5 * d * d * ctx_.prior_precision(0);
    }

    double total_loglik() {
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n_; ++i) ll += zone_loglik(i, eta_(i) + theta_(i) + phi_(i));
        return ll;
    }

    // -- updates --

    void sweep() {
        update_beta();
        if (use_theta_) update_theta();
        if (use_phi_) update_phi();
        if (use_theta_ && !ctx_.spec.fixed_sigma_theta2)
            sigma2_ = update_sigma_theta(theta_, ctx_.spec.sigma_theta2, rng_);
        if (use_phi_) {
            recenter_phi();
            if (!ctx_.spec.fixed_tau_c) tau_ = update_tau_c(phi_, *ctx_.w, ctx_.comps.count, ctx_.spec.tau_c, rng_);
        }
        if (!std::isfinite(sigma2_) || !std::isfinite(tau_) || !beta_.allFinite())
            throw NumericalDivergence("non-finite sampler state (sigma_theta2=" + std::to_string(sigma2_) +
                                      ", tau_c=" + std::to_string(tau_) + ")");
    }

    void update_beta() {
        std::normal_distribution<double> z(0.0, 1.0);
        Eigen::VectorXd zz(p_);
        for (Eigen::Index j = 0; j < p_; ++j) zz(j) = z(rng_);
        const Eigen::VectorXd prop = beta_ + beta_scale_ * (chol_ * zz);
        const Eigen::VectorXd eta_prop = x_ * prop + ctx_.design->offset;
        double delta = beta_log_prior(prop) - beta_log_prior(beta_);
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double re = theta_(i) + phi_(i);
            delta += zone_loglik(i, eta_prop(i) + re) - zone_loglik(i, eta_(i) + re);
        }
        ++beta_tot_;
        if (accept(delta)) {
            beta_ = prop;
            eta_ = eta_prop;
            ++beta_acc_;
        }
    }

    void update_theta() {
        std::normal_distribution<double> z(0.0, 1.0);
        for (Eigen::Index i = 0; i < n_; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const double cur = theta_(i);
            const double prop = cur + theta_sd_[k] * z(rng_);
            const double base = eta_(i) + phi_(i);
            const double delta = zone_loglik(i, base + prop) - zone_loglik(i, base + cur) -
                                 0.5 * (prop * prop - cur * cur) / sigma2_;
            ++theta_tot_[k];
            if (accept(delta)) {
                theta_(i) = prop;
                ++theta_acc_[k];
            }
        }
    }

    // With one island-free component, phi_ holds uncentered values during the
    // sweep and the removed mean is carried by the intercept (shift_), so a
    // move changes only zone i's likelihood. Otherwise each move is projected
    // onto its component's zero-sum subspace, which shifts the whole component.
    void update_phi() {
        std::normal_distribution<double> z(0.0, 1.0);
        shift_ = 0.0;
        const auto& w = *ctx_.w;
        for (Eigen::Index i = 0; i < n_; ++i) {
            const auto k = static_cast<std::size_t>(i);
            if (w.is_island(k)) continue;
            const auto c = ctx_.comps.label[k];
            const double nc = static_cast<double>(ctx_.comps.sizes[c]);
            const auto cond = car_conditional(phi_, w, tau_, k);
            const double cur = phi_(i);
            const double step = phi_sd_[k] * z(rng_);
            const double prop = cur + step;
            double delta = -0.5 * ((prop - cond.mean) * (prop - cond.mean) - (cur - cond.mean) * (cur - cond.mean)) /
                           cond.variance;
            if (compensate_) {
                const double b0 = beta_(0) + shift_;
                delta += intercept_log_prior(b0 + step / nc) - intercept_log_prior(b0);
                const double base = eta_(i) + theta_(i);
                delta += zone_loglik(i, base + prop) - zone_loglik(i, base + cur);
            } else {
                const double s = step / nc;
                for (auto j : ctx_.members[c]) {
                    const double old_psi = eta_(j) + theta_(j) + phi_(j);
                    const double new_psi = old_psi - s + (j == i ? step : 0.0);
                    delta += zone_loglik(j, new_psi) - zone_loglik(j, old_psi);
                }
            }
            ++phi_tot_[k];
            if (accept(delta)) {
                phi_(i) = prop;
                if (compensate_) {
                    shift_ += step / nc;
                } else {
                    for (auto j : ctx_.members[c]) phi_(j) -= step / nc;
                }
                ++phi_acc_[k];
            }
        }
    }

    void recenter_phi() {
        if (!compensate_) {
            center_per_component(phi_, ctx_.comps);
            return;
        }
        const double before = cfg_.debug_checks ? total_loglik() : 0.0;
        const double removed = center_per_component(phi_, ctx_.comps);
        beta_(0) += removed;
        eta_.array() += removed;
        if (cfg_.debug_checks) {
            const double after = total_loglik();
            ++recentering_checks_;
            if (std::abs(after - before) > 1e-8 * std::max(1.0, std::abs(before)))
                throw NumericalDivergence("phi re-centering changed the likelihood");
            if (std::abs(shift_ - removed) > 1e-8 * std::max(1.0, std::abs(removed)))
                throw NumericalDivergence("intercept shift bookkeeping drifted");
        }
        shift_ = 0.0;
    }

    bool accept(double log_ratio) {
        if (std::isnan(log_ratio)) throw NumericalDivergence("NaN Metropolis ratio");
        if (log_ratio >= 0.0) return true;
        return std::log(unif_(rng_)) < log_ratio;
    }

    // -- adaptation (burn-in only) --

    void adapt() {
        if (!adapting_) return;
        ++batch_;
        const double gain = 2.0 / std::sqrt(static_cast<double>(batch_));
        auto tune = [&](std::vector<double>& sd, std::vector<std::size_t>& acc, std::vector<std::size_t>& tot) {
            for (std::size_t k = 0; k < sd.size(); ++k) {
                if (tot[k] == 0) continue;
                const double rate = static_cast<double>(acc[k]) / static_cast<double>(tot[k]);
                sd[k] *= std::exp(gain * (rate - cfg_.target_accept_scalar));
                acc[k] = tot[k] = 0;
            }
        };
        tune(theta_sd_, theta_acc_, theta_tot_);
        tune(phi_sd_, phi_acc_, phi_tot_);
        if (beta_tot_ > 0) {
            const double rate = static_cast<double>(beta_acc_) / static_cast<double>(beta_tot_);
            beta_scale_ *= std::exp(gain * (rate - cfg_.target_accept_block));
            beta_acc_ = beta_tot_ = 0;
        }
    }

    /// Proposal shape from the conditional Fisher information of beta given
    /// the current random effects, plus the prior precision.
    void refresh_beta_proposal() {
        if (!adapting_) return;
        Eigen::VectorXd lambda(n_);
        for (Eigen::Index i = 0; i < n_; ++i)
            lambda(i) = std::exp(std::clamp(eta_(i) + theta_(i) + phi_(i), -kPsiClamp, kPsiClamp));
        Eigen::MatrixXd info = x_.transpose() * lambda.asDiagonal() * x_;
        info.diagonal() += ctx_.prior_precision;
        Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p_, p_));
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() == Eigen::Success) chol_ = llt.matrixL();
    }

    void reset_counters() {
        beta_acc_ = beta_tot_ = 0;
        std::fill(theta_acc_.begin(), theta_acc_.end(), 0);
        std::fill(theta_tot_.begin(), theta_tot_.end(), 0);
        std::fill(phi_acc_.begin(), phi_acc_.end(), 0);
        std::fill(phi_tot_.begin(), phi_tot_.end(), 0);
        clamp_events_ = 0;
    }

    // -- recording --

    void record(ChainOutput& out) {
        const Eigen::VectorXd raw = ctx_.design->to_raw_scale(beta_);
        for (Eigen::Index j = 0; j < p_; ++j) out.beta[static_cast<std::size_t>(j)].push_back(raw(j));
        out.sigma_theta2.push_back(sigma2_);
        out.tau_c.push_back(tau_);
        out.alpha.push_back(alpha_spatial_share(std::span<const double>(theta_.data(), static_cast<std::size_t>(n_)),
                                                std::span<const double>(phi_.data(), static_cast<std::size_t>(n_))));
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double psi = std::clamp(eta_(i) + theta_(i) + phi_(i), -kPsiClamp, kPsiClamp);
            const double lam = std::exp(psi);
            ll += ctx_.y(i) * psi - lam - ctx_.lgamma_y1(i);
            out.lambda_sum(i) += lam;
        }
        out.deviance.push_back(-2.0 * ll);
        out.beta_design_sum += beta_;
        out.theta_sum += theta_;
        out.phi_sum += phi_;
        ++out.kept;
    }

    ChainDiagnostics diagnostics() const {
        ChainDiagnostics d;
        d.beta_acceptance = beta_tot_ ? static_cast<double>(beta_acc_) / static_cast<double>(beta_tot_) : 0.0;
        auto mean_rate = [](const std::vector<std::size_t>& acc, const std::vector<std::size_t>& tot) {
            double s = 0.0;
            std::size_t k = 0;
            for (std::size_t i = 0; i < acc.size(); ++i)
                if (tot[i]) {
                    s += static_cast<double>(acc[i]) / static_cast<double>(tot[i]);
                    ++k;
                }
            return k ? s / static_cast<double>(k) : 0.0;
        };
        d.theta_acceptance = mean_rate(theta_acc_, theta_tot_);
        d.phi_acceptance = mean_rate(phi_acc_, phi_tot_);
        d.clamp_events = clamp_events_;
        d.recentering_checks = recentering_checks_;
        return d;
    }

    const FitContext& ctx_;
    const McmcConfig& cfg_;
    const Eigen::MatrixXd& x_;
    const Eigen::Index n_;
    const Eigen::Index p_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};

    bool use_theta_ = true;
    bool use_phi_ = true;
    bool compensate_ = false;
    bool adapting_ = true;

    Eigen::VectorXd beta_, theta_, phi_, eta_;
    double sigma2_ = 1.0;
    double tau_ = 1.0;
    double shift_ = 0.0;

    Eigen::MatrixXd chol_;
    double beta_scale_ = 1.0;
    std::vector<double> theta_sd_, phi_sd_;
    std::size_t beta_acc_ = 0, beta_tot_ = 0;
    std::vector<std::size_t> theta_acc_, theta_tot_, phi_acc_, phi_tot_;
    std::size_t batch_ = 0;
    std::size_t refresh_every_ = 0;
    std::size_t clamp_events_ = 0;
    std::size_t recentering_checks_ = 0;
};

}  // namespace detail

// --- report --------------------------------------------------------------------------------

struct ParameterSummary {
    std::string name;
    PosteriorSummary posterior;
    double rhat = 1.0;
};

struct PosteriorReport {
    std::vector<ParameterSummary> beta;
    std::optional<ParameterSummary> sigma_theta2;
    std::optional<ParameterSummary> theta_precision;  ///< 1 / sigma_theta2
    std::optional<ParameterSummary> tau_c;
    std::optional<ParameterSummary> alpha;
    std::size_t alpha_missing = 0;

    DicResult dic;
    std::optional<double> r_squared;
    std::vector<double> fitted;  ///< posterior mean of lambda_i
    std::vector<double> theta_mean;
    std::vector<double> phi_mean;
    std::vector<std::vector<double>> deviance_trace;  ///< per chain

    std::vector<ChainDiagnostics> chains;
    std::size_t draws_per_chain = 0;
    bool adaptation_frozen = false;
    bool converged = true;
    std::vector<std::string> unconverged;
    std::vector<std::string> warnings;

    McmcConfig config;
    ModelSpec spec;
    std::size_t zones = 0;
    std::size_t components = 0;

    const ParameterSummary* find(const std::string& name) const {
        for (const auto& b : beta)
            if (b.name == name) return &b;
        for (const auto* o : {&sigma_theta2, &theta_precision, &tau_c, &alpha})
            if (*o && (*o)->name == name) return &**o;
        return nullptr;
    }
};

namespace detail {

inline ParameterSummary summarize_parameter(std::string name, const std::vector<std::vector<double>>& per_chain) {
    ParameterSummary s;
    s.name = std::move(name);
    std::vector<double> pooled;
    for (const auto& c : per_chain) pooled.insert(pooled.end(), c.begin(), c.end());
    s.posterior = summarize_draws(pooled);
    s.rhat = gelman_rubin(per_chain);
    return s;
}

inline FitContext make_context(const std::vector<ZoneRecord>& records, const DesignMatrix& design,
                               const ProximityMatrix& w, const ModelSpec& spec, std::vector<std::string>& warnings) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(records.size());
    if (design.x.rows() != n) throw ValidationError("design rows do not match the dataset");
    if (w.size() != records.size()) throw ValidationError("weight matrix size does not match the dataset");
    if (design.x.cols() == 0 || design.labels.empty() || design.labels.front() != "intercept")
        throw ValidationError("design column 0 must be the intercept");

    FitContext ctx;
    ctx.design = &design;
    ctx.y = response(records);
    ctx.lgamma_y1 = ctx.y.unaryExpr([](double v) { return std::lgamma(v + 1.0); });
    ctx.w = &w;
    ctx.comps = connected_components(w);
    for (std::size_t c = 0; c < ctx.comps.count; ++c)
        if (ctx.comps.sizes[c] > 1) ++ctx.nonisland_components;
    ctx.members.assign(ctx.comps.count, {});
    for (std::size_t i = 0; i < records.size(); ++i)
        ctx.members[ctx.comps.label[i]].push_back(static_cast<Eigen::Index>(i));
    if (ctx.comps.has_islands) warnings.push_back("weight matrix has islands; their spatial effects are pinned to 0");
    if (ctx.nonisland_components > 1)
        warnings.push_back("weight matrix has " + std::to_string(ctx.nonisland_components) +
                           " connected components; spatial effects are centered within each");
    ctx.spec = spec;

    const auto p = design.x.cols();
    std::optional<IrlsResult> ml;
    try {
        ml = irls_poisson_fit(design.x, ctx.y, design.offset);
    } catch (const DomainError& e) {
        warnings.push_back(std::string("maximum-likelihood initialization failed: ") + e.what());
    }
    if (ml) {
        ctx.beta_start = ml->beta;
        ctx.beta_cov_start = ml->covariance;
    } else {
        ctx.beta_start = Eigen::VectorXd::Zero(p);
        ctx.beta_start(0) = std::log(std::max(ctx.y.mean(), 0.5));
        ctx.beta_cov_start = 1e-2 * Eigen::MatrixXd::Identity(p, p);
    }

    ctx.prior_mean = Eigen::VectorXd::Constant(p, spec.default_beta.mean);
    Eigen::VectorXd var = Eigen::VectorXd::Constant(p, spec.default_beta.variance);
    if (spec.beta_prior_mode == BetaPriorMode::Informative) {
        if (!ml) throw DomainError("informative priors need a maximum-likelihood fit, which failed");
        ctx.prior_mean = ml->beta;
        var = ml->covariance.diagonal() * spec.informative_variance_inflation;
    }
    if (!spec.beta.empty()) {
        if (static_cast<Eigen::Index>(spec.beta.size()) != p)
            throw ValidationError("per-coefficient priors do not match the design width");
        for (Eigen::Index j = 0; j < p; ++j) {
            ctx.prior_mean(j) = spec.beta[static_cast<std::size_t>(j)].mean;
            var(j) = spec.beta[static_cast<std::size_t>(j)].variance;
        }
    }
    ctx.prior_precision = var.cwiseInverse();
    return ctx;
}

}  // namespace detail

/// Runs `config.chains` independent chains (concurrently, up to the thread
/// count) and pools their post-burn-in draws. Output depends only on the
/// inputs and the seed.
inline PosteriorReport fit(const std::vector<ZoneRecord>& records, const DesignMatrix& design,
                           const ProximityMatrix& w, const ModelSpec& spec, const McmcConfig& config) {
    config.validate();
    PosteriorReport rep;
    rep.warnings = design.warnings;
    const auto ctx = detail::make_context(records, design, w, spec, rep.warnings);

    std::vector<detail::ChainOutput> outs(config.chains);
    std::vector<std::exception_ptr> errors(config.chains);
    const std::size_t threads = std::min(resolve_thread_count(config.threads), config.chains);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c = next++; c < config.chains; c = next++) {
            try {
                detail::ChainSampler sampler(ctx, config, c);
                outs[c] = sampler.run();
            } catch (...) {
                errors[c] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    rep.config = config;
    rep.spec = spec;
    rep.zones = records.size();
    rep.components = ctx.comps.count;
    rep.draws_per_chain = outs.front().kept;
    rep.adaptation_frozen = std::all_of(outs.begin(), outs.end(), [](const auto& o) { return o.adaptation_frozen; });

    auto gather = [&](auto member) {
        std::vector<std::vector<double>> v;
        for (const auto& o : outs) v.push_back(o.*member);
        return v;
    };
    for (std::size_t j = 0; j < design.labels.size(); ++j) {
        std::vector<std::vector<double>> v;
        for (const auto& o : outs) v.push_back(o.beta[j]);
        rep.beta.push_back(detail::summarize_parameter(design.labels[j], v));
    }
    if (spec.include_theta) {
        auto s2 = gather(&detail::ChainOutput::sigma_theta2);
        auto prec = s2;
        for (auto& c : prec)
            for (auto& v : c) v = 1.0 / v;
        rep.sigma_theta2 = detail::summarize_parameter("sigma_theta2", s2);
        rep.theta_precision = detail::summarize_parameter("theta_precision", prec);
    }
    if (spec.include_car) rep.tau_c = detail::summarize_parameter("tau_c", gather(&detail::ChainOutput::tau_c));

    {
        std::vector<std::optional<double>> pooled;
        bool complete = true;
        std::vector<std::vector<double>> per_chain;
        for (const auto& o : outs) {
            std::vector<double> c;
            for (const auto& a : o.alpha) {
                pooled.push_back(a);
                if (a) c.push_back(*a);
                else complete = false;
            }
            per_chain.push_back(std::move(c));
        }
        auto as = summarize_alpha(pooled);
        rep.alpha_missing = as.missing;
        if (as.summary) {
            ParameterSummary ps;
            ps.name = "alpha";
            ps.posterior = *as.summary;
            ps.rhat = complete ? gelman_rubin(per_chain) : 1.0;
            rep.alpha = ps;
        }
    }

    const auto n = static_cast<Eigen::Index>(records.size());
    const double total = static_cast<double>(rep.draws_per_chain * outs.size());
    Eigen::VectorXd beta_mean = Eigen::VectorXd::Zero(design.x.cols());
    Eigen::VectorXd theta_mean = Eigen::VectorXd::Zero(n), phi_mean = Eigen::VectorXd::Zero(n),
                    lambda_mean = Eigen::VectorXd::Zero(n);
    for (const auto& o : outs) {
        beta_mean += o.beta_design_sum;
        theta_mean += o.theta_sum;
        phi_mean += o.phi_sum;
        lambda_mean += o.lambda_sum;
    }
    beta_mean /= total;
    theta_mean /= total;
    phi_mean /= total;
    lambda_mean /= total;

    std::vector<double> dev_pooled;
    for (const auto& o : outs) {
        rep.deviance_trace.push_back(o.deviance);
        dev_pooled.insert(dev_pooled.end(), o.deviance.begin(), o.deviance.end());
        rep.chains.push_back(o.diag);
    }
    const std::vector<double> y(ctx.y.data(), ctx.y.data() + n);
    rep.dic = dic(dev_pooled, deviance_at_means(y, design, beta_mean, theta_mean, phi_mean));
    if (rep.dic.negative_pd) rep.warnings.push_back("negative effective number of parameters");
    rep.fitted.assign(lambda_mean.data(), lambda_mean.data() + n);
    rep.theta_mean.assign(theta_mean.data(), theta_mean.data() + n);
    rep.phi_mean.assign(phi_mean.data(), phi_mean.data() + n);
    try {
        rep.r_squared = r_squared(y, rep.fitted);
    } catch (const DomainError& e) {
        rep.warnings.push_back(std::string("R^2 unavailable: ") + e.what());
    }

    auto check = [&](const ParameterSummary& s) {
        if (!(s.rhat <= config.bgr_threshold)) rep.unconverged.push_back(s.name);
    };
    for (const auto& b : rep.beta) check(b);
    for (const auto* o : {&rep.sigma_theta2, &rep.tau_c, &rep.alpha})
        if (*o) check(**o);
    rep.converged = rep.unconverged.empty();
    for (const auto& c : rep.chains)
        if (c.clamp_events > 0) {
            rep.warnings.push_back("linear predictor clamped at |psi| = 30 during sampling");
            break;
        }
    return rep;
}

/// Builds the design from the model specification, then fits.
inline PosteriorReport fit(const std::vector<ZoneRecord>& records, const ProximityMatrix& w, const ModelSpec& spec,
                           const McmcConfig& config) {
    const auto design = build_design(records, spec.design);
    return fit(records, design, w, spec, config);
}

}  // namespace crashcar
