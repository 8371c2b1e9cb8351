#pragma once

// Parameter-recovery harness: simulate replicate datasets from a known truth
// on a zone lattice, fit each one and tally credible-interval coverage.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crashcar/mcmc_engine.hpp"
#include "crashcar/synth.hpp"

namespace crashcar {

struct RecoveryOptions {
    std::size_t reps = 20;
    std::size_t lattice = 13;
    std::uint64_t seed = 1;
    McmcConfig mcmc;
    ModelSpec spec;
    double alpha_tolerance = 0.15;
};

struct ReplicateOutcome {
    std::uint64_t data_seed = 0;
    std::uint64_t fit_seed = 0;
    double max_beta_rhat = 0.0;
    bool beta_converged = false;
    std::vector<bool> covered;  ///< per coefficient
    std::optional<double> injected_alpha;
    std::optional<PosteriorSummary> alpha;
    double dic = 0.0;
};

struct RecoverySummary {
    std::vector<std::string> labels;
    std::vector<double> truth;
    std::vector<std::size_t> covered;  ///< replicates whose 95% BCI holds the true value
    std::vector<ReplicateOutcome> replicates;

    std::size_t reps() const { return replicates.size(); }
    std::size_t converged_reps() const {
        return static_cast<std::size_t>(
            std::count_if(replicates.begin(), replicates.end(), [](const auto& r) { return r.beta_converged; }));
    }
    std::size_t min_covered() const { return covered.empty() ? 0 : *std::min_element(covered.begin(), covered.end()); }
    std::size_t alpha_within(double tol) const {
        std::size_t k = 0;
        for (const auto& r : replicates)
            if (r.alpha && r.injected_alpha && std::abs(r.alpha->mean - *r.injected_alpha) <= tol) ++k;
        return k;
    }
};

/// Replicate r uses data seed seed + 2r and sampler seed seed + 2r + 1.
inline RecoverySummary run_recovery(const SimulationTruth& truth, const RecoveryOptions& opt) {
    if (opt.reps == 0) throw ValidationError("recovery needs at least 1 replicate");
    const auto topo = generate_lattice(opt.lattice);
    const auto w = build_weights(topo, truth.proximity);
    RecoverySummary out;
    for (std::size_t r = 0; r < opt.reps; ++r) {
        ReplicateOutcome rep;
        rep.data_seed = opt.seed + 2 * r;
        rep.fit_seed = opt.seed + 2 * r + 1;
        const auto sim = simulate_dataset(topo, truth, {}, rep.data_seed, opt.spec.design);
        const auto design = build_design(sim.records, opt.spec.design);
        auto cfg = opt.mcmc;
        cfg.seed = rep.fit_seed;
        const auto report = fit(sim.records, design, w, opt.spec, cfg);

        if (out.labels.empty()) {
            out.labels = design.labels;
            for (const auto& l : out.labels) {
                auto it = truth.beta.find(l);
                out.truth.push_back(it == truth.beta.end() ? 0.0 : it->second);
            }
            out.covered.assign(out.labels.size(), 0);
        }
        rep.beta_converged = true;
        for (std::size_t j = 0; j < report.beta.size(); ++j) {
            const auto& b = report.beta[j];
            rep.max_beta_rhat = std::max(rep.max_beta_rhat, b.rhat);
            if (!(b.rhat < cfg.bgr_threshold)) rep.beta_converged = false;
            const bool hit = b.posterior.covers(out.truth[j]);
            rep.covered.push_back(hit);
            if (hit) ++out.covered[j];
        }
        rep.injected_alpha = sim.alpha;
        if (report.alpha) rep.alpha = report.alpha->posterior;
        rep.dic = report.dic.dic;
        out.replicates.push_back(std::move(rep));
    }
    return out;
}

inline nlohmann::json to_json(const RecoverySummary& s, double alpha_tolerance = 0.15) {
    using nlohmann::json;
    json coef = json::array();
    const double reps = static_cast<double>(s.reps());
    for (std::size_t j = 0; j < s.labels.size(); ++j)
        coef.push_back({{"name", s.labels[j]},
                        {"truth", s.truth[j]},
                        {"covered", s.covered[j]},
                        {"coverage", static_cast<double>(s.covered[j]) / reps}});
    json reps_j = json::array();
    for (const auto& r : s.replicates) {
        json a = r.alpha ? json{{"mean", r.alpha->mean}, {"lower95", r.alpha->lower}, {"upper95", r.alpha->upper}}
                         : json(nullptr);
        reps_j.push_back({{"data_seed", r.data_seed},
                          {"fit_seed", r.fit_seed},
                          {"max_beta_rhat", r.max_beta_rhat},
                          {"beta_converged", r.beta_converged},
                          {"injected_alpha", r.injected_alpha ? json(*r.injected_alpha) : json(nullptr)},
                          {"alpha", a},
                          {"dic", r.dic}});
    }
    return {{"reps", s.reps()},
            {"coefficients", coef},
            {"min_coverage", static_cast<double>(s.min_covered()) / reps},
            {"beta_converged_reps", s.converged_reps()},
            {"alpha_tolerance", alpha_tolerance},
            {"alpha_within_tolerance_reps", s.alpha_within(alpha_tolerance)},
            {"replicates", reps_j}};
}

}  // namespace crashcar
