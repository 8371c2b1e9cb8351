#pragma once

// Structured (JSON) and tabular renderings of posterior and comparison reports.

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crashcar/mcmc_engine.hpp"
#include "crashcar/model_eval.hpp"

namespace crashcar {

inline nlohmann::json to_json(const McmcConfig& c) {
    return {{"chains", c.chains},
            {"burn_in", c.burn_in},
            {"iterations", c.iterations},
            {"thin", c.thin},
            {"seed", c.seed},
            {"target_accept_scalar", c.target_accept_scalar},
            {"target_accept_block", c.target_accept_block},
            {"bgr_threshold", c.bgr_threshold}};
}

inline nlohmann::json to_json(const ParameterSummary& s) {
    return {{"name", s.name},
            {"mean", s.posterior.mean},
            {"sd", s.posterior.sd},
            {"lower95", s.posterior.lower},
            {"upper95", s.posterior.upper},
            {"rhat", s.rhat}};
}

/// Thread count is deliberately absent so reports are identical across machines.
inline nlohmann::json to_json(const PosteriorReport& r, bool include_traces = false) {
    using nlohmann::json;
    json j;
    j["config"] = to_json(r.config);
    j["model_spec"] = to_json(r.spec);
    j["zones"] = r.zones;
    j["components"] = r.components;
    j["draws_per_chain"] = r.draws_per_chain;
    j["adaptation_frozen"] = r.adaptation_frozen;
    json beta = json::array();
    for (const auto& b : r.beta) beta.push_back(to_json(b));
    j["beta"] = beta;
    auto opt = [](const std::optional<ParameterSummary>& s) { return s ? to_json(*s) : json(nullptr); };
    j["sigma_theta2"] = opt(r.sigma_theta2);
    j["theta_precision"] = opt(r.theta_precision);
    j["tau_c"] = opt(r.tau_c);
    j["alpha"] = opt(r.alpha);
    j["alpha_missing"] = r.alpha_missing;
    j["dic"] = {{"mean_deviance", r.dic.mean_deviance},
                {"deviance_at_mean", r.dic.deviance_at_mean},
                {"p_d", r.dic.p_d},
                {"dic", r.dic.dic},
                {"negative_pd", r.dic.negative_pd}};
    j["r_squared"] = r.r_squared ? json(*r.r_squared) : json(nullptr);
    j["fitted"] = r.fitted;
    j["theta_mean"] = r.theta_mean;
    j["phi_mean"] = r.phi_mean;
    json chains = json::array();
    for (const auto& c : r.chains)
        chains.push_back({{"beta_acceptance", c.beta_acceptance},
                          {"theta_acceptance", c.theta_acceptance},
                          {"phi_acceptance", c.phi_acceptance},
                          {"clamp_events", c.clamp_events}});
    j["chains"] = chains;
    j["converged"] = r.converged;
    j["unconverged"] = r.unconverged;
    j["warnings"] = r.warnings;
    if (include_traces) j["deviance_trace"] = r.deviance_trace;
    return j;
}

/// The fields a model comparison needs, read back from a serialized report.
struct ComparisonEntry {
    std::string name;
    DicResult dic;
    std::optional<double> r_squared;
    std::optional<PosteriorSummary> alpha;
};

inline ComparisonEntry comparison_entry_from_json(std::string name, const nlohmann::json& j) {
    ComparisonEntry e;
    e.name = std::move(name);
    try {
        const auto& d = j.at("dic");
        e.dic.mean_deviance = d.at("mean_deviance").get<double>();
        e.dic.deviance_at_mean = d.at("deviance_at_mean").get<double>();
        e.dic.p_d = d.at("p_d").get<double>();
        e.dic.dic = d.at("dic").get<double>();
        e.dic.negative_pd = e.dic.p_d < 0.0;
        if (j.contains("r_squared") && !j.at("r_squared").is_null()) e.r_squared = j.at("r_squared").get<double>();
        if (j.contains("alpha") && !j.at("alpha").is_null()) {
            const auto& a = j.at("alpha");
            e.alpha = PosteriorSummary{a.at("mean").get<double>(), a.at("sd").get<double>(),
                                       a.at("lower95").get<double>(), a.at("upper95").get<double>()};
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError("report '" + e.name + "': " + ex.what());
    }
    return e;
}

inline ComparisonEntry comparison_entry(std::string name, const PosteriorReport& r) {
    return comparison_entry_from_json(std::move(name), to_json(r));
}

inline nlohmann::json comparison_json(const std::vector<ComparisonEntry>& runs) {
    using nlohmann::json;
    std::vector<NamedDic> named;
    json models = json::array();
    for (const auto& e : runs) {
        named.push_back({e.name, e.dic.dic});
        json m{{"name", e.name},
               {"mean_deviance", e.dic.mean_deviance},
               {"p_d", e.dic.p_d},
               {"dic", e.dic.dic},
               {"r_squared", e.r_squared ? json(*e.r_squared) : json(nullptr)}};
        m["alpha"] = e.alpha ? json{{"mean", e.alpha->mean}, {"lower95", e.alpha->lower}, {"upper95", e.alpha->upper}}
                             : json(nullptr);
        models.push_back(m);
    }
    const auto cmp = compare_dic(named);
    json ranking = json::array();
    for (const auto& r : cmp.ranking) ranking.push_back(r.name);
    json pairs = json::array();
    for (const auto& p : cmp.pairs)
        pairs.push_back({{"better", p.better}, {"worse", p.worse}, {"delta", p.delta},
                         {"verdict", std::string(to_string(p.verdict))}});
    return {{"models", models}, {"ranking", ranking}, {"pairwise", pairs}};
}

namespace detail {
inline std::string fmt3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

inline std::string mean_bci(const PosteriorSummary& s) {
    return fmt3(s.mean) + " (" + fmt3(s.lower) + ", " + fmt3(s.upper) + ")";
}
}  // namespace detail

/// Variable | Mean (95% BCI) | R-hat; '*' marks intervals that exclude 0.
inline std::string render_table(const PosteriorReport& r) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-26s %-34s %7s\n", "Variable", "Mean (95% BCI)", "R-hat");
    os << line << std::string(69, '-') << '\n';
    auto row = [&](const std::string& name, const PosteriorSummary& s, double rhat, bool mark) {
        const std::string cell = detail::mean_bci(s) + (mark && s.excludes_zero() ? " *" : "");
        std::snprintf(line, sizeof line, "%-26s %-34s %7.3f\n", name.c_str(), cell.c_str(), rhat);
        os << line;
    };
    for (const auto& b : r.beta) row(b.name, b.posterior, b.rhat, true);
    if (r.tau_c) row("CAR effect (tau_c)", r.tau_c->posterior, r.tau_c->rhat, false);
    if (r.theta_precision) row("Random effect (1/sigma^2)", r.theta_precision->posterior, r.theta_precision->rhat, false);
    if (r.sigma_theta2) row("Random effect (sigma^2)", r.sigma_theta2->posterior, r.sigma_theta2->rhat, false);
    if (r.alpha) row("alpha", r.alpha->posterior, r.alpha->rhat, false);
    os << std::string(69, '-') << '\n';
    std::snprintf(line, sizeof line, "%-26s %.2f  (Dbar %.2f, pD %.2f)\n", "DIC", r.dic.dic, r.dic.mean_deviance,
                  r.dic.p_d);
    os << line;
    if (r.r_squared) {
        std::snprintf(line, sizeof line, "%-26s %.3f\n", "R^2", *r.r_squared);
        os << line;
    }
    os << "* 95% BCI excludes 0\n";
    if (!r.converged) {
        os << "NOT CONVERGED (R-hat > " << r.config.bgr_threshold << "):";
        for (const auto& u : r.unconverged) os << ' ' << u;
        os << '\n';
    }
    return os.str();
}

}  // namespace crashcar
