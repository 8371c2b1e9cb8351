#include <sys/wait.h>

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "crashcar/crashcar.hpp"
#include "oracles.hpp"

using namespace crashcar;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

int failures = 0;

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void criterion(int id, const char* title, const std::function<Outcome()>& body, double budget_secs = 0.0) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget_secs > 0.0 && secs >= budget_secs) {
        o.pass = false;
        o.detail += fmt("; over the %.0f s budget", budget_secs);
    }
    if (!o.pass) ++failures;
    std::printf("[%s] criterion %d: %s (%s; %.1f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
    std::fflush(stdout);
}

RoadGraph from_edges(std::size_t n, const std::vector<oracle::Edge>& es, bool weighted) {
    std::vector<RoadEdge> out;
    for (const auto& e : es) out.push_back({e.u, e.v, weighted ? std::optional<double>(e.len) : std::nullopt});
    return RoadGraph(n, out);
}

RoadGraph star(std::size_t leaves) {
    std::vector<RoadEdge> e;
    for (std::size_t i = 1; i <= leaves; ++i) e.push_back({0, i, std::nullopt});
    return RoadGraph(leaves + 1, e);
}

RoadGraph path(std::size_t n) {
    std::vector<RoadEdge> e;
    for (std::size_t i = 0; i + 1 < n; ++i) e.push_back({i, i + 1, std::nullopt});
    return RoadGraph(n, e);
}

RoadGraph cycle(std::size_t n) {
    std::vector<RoadEdge> e;
    for (std::size_t i = 0; i < n; ++i) e.push_back({i, (i + 1) % n, std::nullopt});
    return RoadGraph(n, e);
}

RoadGraph complete(std::size_t n) {
    std::vector<RoadEdge> e;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) e.push_back({i, j, std::nullopt});
    return RoadGraph(n, e);
}

Outcome centrality_oracle() {
    Outcome o;
    std::mt19937_64 rng(777);
    std::uniform_int_distribution<std::size_t> size(3, 8);
    std::uniform_real_distribution<double> dens(0.0, 0.7);
    const int graphs = 250;
    double worst = 0.0;
    for (int t = 0; t < graphs; ++t) {
        const std::size_t n = size(rng);
        const bool weighted = t % 2 == 1;
        auto es = oracle::random_connected_graph(n, dens(rng), rng, weighted);
        auto want = oracle::brute_force_betweenness(n, es, weighted);
        auto got = node_betweenness(from_edges(n, es, weighted), weighted ? PathMetric::EdgeLength : PathMetric::HopCount);
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(got[i] - want[i] / ((n - 1.0) * (n - 2.0))));
    }
    if (!(worst <= 1e-9)) o.pass = false;

    int exact_fail = 0;
    auto s = node_betweenness(star(4));
    exact_fail += s[0] != 1.0;
    for (std::size_t i = 1; i < 5; ++i) exact_fail += s[i] != 0.0;
    for (std::size_t n = 3; n <= 8; ++n) {
        auto p = node_betweenness(path(n));
        for (std::size_t k = 0; k < n; ++k) {
            const double raw = 2.0 * static_cast<double>(k) * static_cast<double>(n - 1 - k);
            exact_fail += p[k] != raw / ((n - 1.0) * (n - 2.0));
        }
        auto c = node_betweenness(cycle(n));
        for (double v : c) exact_fail += v != c[0];
        for (double v : node_betweenness(complete(n))) exact_fail += v != 0.0;
    }
    auto c4 = node_betweenness(cycle(4));
    for (double v : c4) exact_fail += v != 1.0 / 6.0;
    if (exact_fail) o.pass = false;
    o.detail = fmt("%d random graphs, max |diff| %.2e, %d exact-value mismatches", graphs, worst, exact_fail);
    return o;
}

Outcome centralization_anchors() {
    int bad = 0;
    bad += graph_centralization(star(4)) != 1.0;
    for (std::size_t n = 3; n <= 20; ++n) {
        bad += graph_centralization(cycle(n)) != 0.0;
        bad += graph_centralization(complete(n)) != 0.0;
    }
    int identity_bad = 0;
    for (long long n = 3; n <= 50; ++n) {
        const long long poly = n * n * n - 4 * n * n + 5 * n - 2;
        const long long fact = (n - 1) * (n - 1) * (n - 2);
        identity_bad += poly != fact;
        identity_bad += centralization_denominator(static_cast<std::size_t>(n)) != static_cast<double>(fact);
    }
    return {bad == 0 && identity_bad == 0,
            fmt("star N=5 -> %.17g, %d anchor mismatches, %d denominator mismatches for N=3..50",
                graph_centralization(star(4)), bad, identity_bad)};
}

Outcome pattern_ordering() {
    const PatternClass order[] = {PatternClass::Grid, PatternClass::IrregularGrid, PatternClass::Mixed,
                                  PatternClass::Lollipops};
    double med[4];
    int grid_ok = 0, lolli_ok = 0;
    for (int p = 0; p < 4; ++p) {
        std::vector<double> c;
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            std::mt19937_64 rng(seed);
            const double v = graph_centralization(generate_pattern_network(order[p], 5, 0.5, rng));
            c.push_back(v);
            if (order[p] == PatternClass::Grid) grid_ok += classify_pattern(v) == PatternClass::Grid;
            if (order[p] == PatternClass::Lollipops) lolli_ok += classify_pattern(v) == PatternClass::Lollipops;
        }
        std::sort(c.begin(), c.end());
        med[p] = 0.5 * (c[24] + c[25]);
    }
    const bool inc = med[0] < med[1] && med[1] < med[2] && med[2] < med[3];
    return {inc && grid_ok == 50 && lolli_ok == 50,
            fmt("medians %.3f < %.3f < %.3f < %.3f; Grid exemplars %d/50, Lollipops exemplars %d/50", med[0], med[1],
                med[2], med[3], grid_ok, lolli_ok)};
}

ProximityMatrix path_weights(std::size_t n) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> t;
    for (std::size_t i = 0; i + 1 < n; ++i) t.emplace_back(i, i + 1, 1.0);
    return ProximityMatrix(n, t);
}

Outcome conjugate_updates() {
    Eigen::VectorXd theta(4);
    theta << 0.3, -0.1, 0.2, std::sqrt(0.06);
    Eigen::VectorXd phi(4);
    phi << -0.3, -0.1, 0.1, 0.3;
    const auto w = path_weights(4);
    const auto ig = sigma_theta_posterior(theta, InverseGammaPrior{0.001, 0.001});
    const auto ga = tau_c_posterior(phi, w, 1, GammaPrior{0.1, 0.1});
    const bool params = std::abs(ig.shape - 2.001) < 1e-12 && std::abs(ig.scale - 0.101) < 1e-12 &&
                        std::abs(ga.shape - 1.6) < 1e-12 && std::abs(ga.rate - 0.16) < 1e-12;

    std::mt19937_64 rng(2024);
    std::vector<double> s2(100000), tau(100000);
    for (auto& d : s2) d = update_sigma_theta(theta, InverseGammaPrior{0.001, 0.001}, rng);
    for (auto& d : tau) d = update_tau_c(phi, w, 1, GammaPrior{0.1, 0.1}, rng);
    const double p_ig = oracle::ks_pvalue(s2, [&](double x) { return boost::math::gamma_q(ig.shape, ig.scale / x); });
    const double p_ga = oracle::ks_pvalue(tau, [&](double x) { return boost::math::gamma_p(ga.shape, ga.rate * x); });
    return {params && p_ig > 0.01 && p_ga > 0.01,
            fmt("IG(%.4g, %.4g) KS p=%.3f; Gamma(%.4g, %.4g) KS p=%.3f", ig.shape, ig.scale, p_ig, ga.shape, ga.rate,
                p_ga)};
}

Outcome small_model_oracle() {
    oracle::ToyCarProblem p;
    p.y = {14, 6, 33, 9, 21};
    p.x = {1.5, 0.5, 2.5, 1.0, 2.0};
    p.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}};
    p.tau_c = 10.0;
    const auto [g0, g1] = oracle::toy_posterior_mean_grid(p, 17, 5.5);

    std::vector<ZoneRecord> recs(5);
    ZoneTopology topo{5, {}};
    for (std::size_t i = 0; i < 5; ++i) {
        recs[i].zone_id = "Z" + std::to_string(i);
        recs[i].area_km2 = 1.0;
        recs[i].arterial_length_km = 1.0;
        recs[i].access_density = p.x[i];
        recs[i].crash_count = static_cast<long>(p.y[i]);
    }
    for (auto [a, b] : p.edges) topo.pairs.push_back({a, b, 1.0, 1});
    ModelSpec spec;
    spec.include_theta = false;
    spec.fixed_tau_c = p.tau_c;
    spec.design.covariates = {Covariate::AccessDensity};
    spec.design.include_pattern = false;
    spec.design.include_land_use = false;
    McmcConfig cfg;
    cfg.chains = 4;
    cfg.burn_in = 20000;
    cfg.iterations = 200000;
    cfg.seed = 7;
    const auto rep = fit(recs, build_weights(topo, ProximityMode::Adjacency), spec, cfg);
    const double d0 = std::abs(rep.beta[0].posterior.mean - g0), d1 = std::abs(rep.beta[1].posterior.mean - g1);
    return {d0 <= 0.02 && d1 <= 0.02,
            fmt("grid E[b] = (%.4f, %.4f), sampler (%.4f, %.4f)", g0, g1, rep.beta[0].posterior.mean,
                rep.beta[1].posterior.mean)};
}

Outcome parameter_recovery() {
    auto truth = reference_truth();
    truth.phi_sd = 0.7;
    truth.theta_sd = 0.12;
    RecoveryOptions opt;
    opt.reps = 20;
    opt.lattice = 13;
    opt.seed = 1;
    opt.mcmc.chains = 2;
    opt.mcmc.burn_in = 20000;
    opt.mcmc.iterations = 80000;
    opt.mcmc.thin = 8;
    const auto s = run_recovery(truth, opt);
    std::size_t worst = 0;
    for (std::size_t k = 0; k < s.labels.size(); ++k)
        if (s.covered[k] < s.covered[worst]) worst = k;
    const bool ok = s.converged_reps() == s.reps() && s.min_covered() >= 16 && s.alpha_within(0.15) == s.reps();
    return {ok, fmt("beta R-hat < 1.1 in %zu/20; min coverage %zu/20 (%s); alpha within 0.15 in %zu/20",
                    s.converged_reps(), s.min_covered(), s.labels[worst].c_str(), s.alpha_within(0.15))};
}

std::vector<double> dic_gaps(const SimulationTruth& truth) {
    const auto topo = generate_lattice(13);
    const auto w = build_weights(topo, ProximityMode::Adjacency);
    McmcConfig cfg;
    cfg.burn_in = 5000;
    cfg.iterations = 10000;
    cfg.thin = 2;
    ModelSpec car, theta_only;
    theta_only.include_car = false;
    std::vector<double> gaps;
    for (std::uint64_t r = 0; r < 20; ++r) {
        const auto sim = simulate_dataset(topo, truth, {}, 100 + 2 * r);
        cfg.seed = 101 + 2 * r;
        const double with_car = fit(sim.records, w, car, cfg).dic.dic;
        const double without = fit(sim.records, w, theta_only, cfg).dic.dic;
        gaps.push_back(without - with_car);
    }
    return gaps;
}

Outcome dic_discrimination() {
    auto strong = reference_truth();
    strong.beta["intercept"] = 0.0;
    strong.phi_sd = 1.0;
    strong.theta_sd = 0.05;
    auto none = strong;
    none.phi_sd.reset();
    none.phi_mode = EffectMode::Zero;
    none.theta_sd = 0.3;
    const auto gs = dic_gaps(strong);
    const auto gn = dic_gaps(none);
    const auto decisive = std::count_if(gs.begin(), gs.end(), [](double d) { return d > 10.0; });
    const auto equivalent = std::count_if(gn.begin(), gn.end(), [](double d) { return std::abs(d) < 5.0; });
    return {decisive >= 18 && equivalent > 10,
            fmt("spatial data: CAR better by > 10 in %ld/20; non-spatial data: |delta| < 5 in %ld/20",
                static_cast<long>(decisive), static_cast<long>(equivalent))};
}

Outcome effect_sizes() {
    const double a = percent_change(0.443), b = percent_change(0.107), c = percent_change(0.314);
    const std::string sa = fmt("%.0f%%", 100 * a), sb = fmt("%.1f%%", 100 * b), sc = fmt("%.1f%%", 100 * c);
    const bool ok = std::abs(a - 0.5574) <= 0.005 && std::abs(b - 0.1129) <= 0.005 && std::abs(c - 0.3689) <= 0.005 &&
                    sa == "56%" && sb == "11.3%" && sc == "36.9%";
    return {ok, fmt("%.4f -> %s, %.4f -> %s, %.4f -> %s", a, sa.c_str(), b, sb.c_str(), c, sc.c_str())};
}

Outcome unit_anchors() {
    const std::vector<double> y{1, 2, 3};
    int bad = 0;
    bad += r_squared(y, y) != 1.0;
    bad += r_squared(y, std::vector<double>{2, 2, 2}) != 0.0;
    bad += *alpha_spatial_share(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) != 0.5;
    bad += *alpha_spatial_share(std::vector<double>{1, 2, 3}, std::vector<double>{4, 4, 4}) != 0.0;
    bad += alpha_from_sds(1.0, 3.0) != 0.75;
    bad += alpha_from_sds(0.0, 2.0) != 1.0;
    return {bad == 0, fmt("%d mismatches; study-area R^2 and alpha not reproducible without the original data", bad)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int sh(const std::string& cmd) {
    const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
    const auto dir = fs::temp_directory_path() / "crashcar_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = std::string("\"") + CRASHCAR_CLI + "\"";
    if (sh(cli + " simulate --lattice 8 --seed 4 --out-dir " + (dir / "sim").string()) != 0)
        return {false, "simulate failed"};
    const std::string base = cli + " fit --data " + (dir / "sim" / "data.csv").string() + " --weights " +
                             (dir / "sim" / "weights.txt").string() +
                             " --chains 3 --burnin 1000 --iters 2000 --seed 42 --traces --out ";
    const std::string runs[] = {base + (dir / "a.json").string() + " --threads 1",
                                base + (dir / "b.json").string() + " --threads 1",
                                base + (dir / "c.json").string() + " --threads 3",
                                "CRASHCAR_THREADS=2 " + base + (dir / "d.json").string()};
    for (const auto& r : runs) {
        const int code = sh(r);
        if (code != 0 && code != 4) return {false, fmt("fit exited with %d", code)};
    }
    const auto a = slurp(dir / "a.json");
    const bool same = !a.empty() && a == slurp(dir / "b.json") && a == slurp(dir / "c.json") &&
                      a == slurp(dir / "d.json");
    fs::remove_all(dir);
    return {same, fmt("4 runs (threads 1, 1, 3, env 2): %s, %zu bytes", same ? "byte-identical" : "differ", a.size())};
}

}  // namespace

int main() {
    criterion(1, "centrality oracle equivalence", centrality_oracle, 10.0);
    criterion(2, "centralization anchors", centralization_anchors);
    criterion(3, "pattern ordering", pattern_ordering);
    criterion(4, "conjugate-update correctness", conjugate_updates);
    criterion(5, "small-model posterior oracle", small_model_oracle, 60.0);
    criterion(6, "parameter recovery", parameter_recovery, 1800.0);
    criterion(7, "DIC discrimination", dic_discrimination);
    criterion(8, "effect-size transforms", effect_sizes);
    criterion(9, "R^2 and alpha anchors", unit_anchors);
    criterion(10, "determinism", determinism);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
