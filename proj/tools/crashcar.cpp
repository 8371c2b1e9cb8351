// crashcar: command-line front end for the crash-frequency modeling pipeline.
//
//   crashcar centrality --graph net.txt
//   crashcar weights    --topology zones.txt --mode boundary_length --out w.txt
//   crashcar simulate   --lattice 13 --seed 7 --out-dir sim/
//   crashcar fit        --data sim/data.csv --weights sim/weights.txt --out report.json
//   crashcar recover    --reps 20 --lattice 13
//   crashcar compare    car.json theta.json
//
// Exit codes: 0 ok, 2 input error, 3 domain error, 4 not converged,
// 5 numerical divergence.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "crashcar/crashcar.hpp"

namespace fs = std::filesystem;
using namespace crashcar;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << text;
    if (!out) throw ValidationError("write failed: " + path);
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

const std::map<std::string, PathMetric> kMetrics{{"hop_count", PathMetric::HopCount},
                                                 {"edge_length", PathMetric::EdgeLength}};
const std::map<std::string, CentralizationVariant> kVariants{{"unnormalized", CentralizationVariant::Unnormalized},
                                                             {"paper-literal", CentralizationVariant::NormalizedNumerator}};

// --- centrality ------------------------------------------------------------------------

struct CentralityArgs {
    std::string graph;
    PathMetric metric = PathMetric::HopCount;
    CentralizationVariant variant = CentralizationVariant::Unnormalized;
    std::string format = "json";
};

int run_centrality(const CentralityArgs& a) {
    const auto g = read_edge_list_file(a.graph);
    if (g.node_count() < 3) throw DomainError("centralization undefined for fewer than 3 nodes");
    const auto r = analyze_centrality(g, a.metric, a.variant);
    if (a.format == "json") {
        nlohmann::json j;
        j["nodes"] = g.node_count();
        j["edges"] = g.edges().size();
        j["metric"] = a.metric == PathMetric::HopCount ? "hop_count" : "edge_length";
        j["variant"] = a.variant == CentralizationVariant::Unnormalized ? "unnormalized" : "paper-literal";
        j["node_scores"] = r.node_scores;
        j["graph_centralization"] = r.graph_centralization;
        j["pattern"] = std::string(to_string(r.pattern));
        j["disconnected"] = r.disconnected;
        std::cout << dump(j);
    } else {
        std::printf("%-8s %s\n", "node", "betweenness");
        for (std::size_t i = 0; i < r.node_scores.size(); ++i) std::printf("%-8zu %.6f\n", i, r.node_scores[i]);
        std::printf("centralization %.6f\npattern %s\n", r.graph_centralization,
                    std::string(to_string(r.pattern)).c_str());
    }
    if (r.disconnected) std::cerr << "warning: graph is disconnected; pairs without a path contribute 0\n";
    return exit_code::ok;
}

// --- weights ---------------------------------------------------------------------------

struct WeightsArgs {
    std::string topology;
    std::string mode = "adjacency";
    std::string out;
    bool dense = false;
};

int run_weights(const WeightsArgs& a) {
    const auto w = build_weights(read_topology_file(a.topology), *parse_proximity_mode(a.mode));
    std::ostringstream os;
    if (a.dense) {
        for (const auto& row : w.dense()) {
            for (std::size_t j = 0; j < row.size(); ++j) os << (j ? " " : "") << detail::format_double(row[j]);
            os << '\n';
        }
    } else {
        write_weights(os, w);
    }
    if (a.out.empty()) std::cout << os.str();
    else write_text(a.out, os.str());
    const auto comps = connected_components(w);
    std::cerr << "zones " << w.size() << ", components " << comps.count << (comps.has_islands ? ", has islands" : "")
              << '\n';
    return exit_code::ok;
}

// --- simulate --------------------------------------------------------------------------

struct SimulateArgs {
    std::size_t lattice = 13;
    std::string truth;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
};

int run_simulate(const SimulateArgs& a) {
    const auto truth = a.truth.empty() ? reference_truth() : load_truth(a.truth);
    const auto topo = generate_lattice(a.lattice);
    const auto sim = simulate_dataset(topo, truth, {}, a.seed);
    fs::create_directories(a.out_dir);
    const fs::path dir(a.out_dir);
    std::ostringstream data, weights, topology;
    save_dataset(data, sim.records);
    write_weights(weights, build_weights(topo, truth.proximity));
    write_topology(topology, topo);
    write_text((dir / "data.csv").string(), data.str());
    write_text((dir / "weights.txt").string(), weights.str());
    write_text((dir / "topology.txt").string(), topology.str());
    write_text((dir / "truth.json").string(), dump(hidden_truth_json(sim, truth, a.seed)));
    std::cout << "wrote " << sim.records.size() << " zones to " << dir.string() << '\n';
    return exit_code::ok;
}

// --- fit -------------------------------------------------------------------------------

struct FitArgs {
    std::string data;
    std::string weights;
    std::string spec;
    McmcConfig mcmc;
    std::string out;
    bool traces = false;
};

int run_fit(const FitArgs& a) {
    const auto records = load_dataset_file(a.data);
    const ModelSpec spec = a.spec.empty() ? ModelSpec{} : load_model_spec(a.spec);
    const auto w = read_weights_file(a.weights, spec.proximity);
    std::printf("chains=%zu burnin=%zu iters=%zu thin=%zu seed=%llu\n", a.mcmc.chains, a.mcmc.burn_in,
                a.mcmc.iterations, a.mcmc.thin, static_cast<unsigned long long>(a.mcmc.seed));
    const auto rep = fit(records, w, spec, a.mcmc);
    if (!a.out.empty()) write_text(a.out, dump(to_json(rep, a.traces)));
    std::cout << render_table(rep);
    for (const auto& warn : rep.warnings) std::cerr << "warning: " << warn << '\n';
    return rep.converged ? exit_code::ok : exit_code::not_converged;
}

// --- recover ---------------------------------------------------------------------------

struct RecoverArgs {
    std::string truth;
    RecoveryOptions opt;
    std::string out;
};

int run_recover(const RecoverArgs& a) {
    const auto truth = a.truth.empty() ? reference_truth() : load_truth(a.truth);
    const auto s = run_recovery(truth, a.opt);
    const auto j = to_json(s, a.opt.alpha_tolerance);
    if (!a.out.empty()) write_text(a.out, dump(j));
    std::printf("%-26s %8s %8s\n", "coefficient", "truth", "coverage");
    for (std::size_t k = 0; k < s.labels.size(); ++k)
        std::printf("%-26s %8.3f %5zu/%zu\n", s.labels[k].c_str(), s.truth[k], s.covered[k], s.reps());
    std::printf("beta R-hat < %.2f in %zu/%zu replicates\n", a.opt.mcmc.bgr_threshold, s.converged_reps(), s.reps());
    if (s.replicates.front().injected_alpha)
        std::printf("alpha within %.2f of injected in %zu/%zu replicates\n", a.opt.alpha_tolerance,
                    s.alpha_within(a.opt.alpha_tolerance), s.reps());
    return exit_code::ok;
}

// --- compare ---------------------------------------------------------------------------

struct CompareArgs {
    std::vector<std::string> reports;
    std::string format = "json";
};

int run_compare(const CompareArgs& a) {
    std::vector<ComparisonEntry> entries;
    for (const auto& path : a.reports) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open report: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("report " + path + " is not valid JSON: " + e.what());
        }
        entries.push_back(comparison_entry_from_json(fs::path(path).stem().string(), j));
    }
    const auto j = comparison_json(entries);
    if (a.format == "json") {
        std::cout << dump(j);
        return exit_code::ok;
    }
    std::printf("%-20s %10s %8s %10s %7s\n", "model", "Dbar", "pD", "DIC", "R^2");
    for (const auto& m : j.at("models")) {
        const std::string r2 = m.at("r_squared").is_null() ? "-" : detail::fmt3(m.at("r_squared").get<double>());
        std::printf("%-20s %10.2f %8.2f %10.2f %7s\n", m.at("name").get<std::string>().c_str(),
                    m.at("mean_deviance").get<double>(), m.at("p_d").get<double>(), m.at("dic").get<double>(),
                    r2.c_str());
    }
    for (const auto& p : j.at("pairwise"))
        std::printf("%s vs %s: delta %.2f (%s)\n", p.at("better").get<std::string>().c_str(),
                    p.at("worse").get<std::string>().c_str(), p.at("delta").get<double>(),
                    p.at("verdict").get<std::string>().c_str());
    return exit_code::ok;
}

void add_mcmc_options(CLI::App* cmd, McmcConfig& c) {
    cmd->add_option("--chains", c.chains, "Number of chains")->capture_default_str()->check(CLI::Range(2, 64));
    cmd->add_option("--burnin", c.burn_in, "Burn-in (adaptation) iterations per chain")->capture_default_str();
    cmd->add_option("--iters", c.iterations, "Posterior iterations per chain")->capture_default_str();
    cmd->add_option("--thin", c.thin, "Keep every k-th posterior draw")->capture_default_str();
    cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    cmd->add_option("--threads", c.threads, "Worker threads (0: CRASHCAR_THREADS or all cores)")
        ->capture_default_str();
    cmd->add_option("--bgr-threshold", c.bgr_threshold, "R-hat convergence threshold")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial crash-frequency modeling: network centrality, proximity weights, "
                 "Poisson-lognormal CAR fits, simulation and model comparison"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    CentralityArgs ca;
    auto* cen = app.add_subcommand("centrality", "Node betweenness, graph centralization and pattern class");
    cen->add_option("--graph", ca.graph, "Edge-list file")->required()->check(CLI::ExistingFile);
    cen->add_option("--metric", ca.metric, "Shortest-path metric: hop_count | edge_length")
        ->transform(CLI::CheckedTransformer(kMetrics, CLI::ignore_case))
        ->default_str("hop_count");
    cen->add_option("--eq2-variant", ca.variant,
                    "Centralization numerator: unnormalized (star = 1) | paper-literal (normalized scores)")
        ->transform(CLI::CheckedTransformer(kVariants, CLI::ignore_case))
        ->default_str("unnormalized");
    cen->add_option("--format", ca.format, "Output format: json | table")
        ->check(CLI::IsMember({"json", "table"}))
        ->capture_default_str();

    WeightsArgs wa;
    auto* wts = app.add_subcommand("weights", "Build a proximity matrix from a zone topology");
    wts->add_option("--topology", wa.topology, "Zone-topology file")->required()->check(CLI::ExistingFile);
    wts->add_option("--mode", wa.mode, "adjacency | boundary_length | lane_count")
        ->check(CLI::IsMember({"adjacency", "boundary_length", "lane_count"}))
        ->capture_default_str();
    wts->add_option("--out", wa.out, "Output file (default: stdout)");
    wts->add_flag("--dense", wa.dense, "Write the dense matrix instead of upper-triangle triples");

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Simulate a crash dataset on a zone lattice from known parameters");
    sim->add_option("--lattice", sa.lattice, "Lattice side M (M x M zones)")->capture_default_str()->check(
        CLI::Range(2, 1000));
    sim->add_option("--truth", sa.truth, "Truth file (default: built-in reference truth)")->check(CLI::ExistingFile);
    sim->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
    sim->add_option("--out-dir", sa.out_dir, "Directory for data.csv, weights.txt, topology.txt, truth.json")
        ->capture_default_str();

    FitArgs fa;
    auto* fit_cmd = app.add_subcommand("fit", "Fit the Poisson-lognormal CAR model by MCMC");
    fit_cmd->add_option("--data", fa.data, "Zone dataset (CSV)")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--weights", fa.weights, "Weight-matrix file (i j w triples)")->required()->check(
        CLI::ExistingFile);
    fit_cmd->add_option("--spec", fa.spec, "Model specification (JSON); defaults when omitted")->check(
        CLI::ExistingFile);
    add_mcmc_options(fit_cmd, fa.mcmc);
    fit_cmd->add_option("--out", fa.out, "Posterior report (JSON)");
    fit_cmd->add_flag("--traces", fa.traces, "Include per-chain deviance traces in the report");

    RecoverArgs ra;
    ra.opt.mcmc.burn_in = 20000;
    ra.opt.mcmc.iterations = 80000;
    ra.opt.mcmc.thin = 8;
    auto* rec = app.add_subcommand("recover", "Parameter-recovery experiment over replicate simulated datasets");
    rec->add_option("--truth", ra.truth, "Truth file (default: built-in reference truth)")->check(CLI::ExistingFile);
    rec->add_option("--reps", ra.opt.reps, "Replicates")->capture_default_str()->check(CLI::Range(1, 100000));
    rec->add_option("--lattice", ra.opt.lattice, "Lattice side M")->capture_default_str()->check(CLI::Range(2, 1000));
    rec->add_option("--alpha-tolerance", ra.opt.alpha_tolerance, "Allowed |alpha - injected alpha|")
        ->capture_default_str();
    rec->add_option("--out", ra.out, "Recovery summary (JSON)");
    add_mcmc_options(rec, ra.opt.mcmc);

    CompareArgs cpa;
    auto* cmp = app.add_subcommand("compare", "Rank fitted models by DIC with pairwise verdicts");
    cmp->add_option("reports", cpa.reports, "Posterior report files (JSON); names are the file stems")
        ->required()
        ->expected(2, -1)
        ->check(CLI::ExistingFile);
    cmp->add_option("--format", cpa.format, "Output format: json | table")
        ->check(CLI::IsMember({"json", "table"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_code::input_error;
    }

    try {
        if (*cen) return run_centrality(ca);
        if (*wts) return run_weights(wa);
        if (*sim) return run_simulate(sa);
        if (*fit_cmd) return run_fit(fa);
        if (*rec) {
            ra.opt.spec = ModelSpec{};
            return run_recover(ra);
        }
        if (*cmp) return run_compare(cpa);
    } catch (const ValidationError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return exit_code::input_error;
    } catch (const NumericalDivergence& e) {
        std::cerr << "numerical divergence: " << e.what() << '\n';
        return exit_code::divergence;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return exit_code::domain_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return exit_code::ok;
}
