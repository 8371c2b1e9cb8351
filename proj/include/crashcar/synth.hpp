#pragma once

// Synthetic zone lattices, idealized road-network patterns and crash
// datasets drawn from known parameters.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "crashcar/car_model.hpp"
#include "crashcar/error.hpp"
#include "crashcar/graph_centrality.hpp"
#include "crashcar/spatial_weights.hpp"
#include "crashcar/taz_data.hpp"

namespace crashcar {

// --- zone lattice ----------------------------------------------------------------------

struct LatticeOptions {
    double boundary_km = 1.0;
    long lanes = 4;
};

/// M x M zones with rook adjacency; zone id = row * M + col.
inline ZoneTopology generate_lattice(std::size_t m, const LatticeOptions& opt = {}) {
    if (m < 2) throw DomainError("lattice side must be >= 2");
    ZoneTopology t;
    t.zone_count = m * m;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            const std::size_t id = r * m + c;
            if (c + 1 < m) t.pairs.push_back({id, id + 1, opt.boundary_km, opt.lanes});
            if (r + 1 < m) t.pairs.push_back({id, id + m, opt.boundary_km, opt.lanes});
        }
    return t;
}

// --- road-network patterns -----------------------------------------------------------------

namespace detail {

inline std::vector<RoadEdge> lattice_edges(std::size_t rows, std::size_t cols, std::size_t first_id = 0) {
    std::vector<RoadEdge> e;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t id = first_id + r * cols + c;
            if (c + 1 < cols) e.push_back({id, id + 1, std::nullopt});
            if (r + 1 < rows) e.push_back({id, id + cols, std::nullopt});
        }
    return e;
}

/// Drops a fraction of the horizontal (collector) links below the arterial row.
template <class Rng>
std::vector<RoadEdge> break_collectors(const std::vector<RoadEdge>& edges, std::size_t cols, double fraction,
                                       Rng& rng) {
    std::bernoulli_distribution drop(fraction);
    std::vector<RoadEdge> kept;
    for (const auto& e : edges) {
        const bool horizontal = e.v == e.u + 1;
        const bool on_arterial = e.u < cols;
        if (horizontal && !on_arterial && drop(rng)) continue;
        kept.push_back(e);
    }
    return kept;
}

}  // namespace detail

/// Node count is side * side for every pattern, so patterns compare at equal
/// size. Row 0 of the grid-like patterns is the arterial.
///  - Grid: full lattice.
///  - IrregularGrid: lattice with `irregularity` of the collector links removed.
///  - Mixed: upper half an irregular lattice, lower half a random tree hung
///    from its last row.
///  - Lollipops: an arterial trunk with dead-end branches (a tree).
template <class Rng>
RoadGraph generate_pattern_network(PatternClass pattern, std::size_t side, double irregularity, Rng& rng) {
    if (side < 2) throw DomainError("pattern network side must be >= 2");
    if (!(irregularity >= 0.0 && irregularity <= 1.0)) throw DomainError("irregularity must lie in [0, 1]");
    const std::size_t n = side * side;
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<RoadEdge> edges;
        switch (pattern) {
            case PatternClass::Grid:
                edges = detail::lattice_edges(side, side);
                break;
            case PatternClass::IrregularGrid:
                edges = detail::break_collectors(detail::lattice_edges(side, side), side, irregularity, rng);
                break;
            case PatternClass::Mixed: {
                const std::size_t rows = (side + 1) / 2;
                edges = detail::break_collectors(detail::lattice_edges(rows, side), side, irregularity, rng);
                const std::size_t grid_nodes = rows * side;
                const std::size_t last_row = (rows - 1) * side;
                for (std::size_t v = grid_nodes; v < n; ++v) {
                    // Attach to the grid's last row or to an earlier tree node.
                    std::uniform_int_distribution<std::size_t> pick(0, side + (v - grid_nodes) - 1);
                    const std::size_t k = pick(rng);
                    const std::size_t parent = k < side ? last_row + k : grid_nodes + (k - side);
                    edges.push_back({parent, v, std::nullopt});
                }
                break;
            }
            case PatternClass::Lollipops: {
                for (std::size_t v = 0; v + 1 < side; ++v) edges.push_back({v, v + 1, std::nullopt});
                // Branches root on interior trunk nodes and may fork once more.
                std::uniform_real_distribution<double> u(0.0, 1.0);
                std::vector<std::size_t> branch_nodes;
                for (std::size_t v = side; v < n; ++v) {
                    std::size_t parent;
                    if (branch_nodes.empty() || u(rng) < 0.5) {
                        std::uniform_int_distribution<std::size_t> trunk(side > 2 ? 1 : 0, side > 2 ? side - 2 : side - 1);
                        parent = trunk(rng);
                    } else {
                        std::uniform_int_distribution<std::size_t> pick(0, branch_nodes.size() - 1);
                        parent = branch_nodes[pick(rng)];
                    }
                    edges.push_back({parent, v, std::nullopt});
                    branch_nodes.push_back(v);
                }
                break;
            }
            case PatternClass::Unclassifiable:
                throw DomainError("cannot generate an unclassifiable pattern");
        }
        RoadGraph g(n, std::move(edges));
        if (g.is_connected()) return g;
    }
    throw DomainError("could not generate a connected network in 100 attempts");
}

// --- covariates ----------------------------------------------------------------------------

struct MomentTarget {
    double mean = 0.0;
    double sd = 1.0;
};

/// Defaults reproduce the descriptive statistics of the study area's zones.
struct CovariateDistributions {
    MomentTarget area_km2{3.26, 2.4};
    MomentTarget ln_production{9.89, 0.88};
    MomentTarget ln_attraction{9.84, 0.96};
    MomentTarget arterial_length_km{3.13, 2.05};
    MomentTarget access_density{2.08, 1.31};
    MomentTarget signal_density{1.74, 0.75};
    MomentTarget road_density{3.11, 2.13};
    /// Grid, IrregularGrid, Mixed, Lollipops.
    std::array<double, 4> pattern_weights{0.35, 0.30, 0.25, 0.10};
    /// Industrial .. Agricultural.
    std::array<double, 7> land_use_weights{0.20, 0.15, 0.10, 0.10, 0.20, 0.10, 0.15};
};

namespace detail {

/// Gamma with the requested mean and sd (strictly positive draws).
template <class Rng>
double positive_draw(const MomentTarget& t, Rng& rng) {
    const double shape = (t.mean / t.sd) * (t.mean / t.sd);
    std::gamma_distribution<double> g(shape, t.sd * t.sd / t.mean);
    return g(rng);
}

template <class Rng>
double normal_draw(const MomentTarget& t, Rng& rng) {
    std::normal_distribution<double> g(t.mean, t.sd);
    return g(rng);
}

}  // namespace detail

template <class Rng>
std::vector<ZoneRecord> generate_covariates(std::size_t n, const CovariateDistributions& d, Rng& rng) {
    std::discrete_distribution<int> pattern(d.pattern_weights.begin(), d.pattern_weights.end());
    std::discrete_distribution<int> land(d.land_use_weights.begin(), d.land_use_weights.end());
    constexpr std::array<PatternClass, 4> patterns{PatternClass::Grid, PatternClass::IrregularGrid,
                                                   PatternClass::Mixed, PatternClass::Lollipops};
    std::vector<ZoneRecord> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = out[i];
        r.zone_id = "Z" + std::to_string(i);
        r.area_km2 = detail::positive_draw(d.area_km2, rng);
        r.ln_production = detail::normal_draw(d.ln_production, rng);
        r.ln_attraction = detail::normal_draw(d.ln_attraction, rng);
        r.arterial_length_km = detail::positive_draw(d.arterial_length_km, rng);
        r.access_density = detail::positive_draw(d.access_density, rng);
        r.signal_density = detail::positive_draw(d.signal_density, rng);
        r.road_density = detail::positive_draw(d.road_density, rng);
        r.pattern = patterns[static_cast<std::size_t>(pattern(rng))];
        r.land_use = kLandUses[static_cast<std::size_t>(land(rng))];
    }
    return out;
}

// --- ground truth ----------------------------------------------------------------------------

enum class EffectMode { Random, Zero };

struct SimulationTruth {
    /// Coefficients keyed by design-column label; missing labels are 0.
    std::map<std::string, double> beta;
    double sigma_theta2 = 0.01;
    double tau_c = 1.0;
    EffectMode theta_mode = EffectMode::Random;
    EffectMode phi_mode = EffectMode::Random;
    /// When set, the drawn effect is rescaled to this exact empirical sd.
    std::optional<double> theta_sd;
    std::optional<double> phi_sd;
    ProximityMode proximity = ProximityMode::Adjacency;
    std::size_t icar_sweeps = 200;
};

/// Posterior means of the 0-1 adjacency model reported for the study area,
/// used as the ground truth for recovery experiments.
inline SimulationTruth reference_truth() {
    SimulationTruth t;
    t.beta = {{"intercept", 2.361},
              {"ln_production", 0.073},
              {"ln_attraction", -0.086},
              {"arterial_length_km", 0.177},
              {"access_density", 0.107},
              {"signal_density", 0.314},
              {"road_density", -0.027},
              {"pattern_IrregularGrid", 0.443},
              {"pattern_Mixed", 0.537},
              {"pattern_Lollipops", 0.692},
              {"land_use_Commercial", 0.15},
              {"land_use_Educational", 0.024},
              {"land_use_Technical", -0.115},
              {"land_use_Residential", 0.198},
              {"land_use_Greenspace", -0.082},
              {"land_use_Agricultural", 0.019}};
    t.tau_c = 2.525;
    t.sigma_theta2 = 1.0 / 632.2;
    return t;
}

inline nlohmann::json to_json(const SimulationTruth& t) {
    nlohmann::json j;
    j["beta"] = t.beta;
    j["sigma_theta2"] = t.sigma_theta2;
    j["tau_c"] = t.tau_c;
    j["theta_mode"] = t.theta_mode == EffectMode::Random ? "normal" : "zero";
    j["phi_mode"] = t.phi_mode == EffectMode::Random ? "icar" : "zero";
    j["theta_sd"] = t.theta_sd ? nlohmann::json(*t.theta_sd) : nlohmann::json(nullptr);
    j["phi_sd"] = t.phi_sd ? nlohmann::json(*t.phi_sd) : nlohmann::json(nullptr);
    j["proximity_mode"] = std::string(to_string(t.proximity));
    j["icar_sweeps"] = t.icar_sweeps;
    return j;
}

/// Required: beta, sigma_theta2, tau_c, phi_mode. Everything else optional.
inline SimulationTruth truth_from_json(const nlohmann::json& j) {
    SimulationTruth t;
    try {
        for (const char* key : {"beta", "sigma_theta2", "tau_c", "phi_mode"})
            if (!j.contains(key)) throw ValidationError(std::string("truth file missing field '") + key + "'");
        t.beta.clear();
        for (const auto& [k, v] : j.at("beta").items()) t.beta[k] = v.get<double>();
        t.sigma_theta2 = j.at("sigma_theta2").get<double>();
        t.tau_c = j.at("tau_c").get<double>();
        const auto pm = j.at("phi_mode").get<std::string>();
        if (pm == "icar") t.phi_mode = EffectMode::Random;
        else if (pm == "zero") t.phi_mode = EffectMode::Zero;
        else throw ValidationError("phi_mode must be 'icar' or 'zero'");
        if (j.contains("theta_mode")) {
            const auto tm = j.at("theta_mode").get<std::string>();
            if (tm == "normal") t.theta_mode = EffectMode::Random;
            else if (tm == "zero") t.theta_mode = EffectMode::Zero;
            else throw ValidationError("theta_mode must be 'normal' or 'zero'");
        }
        if (j.contains("theta_sd") && !j.at("theta_sd").is_null()) t.theta_sd = j.at("theta_sd").get<double>();
        if (j.contains("phi_sd") && !j.at("phi_sd").is_null()) t.phi_sd = j.at("phi_sd").get<double>();
        if (j.contains("proximity_mode")) {
            auto m = parse_proximity_mode(j.at("proximity_mode").get<std::string>());
            if (!m) throw ValidationError("unknown proximity_mode in truth file");
            t.proximity = *m;
        }
        if (j.contains("icar_sweeps")) t.icar_sweeps = j.at("icar_sweeps").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("truth file: ") + e.what());
    }
    if (!(t.sigma_theta2 > 0.0) || !(t.tau_c > 0.0)) throw ValidationError("truth variances must be > 0");
    if ((t.theta_sd && *t.theta_sd < 0.0) || (t.phi_sd && *t.phi_sd < 0.0))
        throw ValidationError("controlled sds must be >= 0");
    return t;
}

inline SimulationTruth load_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open truth file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("truth file is not valid JSON: ") + e.what());
    }
    return truth_from_json(j);
}

// --- dataset simulation ----------------------------------------------------------------------

struct SimulatedDataset {
    std::vector<ZoneRecord> records;
    std::vector<double> theta;
    std::vector<double> phi;
    std::vector<double> psi;
    double theta_sd = 0.0;  ///< realized empirical sd across zones
    double phi_sd = 0.0;
    std::optional<double> alpha;  ///< injected spatial share
};

/// Gibbs passes over the ICAR full conditionals from a random start, then
/// centering within each component; islands stay at 0.
template <class Rng>
std::vector<double> draw_icar(const ProximityMatrix& w, double tau_c, std::size_t sweeps, Rng& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd phi(static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) phi(static_cast<Eigen::Index>(i)) = w.is_island(i) ? 0.0 : z(rng);
    for (std::size_t s = 0; s < sweeps; ++s)
        for (std::size_t i = 0; i < w.size(); ++i) {
            const auto c = car_conditional(phi, w, tau_c, i);
            if (c.island) continue;
            phi(static_cast<Eigen::Index>(i)) = c.mean + std::sqrt(c.variance) * z(rng);
        }
    center_per_component(phi, connected_components(w));
    return {phi.data(), phi.data() + phi.size()};
}

namespace detail {
inline double empirical_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline void rescale_to_sd(std::vector<double>& v, double target) {
    const double sd = empirical_sd(v);
    if (sd == 0.0) return;
    for (double& x : v) x *= target / sd;
}
}  // namespace detail

/// Draws covariates, effects and crash counts. Identical seeds give identical
/// output.
inline SimulatedDataset simulate_dataset(const ZoneTopology& topology, const SimulationTruth& truth,
                                         const CovariateDistributions& dists, std::uint64_t seed,
                                         const DesignOptions& design_opt = {}) {
    std::mt19937_64 rng(seed);
    const std::size_t n = topology.zone_count;
    SimulatedDataset out;
    out.records = generate_covariates(n, dists, rng);

    const auto design = build_design(out.records, design_opt);
    for (const auto& [label, value] : truth.beta)
        if (std::find(design.labels.begin(), design.labels.end(), label) == design.labels.end())
            throw ValidationError("truth coefficient '" + label + "' is not a design column");
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(design.x.cols());
    for (std::size_t j = 0; j < design.labels.size(); ++j)
        if (auto it = truth.beta.find(design.labels[j]); it != truth.beta.end())
            beta(static_cast<Eigen::Index>(j)) = it->second;

    std::normal_distribution<double> z(0.0, 1.0);
    out.theta.assign(n, 0.0);
    if (truth.theta_mode == EffectMode::Random) {
        const double s = std::sqrt(truth.sigma_theta2);
        for (auto& t : out.theta) t = s * z(rng);
        if (truth.theta_sd) detail::rescale_to_sd(out.theta, *truth.theta_sd);
    }
    out.phi.assign(n, 0.0);
    if (truth.phi_mode == EffectMode::Random) {
        const auto w = build_weights(topology, truth.proximity);
        out.phi = draw_icar(w, truth.tau_c, truth.icar_sweeps, rng);
        if (truth.phi_sd) detail::rescale_to_sd(out.phi, *truth.phi_sd);
    }
    out.theta_sd = detail::empirical_sd(out.theta);
    out.phi_sd = detail::empirical_sd(out.phi);
    if (out.theta_sd + out.phi_sd > 0.0) out.alpha = out.phi_sd / (out.theta_sd + out.phi_sd);

    const Eigen::VectorXd eta = design.x * beta + design.offset;
    out.psi.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double psi = eta(static_cast<Eigen::Index>(i)) + out.theta[i] + out.phi[i];
        if (!(psi <= kPsiClamp))
            throw DomainError("truth rejected: expected crash count overflows in zone " + std::to_string(i));
        out.psi[i] = psi;
        std::poisson_distribution<long> pois(std::exp(psi));
        out.records[i].crash_count = pois(rng);
    }
    return out;
}

inline nlohmann::json hidden_truth_json(const SimulatedDataset& d, const SimulationTruth& t, std::uint64_t seed) {
    nlohmann::json j;
    j["truth"] = to_json(t);
    j["seed"] = seed;
    j["theta"] = d.theta;
    j["phi"] = d.phi;
    j["realized_theta_sd"] = d.theta_sd;
    j["realized_phi_sd"] = d.phi_sd;
    j["injected_alpha"] = d.alpha ? nlohmann::json(*d.alpha) : nlohmann::json(nullptr);
    return j;
}

}  // namespace crashcar
