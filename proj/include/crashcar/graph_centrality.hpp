#pragma once

// Node betweenness, Freeman betweenness centralization and the four-way
// road-network pattern classification for zonal road graphs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <stack>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crashcar/error.hpp"

namespace crashcar {

enum class PatternClass { Grid, IrregularGrid, Mixed, Lollipops, Unclassifiable };

inline std::string_view to_string(PatternClass p) {
    switch (p) {
        case PatternClass::Grid: return "Grid";
        case PatternClass::IrregularGrid: return "IrregularGrid";
        case PatternClass::Mixed: return "Mixed";
        case PatternClass::Lollipops: return "Lollipops";
        case PatternClass::Unclassifiable: return "Unclassifiable";
    }
    return "Unclassifiable";
}

inline std::optional<PatternClass> parse_pattern(std::string_view s) {
    if (s == "Grid") return PatternClass::Grid;
    if (s == "IrregularGrid") return PatternClass::IrregularGrid;
    if (s == "Mixed") return PatternClass::Mixed;
    if (s == "Lollipops") return PatternClass::Lollipops;
    return std::nullopt;
}

struct RoadEdge {
    std::size_t u = 0;
    std::size_t v = 0;
    std::optional<double> length_km;
};

/// Undirected road graph of one zone. Nodes are junctions, edges are links.
class RoadGraph {
public:
    RoadGraph() = default;

    /// Throws ValidationError naming the first offending edge.
    RoadGraph(std::size_t node_count, std::vector<RoadEdge> edges)
        : node_count_(node_count), edges_(std::move(edges)) {
        validate();
        adjacency_.assign(node_count_, {});
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            adjacency_[edges_[e].u].push_back({edges_[e].v, e});
            adjacency_[edges_[e].v].push_back({edges_[e].u, e});
        }
    }

    struct Arc {
        std::size_t to;
        std::size_t edge;
    };

    std::size_t node_count() const { return node_count_; }
    const std::vector<RoadEdge>& edges() const { return edges_; }
    const std::vector<Arc>& neighbors(std::size_t v) const { return adjacency_[v]; }

    double edge_length(std::size_t e) const { return edges_[e].length_km.value_or(1.0); }

    bool has_all_lengths() const {
        return std::all_of(edges_.begin(), edges_.end(),
                           [](const RoadEdge& e) { return e.length_km.has_value(); });
    }

    bool is_connected() const {
        if (node_count_ == 0) return true;
        std::vector<char> seen(node_count_, 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        std::size_t reached = 1;
        while (!stack.empty()) {
            auto v = stack.back();
            stack.pop_back();
            for (const auto& a : adjacency_[v]) {
                if (!seen[a.to]) {
                    seen[a.to] = 1;
                    ++reached;
                    stack.push_back(a.to);
                }
            }
        }
        return reached == node_count_;
    }

private:
    void validate() const {
        if (node_count_ == 0) throw ValidationError("road graph must have at least one node");
        std::set<std::pair<std::size_t, std::size_t>> seen;
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            const auto& ed = edges_[e];
            auto where = [&] {
                std::ostringstream os;
                os << "edge " << e << " (" << ed.u << ", " << ed.v << ")";
                return os.str();
            };
            if (ed.u >= node_count_ || ed.v >= node_count_)
                throw ValidationError(where() + ": node id out of range [0, " +
                                      std::to_string(node_count_) + ")");
            if (ed.u == ed.v) throw ValidationError(where() + ": self-loop");
            if (ed.length_km && !(*ed.length_km > 0.0 && std::isfinite(*ed.length_km)))
                throw ValidationError(where() + ": length must be strictly positive");
            auto key = std::minmax(ed.u, ed.v);
            if (!seen.insert(key).second) throw ValidationError(where() + ": duplicate edge");
        }
    }

    std::size_t node_count_ = 0;
    std::vector<RoadEdge> edges_;
    std::vector<std::vector<Arc>> adjacency_;
};

enum class PathMetric { HopCount, EdgeLength };

enum class CentralizationVariant {
    Unnormalized,        ///< raw ordered-pair betweenness; the star graph scores exactly 1
    NormalizedNumerator  ///< normalized node scores in the numerator
};

struct BetweennessResult {
    std::vector<double> raw;         ///< sum over ordered pairs of n_jk(i) / n_jk
    std::vector<double> normalized;  ///< raw / ((N-1)(N-2)), zero when N < 3
    bool disconnected = false;
};

/// Brandes accumulation over every source; undirected edges are traversed both
/// ways so the sums run over ordered pairs.
inline BetweennessResult betweenness(const RoadGraph& g, PathMetric metric = PathMetric::HopCount) {
    const std::size_t n = g.node_count();
    BetweennessResult out;
    out.raw.assign(n, 0.0);
    out.normalized.assign(n, 0.0);
    out.disconnected = !g.is_connected();
    if (n < 3) return out;

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n);
    std::vector<double> sigma(n);
    std::vector<double> delta(n);
    std::vector<std::vector<std::size_t>> preds(n);
    std::vector<std::size_t> order;
    order.reserve(n);

    auto same = [](double a, double b) {
        return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
    };

    for (std::size_t s = 0; s < n; ++s) {
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        for (auto& p : preds) p.clear();
        order.clear();
        dist[s] = 0.0;
        sigma[s] = 1.0;

        if (metric == PathMetric::HopCount) {
            std::queue<std::size_t> q;
            q.push(s);
            while (!q.empty()) {
                auto v = q.front();
                q.pop();
                order.push_back(v);
                for (const auto& a : g.neighbors(v)) {
                    if (dist[a.to] == inf) {
                        dist[a.to] = dist[v] + 1.0;
                        q.push(a.to);
                    }
                    if (dist[a.to] == dist[v] + 1.0) {
                        sigma[a.to] += sigma[v];
                        preds[a.to].push_back(v);
                    }
                }
            }
        } else {
            using Item = std::pair<double, std::size_t>;
            std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
            std::vector<char> done(n, 0);
            pq.push({0.0, s});
            while (!pq.empty()) {
                auto [d, v] = pq.top();
                pq.pop();
                if (done[v]) continue;
                done[v] = 1;
                order.push_back(v);
                for (const auto& a : g.neighbors(v)) {
                    if (done[a.to]) continue;
                    const double nd = d + g.edge_length(a.edge);
                    if (dist[a.to] == inf || (nd < dist[a.to] && !same(nd, dist[a.to]))) {
                        dist[a.to] = nd;
                        sigma[a.to] = sigma[v];
                        preds[a.to].assign(1, v);
                        pq.push({nd, a.to});
                    } else if (same(nd, dist[a.to])) {
                        sigma[a.to] += sigma[v];
                        preds[a.to].push_back(v);
                    }
                }
            }
        }

        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const auto w = *it;
            for (auto v : preds[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            if (w != s) out.raw[w] += delta[w];
        }
    }

    const double scale = static_cast<double>((n - 1) * (n - 2));
    for (std::size_t i = 0; i < n; ++i) out.normalized[i] = out.raw[i] / scale;
    return out;
}

inline std::vector<double> node_betweenness(const RoadGraph& g, PathMetric metric = PathMetric::HopCount) {
    return betweenness(g, metric).normalized;
}

/// (N-1)^2 (N-2), written as the cubic used for the star-graph maximum.
constexpr double centralization_denominator(std::size_t n) {
    const double x = static_cast<double>(n);
    return x * x * x - 4.0 * x * x + 5.0 * x - 2.0;
}

inline double centralization_from_scores(const std::vector<double>& scores) {
    const std::size_t n = scores.size();
    if (n < 3) throw DomainError("centralization undefined for fewer than 3 nodes");
    const double top = *std::max_element(scores.begin(), scores.end());
    double num = 0.0;
    for (double b : scores) num += top - b;
    return num / centralization_denominator(n);
}

inline double graph_centralization(const RoadGraph& g, PathMetric metric = PathMetric::HopCount,
                                   CentralizationVariant variant = CentralizationVariant::Unnormalized) {
    if (g.node_count() < 3) throw DomainError("centralization undefined for fewer than 3 nodes");
    auto b = betweenness(g, metric);
    return centralization_from_scores(variant == CentralizationVariant::Unnormalized ? b.raw : b.normalized);
}

/// Contiguous half-open bands over [0, 1] with cut points 0.15, 0.30 and 0.40.
inline PatternClass classify_pattern(double centralization) {
    if (!(centralization >= 0.0 && centralization <= 1.0))
        throw DomainError("centralization must lie in [0, 1]");
    if (centralization < 0.15) return PatternClass::Grid;
    if (centralization < 0.30) return PatternClass::IrregularGrid;
    if (centralization < 0.40) return PatternClass::Mixed;
    return PatternClass::Lollipops;
}

struct CentralityResult {
    std::vector<double> node_scores;
    double graph_centralization = 0.0;
    PatternClass pattern = PatternClass::Unclassifiable;
    bool disconnected = false;
};

inline CentralityResult analyze_centrality(const RoadGraph& g, PathMetric metric = PathMetric::HopCount,
                                           CentralizationVariant variant = CentralizationVariant::Unnormalized) {
    CentralityResult r;
    auto b = betweenness(g, metric);
    r.node_scores = b.normalized;
    r.disconnected = b.disconnected;
    if (g.node_count() >= 3) {
        r.graph_centralization =
            centralization_from_scores(variant == CentralizationVariant::Unnormalized ? b.raw : b.normalized);
        // Rounding can leave values a few ulps outside [0, 1].
        r.graph_centralization = std::clamp(r.graph_centralization, 0.0, 1.0);
        r.pattern = classify_pattern(r.graph_centralization);
    }
    return r;
}

inline std::vector<std::vector<int>> adjacency_matrix(const RoadGraph& g) {
    std::vector<std::vector<int>> m(g.node_count(), std::vector<int>(g.node_count(), 0));
    for (const auto& e : g.edges()) m[e.u][e.v] = m[e.v][e.u] = 1;
    return m;
}

// Edge-list text format: "u v [length_km]" per line, '#' starts a comment,
// optional "nodes N" header; otherwise N = max id + 1.
inline RoadGraph read_edge_list(std::istream& in) {
    std::vector<RoadEdge> edges;
    std::optional<std::size_t> declared;
    std::size_t max_id = 0;
    bool any = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        auto fail = [&](const std::string& why) {
            throw ValidationError("line " + std::to_string(lineno) + ": " + why);
        };
        if (first == "nodes") {
            long long n = -1;
            if (!(ls >> n) || n <= 0) fail("expected 'nodes N' with N > 0");
            declared = static_cast<std::size_t>(n);
            continue;
        }
        long long u = -1, v = -1;
        {
            std::istringstream fs(first);
            if (!(fs >> u) || !fs.eof()) fail("node id is not an integer");
        }
        if (!(ls >> v)) fail("expected 'u v [length_km]'");
        if (u < 0 || v < 0) fail("node ids must be nonnegative");
        RoadEdge e{static_cast<std::size_t>(u), static_cast<std::size_t>(v), std::nullopt};
        double len = 0.0;
        if (ls >> len) e.length_km = len;
        else if (!ls.eof()) fail("length is not a number");
        std::string extra;
        if (ls.clear(), ls >> extra) fail("unexpected trailing field '" + extra + "'");
        max_id = std::max({max_id, e.u, e.v});
        any = true;
        edges.push_back(e);
    }
    const std::size_t n = declared ? *declared : (any ? max_id + 1 : 0);
    return RoadGraph(n, std::move(edges));
}

inline RoadGraph read_edge_list_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open graph file: " + path);
    return read_edge_list(in);
}

inline void write_edge_list(std::ostream& out, const RoadGraph& g) {
    out << "nodes " << g.node_count() << '\n';
    for (const auto& e : g.edges()) {
        out << e.u << ' ' << e.v;
        if (e.length_km) out << ' ' << *e.length_km;
        out << '\n';
    }
}

}  // namespace crashcar
