#pragma once

// Zone proximity matrices: 0-1 adjacency, shared boundary length, and total
// lanes of connecting arterials.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "crashcar/error.hpp"

namespace crashcar {

enum class ProximityMode { Adjacency, BoundaryLength, LaneCount };

inline std::string_view to_string(ProximityMode m) {
    switch (m) {
        case ProximityMode::Adjacency: return "adjacency";
        case ProximityMode::BoundaryLength: return "boundary_length";
        case ProximityMode::LaneCount: return "lane_count";
    }
    return "adjacency";
}

inline std::optional<ProximityMode> parse_proximity_mode(std::string_view s) {
    if (s == "adjacency") return ProximityMode::Adjacency;
    if (s == "boundary_length") return ProximityMode::BoundaryLength;
    if (s == "lane_count") return ProximityMode::LaneCount;
    return std::nullopt;
}

struct NeighborPair {
    std::size_t i = 0;
    std::size_t j = 0;
    double boundary_km = 0.0;
    long lanes = 0;
};

struct ZoneTopology {
    std::size_t zone_count = 0;
    std::vector<NeighborPair> pairs;
};

/// Rejects self pairs, out-of-range ids, nonpositive boundaries, negative
/// lanes, and repeated pairs whose attributes disagree. Exact repeats
/// (either orientation) are merged.
inline ZoneTopology validate_topology(const ZoneTopology& topo) {
    if (topo.zone_count == 0) throw ValidationError("topology must have at least one zone");
    std::map<std::pair<std::size_t, std::size_t>, NeighborPair> unique;
    for (const auto& p : topo.pairs) {
        const std::string tag = "pair (" + std::to_string(p.i) + ", " + std::to_string(p.j) + ")";
        if (p.i >= topo.zone_count || p.j >= topo.zone_count)
            throw ValidationError(tag + ": zone id out of range");
        if (p.i == p.j) throw ValidationError(tag + ": zone cannot neighbor itself");
        if (!(p.boundary_km > 0.0) || !std::isfinite(p.boundary_km))
            throw ValidationError(tag + ": boundary length must be > 0 for a listed pair");
        if (p.lanes < 0) throw ValidationError(tag + ": lane count must be nonnegative");
        NeighborPair canon = p;
        if (canon.i > canon.j) std::swap(canon.i, canon.j);
        auto [it, inserted] = unique.emplace(std::pair{canon.i, canon.j}, canon);
        if (!inserted && (it->second.boundary_km != canon.boundary_km || it->second.lanes != canon.lanes))
            throw ValidationError(tag + ": listed twice with conflicting attributes");
    }
    ZoneTopology out{topo.zone_count, {}};
    out.pairs.reserve(unique.size());
    for (const auto& [k, v] : unique) out.pairs.push_back(v);
    return out;
}

/// Symmetric nonnegative weights with zero diagonal, stored as neighbor lists.
class ProximityMatrix {
public:
    struct Entry {
        std::size_t j;
        double w;
    };

    ProximityMatrix() = default;

    /// Builds from upper- or lower-triangle triples; each unordered pair at most once.
    ProximityMatrix(std::size_t n, const std::vector<std::tuple<std::size_t, std::size_t, double>>& triples,
                    ProximityMode mode = ProximityMode::Adjacency)
        : mode_(mode), rows_(n) {
        std::map<std::pair<std::size_t, std::size_t>, double> seen;
        for (const auto& [i, j, w] : triples) {
            if (i >= n || j >= n) throw ValidationError("weight entry references zone out of range");
            if (i == j) throw ValidationError("weight matrix diagonal must be zero");
            if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("weights must be finite and nonnegative");
            auto key = std::minmax(i, j);
            if (!seen.emplace(key, w).second) throw ValidationError("weight pair listed twice");
            if (w == 0.0) continue;
            rows_[i].push_back({j, w});
            rows_[j].push_back({i, w});
        }
        for (auto& r : rows_)
            std::sort(r.begin(), r.end(), [](const Entry& a, const Entry& b) { return a.j < b.j; });
        finalize();
    }

    ProximityMode mode() const { return mode_; }
    std::size_t size() const { return rows_.size(); }
    const std::vector<Entry>& row(std::size_t i) const { return rows_[i]; }
    const std::vector<double>& row_sums() const { return row_sums_; }
    double row_sum(std::size_t i) const { return row_sums_[i]; }

    bool is_island(std::size_t i) const { return row_sums_[i] == 0.0; }
    bool has_islands() const {
        return std::any_of(row_sums_.begin(), row_sums_.end(), [](double s) { return s == 0.0; });
    }

    double at(std::size_t i, std::size_t j) const {
        for (const auto& e : rows_[i])
            if (e.j == j) return e.w;
        return 0.0;
    }

    std::vector<std::vector<double>> dense() const {
        std::vector<std::vector<double>> m(size(), std::vector<double>(size(), 0.0));
        for (std::size_t i = 0; i < size(); ++i)
            for (const auto& e : rows_[i]) m[i][e.j] = e.w;
        return m;
    }

    /// Upper-triangle coordinate triples (i < j), row-major.
    std::vector<std::tuple<std::size_t, std::size_t, double>> triples() const {
        std::vector<std::tuple<std::size_t, std::size_t, double>> t;
        for (std::size_t i = 0; i < size(); ++i)
            for (const auto& e : rows_[i])
                if (e.j > i) t.emplace_back(i, e.j, e.w);
        return t;
    }

    ProximityMatrix scaled(double c) const {
        ProximityMatrix m = *this;
        for (auto& r : m.rows_)
            for (auto& e : r) e.w *= c;
        m.finalize();
        return m;
    }

private:
    void finalize() {
        row_sums_.assign(rows_.size(), 0.0);
        for (std::size_t i = 0; i < rows_.size(); ++i)
            for (const auto& e : rows_[i]) row_sums_[i] += e.w;
    }

    ProximityMode mode_ = ProximityMode::Adjacency;
    std::vector<std::vector<Entry>> rows_;
    std::vector<double> row_sums_;
};

inline ProximityMatrix build_weights(const ZoneTopology& topology, ProximityMode mode) {
    const auto topo = validate_topology(topology);
    std::vector<std::tuple<std::size_t, std::size_t, double>> t;
    t.reserve(topo.pairs.size());
    for (const auto& p : topo.pairs) {
        double w = 0.0;
        switch (mode) {
            case ProximityMode::Adjacency: w = 1.0; break;
            case ProximityMode::BoundaryLength: w = p.boundary_km; break;
            case ProximityMode::LaneCount: w = static_cast<double>(p.lanes); break;
        }
        t.emplace_back(p.i, p.j, w);
    }
    return ProximityMatrix(topo.zone_count, t, mode);
}

inline std::vector<double> row_sums(const ProximityMatrix& m) { return m.row_sums(); }

struct Components {
    std::vector<std::size_t> label;  ///< component index per zone, numbered by first zone
    std::size_t count = 0;           ///< G, islands included as singleton components
    std::vector<std::size_t> sizes;
    bool has_islands = false;
};

inline Components connected_components(const ProximityMatrix& m) {
    constexpr auto unset = static_cast<std::size_t>(-1);
    Components c;
    c.label.assign(m.size(), unset);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < m.size(); ++s) {
        if (c.label[s] != unset) continue;
        const std::size_t id = c.count++;
        c.sizes.push_back(0);
        c.label[s] = id;
        stack.push_back(s);
        while (!stack.empty()) {
            auto v = stack.back();
            stack.pop_back();
            ++c.sizes[id];
            for (const auto& e : m.row(v)) {
                if (c.label[e.j] == unset) {
                    c.label[e.j] = id;
                    stack.push_back(e.j);
                }
            }
        }
    }
    c.has_islands = m.has_islands();
    return c;
}

// --- file formats -----------------------------------------------------------

namespace detail {
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string strip_comment(std::string line) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    return line;
}
}  // namespace detail

/// Header "zones N", then "i j boundary_km lanes" per line.
inline ZoneTopology read_topology(std::istream& in) {
    ZoneTopology t;
    bool header = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(detail::strip_comment(line));
        std::string first;
        if (!(ls >> first)) continue;
        auto fail = [&](const std::string& why) {
            throw ValidationError("topology line " + std::to_string(lineno) + ": " + why);
        };
        if (!header) {
            long long n = 0;
            if (first != "zones" || !(ls >> n) || n <= 0) fail("expected header 'zones N'");
            t.zone_count = static_cast<std::size_t>(n);
            header = true;
            continue;
        }
        long long i = -1, j = -1, lanes = -1;
        double b = 0.0;
        std::istringstream fs(first);
        if (!(fs >> i) || !(ls >> j >> b >> lanes)) fail("expected 'i j boundary_km lanes'");
        if (i < 0 || j < 0) fail("zone ids must be nonnegative");
        std::string extra;
        if (ls >> extra) fail("unexpected trailing field '" + extra + "'");
        t.pairs.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), b, static_cast<long>(lanes)});
    }
    if (!header) throw ValidationError("topology file missing 'zones N' header");
    return validate_topology(t);
}

inline void write_topology(std::ostream& out, const ZoneTopology& t) {
    out << "zones " << t.zone_count << '\n';
    for (const auto& p : t.pairs)
        out << p.i << ' ' << p.j << ' ' << detail::format_double(p.boundary_km) << ' ' << p.lanes << '\n';
}

/// Weight file: optional "zones N" header, then "i j w" upper-triangle lines.
/// Without a header the zone count is max id + 1 (trailing islands need the header).
inline ProximityMatrix read_weights(std::istream& in, ProximityMode mode = ProximityMode::Adjacency) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> t;
    std::optional<std::size_t> declared;
    std::size_t max_id = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(detail::strip_comment(line));
        std::string first;
        if (!(ls >> first)) continue;
        auto fail = [&](const std::string& why) {
            throw ValidationError("weights line " + std::to_string(lineno) + ": " + why);
        };
        if (first == "zones") {
            long long n = 0;
            if (!(ls >> n) || n <= 0) fail("expected 'zones N'");
            declared = static_cast<std::size_t>(n);
            continue;
        }
        long long i = -1, j = -1;
        double w = 0.0;
        std::istringstream fs(first);
        if (!(fs >> i) || !(ls >> j >> w)) fail("expected 'i j w'");
        if (i < 0 || j < 0) fail("zone ids must be nonnegative");
        t.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j), w);
        max_id = std::max({max_id, static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
    }
    const std::size_t n = declared ? *declared : (t.empty() ? 0 : max_id + 1);
    if (n == 0) throw ValidationError("weights file declares no zones");
    return ProximityMatrix(n, t, mode);
}

inline void write_weights(std::ostream& out, const ProximityMatrix& m) {
    out << "zones " << m.size() << '\n';
    for (const auto& [i, j, w] : m.triples()) out << i << ' ' << j << ' ' << detail::format_double(w) << '\n';
}

inline ProximityMatrix read_weights_file(const std::string& path, ProximityMode mode = ProximityMode::Adjacency) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open weights file: " + path);
    return read_weights(in, mode);
}

inline ZoneTopology read_topology_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open topology file: " + path);
    return read_topology(in);
}

}  // namespace crashcar
