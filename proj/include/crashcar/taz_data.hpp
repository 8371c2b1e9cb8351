#pragma once

// Zone-level analysis dataset and the dummy-coded design matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
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
#include <vector>

#include "crashcar/error.hpp"
#include "crashcar/graph_centrality.hpp"

namespace crashcar {

enum class LandUse { Industrial, Commercial, Educational, Technical, Residential, Greenspace, Agricultural };

inline constexpr std::array<LandUse, 7> kLandUses{LandUse::Industrial,  LandUse::Commercial, LandUse::Educational,
                                                  LandUse::Technical,   LandUse::Residential, LandUse::Greenspace,
                                                  LandUse::Agricultural};

inline std::string_view to_string(LandUse l) {
    switch (l) {
        case LandUse::Industrial: return "Industrial";
        case LandUse::Commercial: return "Commercial";
        case LandUse::Educational: return "Educational";
        case LandUse::Technical: return "Technical";
        case LandUse::Residential: return "Residential";
        case LandUse::Greenspace: return "Greenspace";
        case LandUse::Agricultural: return "Agricultural";
    }
    return "Industrial";
}

inline std::optional<LandUse> parse_land_use(std::string_view s) {
    for (auto l : kLandUses)
        if (s == to_string(l)) return l;
    return std::nullopt;
}

/// One traffic analysis zone. crash_count counts crashes on the arterials
/// inside the zone, not all crashes in the zone.
struct ZoneRecord {
    std::string zone_id;
    double area_km2 = 1.0;
    double ln_production = 0.0;
    double ln_attraction = 0.0;
    double arterial_length_km = 1.0;
    double access_density = 0.0;  ///< accesses per km of arterial
    double signal_density = 0.0;  ///< signals per km of arterial (a.k.a. signal spacing)
    double road_density = 0.0;    ///< km of road per km^2
    PatternClass pattern = PatternClass::Grid;
    LandUse land_use = LandUse::Industrial;
    long crash_count = 0;

    bool operator==(const ZoneRecord&) const = default;
};

enum class Covariate {
    AreaKm2,
    LnProduction,
    LnAttraction,
    ArterialLength,
    AccessDensity,
    SignalDensity,
    RoadDensity
};

inline constexpr std::array<Covariate, 7> kAllCovariates{Covariate::AreaKm2,        Covariate::LnProduction,
                                                         Covariate::LnAttraction,   Covariate::ArterialLength,
                                                         Covariate::AccessDensity,  Covariate::SignalDensity,
                                                         Covariate::RoadDensity};

/// Continuous covariates entering the crash model by default (area is descriptive only).
inline const std::vector<Covariate>& default_model_covariates() {
    static const std::vector<Covariate> v{Covariate::LnProduction,  Covariate::LnAttraction,
                                          Covariate::ArterialLength, Covariate::AccessDensity,
                                          Covariate::SignalDensity,  Covariate::RoadDensity};
    return v;
}

inline std::string_view to_string(Covariate c) {
    switch (c) {
        case Covariate::AreaKm2: return "area_km2";
        case Covariate::LnProduction: return "ln_production";
        case Covariate::LnAttraction: return "ln_attraction";
        case Covariate::ArterialLength: return "arterial_length_km";
        case Covariate::AccessDensity: return "access_density";
        case Covariate::SignalDensity: return "signal_density";
        case Covariate::RoadDensity: return "road_density";
    }
    return "";
}

inline std::optional<Covariate> parse_covariate(std::string_view s) {
    if (s == "signal_spacing") return Covariate::SignalDensity;
    for (auto c : kAllCovariates)
        if (s == to_string(c)) return c;
    return std::nullopt;
}

inline double covariate_value(const ZoneRecord& r, Covariate c) {
    switch (c) {
        case Covariate::AreaKm2: return r.area_km2;
        case Covariate::LnProduction: return r.ln_production;
        case Covariate::LnAttraction: return r.ln_attraction;
        case Covariate::ArterialLength: return r.arterial_length_km;
        case Covariate::AccessDensity: return r.access_density;
        case Covariate::SignalDensity: return r.signal_density;
        case Covariate::RoadDensity: return r.road_density;
    }
    return 0.0;
}

inline std::string validate_record(const ZoneRecord& r) {
    for (auto c : kAllCovariates)
        if (!std::isfinite(covariate_value(r, c))) return std::string(to_string(c)) + " is not finite";
    if (!(r.area_km2 > 0.0)) return "area_km2 must be > 0";
    if (!(r.arterial_length_km > 0.0)) return "arterial_length_km must be > 0";
    if (r.access_density < 0.0) return "access_density must be >= 0";
    if (r.signal_density < 0.0) return "signal_density must be >= 0";
    if (r.road_density < 0.0) return "road_density must be >= 0";
    if (r.crash_count < 0) return "crash_count must be >= 0";
    return {};
}

// --- dataset file -------------------------------------------------------------

inline constexpr std::array<std::string_view, 11> kDatasetColumns{
    "zone_id",        "area_km2",       "ln_production", "ln_attraction", "arterial_length_km", "access_density",
    "signal_density", "road_density",   "pattern",       "land_use",      "crash_count"};

struct RowError {
    std::size_t line = 0;
    std::string message;
};

struct LoadResult {
    std::vector<ZoneRecord> records;
    std::vector<RowError> errors;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        auto b = f.find_first_not_of(" \t");
        auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
    }
    return out;
}

inline std::optional<double> parse_double(const std::string& s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<long> parse_long(const std::string& s) {
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

/// Reads the comma-delimited dataset. Missing columns throw; bad rows are
/// skipped and reported in LoadResult::errors.
inline LoadResult load_dataset(std::istream& in) {
    LoadResult out;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        header = detail::split_csv(line);
        break;
    }
    if (header.empty()) throw ValidationError("dataset is empty");
    std::map<std::string_view, std::size_t> col;
    for (auto name : kDatasetColumns) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ValidationError("dataset missing column '" + std::string(name) + "'");
        col[name] = static_cast<std::size_t>(it - header.begin());
    }

    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto f = detail::split_csv(line);
        auto reject = [&](std::string msg) { out.errors.push_back({lineno, std::move(msg)}); };
        if (f.size() != header.size()) {
            reject("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
            continue;
        }
        ZoneRecord r;
        r.zone_id = f[col["zone_id"]];
        bool ok = true;
        auto num = [&](std::string_view name, double& dst) {
            if (!ok) return;
            auto v = detail::parse_double(f[col[name]]);
            if (!v) {
                reject(std::string(name) + ": non-numeric value '" + f[col[name]] + "'");
                ok = false;
            } else {
                dst = *v;
            }
        };
        num("area_km2", r.area_km2);
        num("ln_production", r.ln_production);
        num("ln_attraction", r.ln_attraction);
        num("arterial_length_km", r.arterial_length_km);
        num("access_density", r.access_density);
        num("signal_density", r.signal_density);
        num("road_density", r.road_density);
        if (!ok) continue;
        if (auto p = parse_pattern(f[col["pattern"]])) {
            r.pattern = *p;
        } else if (f[col["pattern"]].empty() || f[col["pattern"]] == "Unclassifiable") {
            r.pattern = PatternClass::Unclassifiable;
        } else {
            reject("pattern: unknown token '" + f[col["pattern"]] + "'");
            continue;
        }
        if (auto l = parse_land_use(f[col["land_use"]])) {
            r.land_use = *l;
        } else {
            reject("land_use: unknown token '" + f[col["land_use"]] + "'");
            continue;
        }
        auto y = detail::parse_long(f[col["crash_count"]]);
        if (!y) {
            reject("crash_count: not an integer '" + f[col["crash_count"]] + "'");
            continue;
        }
        r.crash_count = *y;
        if (auto why = validate_record(r); !why.empty()) {
            reject(why);
            continue;
        }
        out.records.push_back(std::move(r));
    }
    return out;
}

/// Throws ValidationError listing every rejected row.
inline std::vector<ZoneRecord> load_dataset_strict(std::istream& in) {
    auto res = load_dataset(in);
    if (!res.errors.empty()) {
        std::ostringstream os;
        os << res.errors.size() << " invalid row(s):";
        for (const auto& e : res.errors) os << "\n  line " << e.line << ": " << e.message;
        throw ValidationError(os.str());
    }
    return std::move(res.records);
}

inline std::vector<ZoneRecord> load_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset: " + path);
    return load_dataset_strict(in);
}

/// Numbers use the shortest round-tripping representation.
inline void save_dataset(std::ostream& out, const std::vector<ZoneRecord>& records) {
    for (std::size_t c = 0; c < kDatasetColumns.size(); ++c) out << (c ? "," : "") << kDatasetColumns[c];
    out << '\n';
    using detail::shortest;
    for (const auto& r : records) {
        out << r.zone_id << ',' << shortest(r.area_km2) << ',' << shortest(r.ln_production) << ','
            << shortest(r.ln_attraction) << ',' << shortest(r.arterial_length_km) << ','
            << shortest(r.access_density) << ',' << shortest(r.signal_density) << ',' << shortest(r.road_density)
            << ',' << to_string(r.pattern) << ',' << to_string(r.land_use) << ',' << r.crash_count << '\n';
    }
}

/// Explicit pattern wins over one computed from the zone's road graph; a
/// disagreement is reported through the returned warning.
inline std::optional<std::string> resolve_pattern(ZoneRecord& r, const RoadGraph& graph) {
    const auto computed = analyze_centrality(graph).pattern;
    if (r.pattern == PatternClass::Unclassifiable) {
        r.pattern = computed;
        return std::nullopt;
    }
    if (computed != r.pattern)
        return "zone " + r.zone_id + ": explicit pattern " + std::string(to_string(r.pattern)) +
               " differs from road-graph pattern " + std::string(to_string(computed));
    return std::nullopt;
}

// --- design matrix --------------------------------------------------------------

struct DesignOptions {
    std::vector<Covariate> covariates = default_model_covariates();
    bool include_pattern = true;
    bool include_land_use = true;
    bool standardize = false;
    /// Experimental: ln(arterial_length_km) enters as a fixed offset.
    bool offset_log_arterial_length = false;
};

struct DesignMatrix {
    Eigen::MatrixXd x;  ///< n x p, column 0 is the intercept
    std::vector<std::string> labels;
    Eigen::VectorXd offset;  ///< zero unless an offset is requested
    /// Per-column centering/scaling applied when standardized (identity otherwise).
    Eigen::VectorXd center;
    Eigen::VectorXd scale;
    bool standardized = false;
    std::vector<std::string> warnings;

    std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(x.cols()); }

    /// Maps coefficients on the standardized scale back to raw covariate units.
    Eigen::VectorXd to_raw_scale(const Eigen::VectorXd& beta) const {
        if (!standardized) return beta;
        Eigen::VectorXd raw = beta;
        for (Eigen::Index j = 1; j < beta.size(); ++j) {
            raw(j) = beta(j) / scale(j);
            raw(0) -= beta(j) * center(j) / scale(j);
        }
        return raw;
    }
};

inline std::string pattern_dummy_label(PatternClass p) { return "pattern_" + std::string(to_string(p)); }
inline std::string land_use_dummy_label(LandUse l) { return "land_use_" + std::string(to_string(l)); }

/// Column order: intercept, continuous covariates, pattern dummies
/// (IrregularGrid, Mixed, Lollipops; base Grid), land-use dummies
/// (Commercial .. Agricultural; base Industrial).
inline DesignMatrix build_design(const std::vector<ZoneRecord>& records, const DesignOptions& opt = {}) {
    DesignMatrix d;
    d.labels.push_back("intercept");
    for (auto c : opt.covariates) d.labels.emplace_back(to_string(c));
    constexpr std::array<PatternClass, 3> non_base_patterns{PatternClass::IrregularGrid, PatternClass::Mixed,
                                                            PatternClass::Lollipops};
    if (opt.include_pattern)
        for (auto p : non_base_patterns) d.labels.push_back(pattern_dummy_label(p));
    if (opt.include_land_use)
        for (std::size_t k = 1; k < kLandUses.size(); ++k) d.labels.push_back(land_use_dummy_label(kLandUses[k]));

    const auto n = static_cast<Eigen::Index>(records.size());
    const auto p = static_cast<Eigen::Index>(d.labels.size());
    d.x = Eigen::MatrixXd::Zero(n, p);
    d.offset = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = records[static_cast<std::size_t>(i)];
        Eigen::Index col = 0;
        d.x(i, col++) = 1.0;
        for (auto c : opt.covariates) d.x(i, col++) = covariate_value(r, c);
        if (opt.include_pattern) {
            if (r.pattern == PatternClass::Unclassifiable)
                throw ValidationError("zone " + r.zone_id + ": pattern class unresolved");
            for (auto pc : non_base_patterns) d.x(i, col++) = r.pattern == pc ? 1.0 : 0.0;
        }
        if (opt.include_land_use)
            for (std::size_t k = 1; k < kLandUses.size(); ++k) d.x(i, col++) = r.land_use == kLandUses[k] ? 1.0 : 0.0;
        if (opt.offset_log_arterial_length) d.offset(i) = std::log(r.arterial_length_km);
    }

    d.center = Eigen::VectorXd::Zero(p);
    d.scale = Eigen::VectorXd::Ones(p);
    for (std::size_t k = 0; k < opt.covariates.size(); ++k) {
        const auto j = static_cast<Eigen::Index>(k + 1);
        if (n > 0 && (d.x.col(j).array() == d.x(0, j)).all())
            d.warnings.push_back("covariate " + d.labels[static_cast<std::size_t>(j)] + " is constant");
    }
    if (opt.standardize && n > 1) {
        d.standardized = true;
        for (std::size_t k = 0; k < opt.covariates.size(); ++k) {
            const auto j = static_cast<Eigen::Index>(k + 1);
            const double m = d.x.col(j).mean();
            const double sd = std::sqrt((d.x.col(j).array() - m).square().sum() / static_cast<double>(n - 1));
            if (sd == 0.0) continue;
            d.center(j) = m;
            d.scale(j) = sd;
            d.x.col(j) = (d.x.col(j).array() - m) / sd;
        }
    }
    return d;
}

inline Eigen::VectorXd response(const std::vector<ZoneRecord>& records) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i) y(static_cast<Eigen::Index>(i)) = static_cast<double>(records[i].crash_count);
    return y;
}

// --- descriptive statistics -------------------------------------------------------

struct CovariateSummary {
    std::string name;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    double sd = 0.0;
};

inline CovariateSummary summarize_values(std::string name, const std::vector<double>& v) {
    if (v.size() < 2) throw DomainError("sd undefined for fewer than 2 values");
    CovariateSummary s;
    s.name = std::move(name);
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    s.min = *lo;
    s.max = *hi;
    return s;
}

inline std::vector<CovariateSummary> summarize(const std::vector<ZoneRecord>& records) {
    std::vector<CovariateSummary> out;
    for (auto c : kAllCovariates) {
        std::vector<double> v;
        v.reserve(records.size());
        for (const auto& r : records) v.push_back(covariate_value(r, c));
        out.push_back(summarize_values(std::string(to_string(c)), v));
    }
    return out;
}

}  // namespace crashcar
