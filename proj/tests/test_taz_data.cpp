#include <gtest/gtest.h>

#include <Eigen/QR>

#include <random>
#include <sstream>

#include "crashcar/synth.hpp"
#include "crashcar/taz_data.hpp"

using namespace crashcar;

namespace {

const char* kHeader =
    "zone_id,area_km2,ln_production,ln_attraction,arterial_length_km,access_density,signal_density,road_density,"
    "pattern,land_use,crash_count\n";

ZoneRecord base_record() {
    ZoneRecord r;
    r.zone_id = "A";
    r.area_km2 = 2.0;
    r.ln_production = 9.5;
    r.ln_attraction = 9.7;
    r.arterial_length_km = 3.0;
    r.access_density = 2.08;
    r.signal_density = 1.74;
    r.road_density = 3.1;
    r.crash_count = 12;
    return r;
}

}  // namespace

TEST(LoadDataset, WellFormedRows) {
    std::istringstream in(std::string(kHeader) +
                          "Z1,3.2,9.9,9.8,3.1,2.08,1.74,3.11,Grid,Industrial,14\n"
                          "Z2,1.5,10.1,9.2,2.0,1.00,0.50,2.00,Lollipops,Residential,3\n"
                          "Z3,0.8,8.7,9.9,1.1,0.00,2.10,4.50,IrregularGrid,Commercial,0\n");
    auto res = load_dataset(in);
    EXPECT_TRUE(res.errors.empty());
    ASSERT_EQ(res.records.size(), 3u);
    EXPECT_EQ(res.records[1].pattern, PatternClass::Lollipops);
    EXPECT_EQ(res.records[2].land_use, LandUse::Commercial);
    EXPECT_EQ(res.records[0].crash_count, 14);
}

TEST(LoadDataset, NegativeCountRejected) {
    std::istringstream in(std::string(kHeader) + "Z1,3.2,9.9,9.8,3.1,2.08,1.74,3.11,Grid,Industrial,-1\n");
    auto res = load_dataset(in);
    EXPECT_TRUE(res.records.empty());
    ASSERT_EQ(res.errors.size(), 1u);
    EXPECT_EQ(res.errors[0].line, 2u);
    EXPECT_NE(res.errors[0].message.find("crash_count"), std::string::npos);
}

TEST(LoadDataset, UnknownLandUseRejected) {
    std::istringstream in(std::string(kHeader) + "Z1,3.2,9.9,9.8,3.1,2.08,1.74,3.11,Grid,Harbor,4\n" +
                          "Z2,3.2,9.9,9.8,3.1,2.08,1.74,3.11,Grid,Industrial,4\n");
    auto res = load_dataset(in);
    EXPECT_EQ(res.records.size(), 1u);
    ASSERT_EQ(res.errors.size(), 1u);
    EXPECT_NE(res.errors[0].message.find("land_use"), std::string::npos);
}

TEST(LoadDataset, NonNumericAndMissingColumn) {
    std::istringstream bad(std::string(kHeader) + "Z1,abc,9.9,9.8,3.1,2.08,1.74,3.11,Grid,Industrial,4\n");
    EXPECT_EQ(load_dataset(bad).errors.size(), 1u);
    std::istringstream missing("zone_id,area_km2\nZ1,1.0\n");
    EXPECT_THROW(load_dataset(missing), ValidationError);
    std::istringstream strict(std::string(kHeader) + "Z1,3.2,9.9,9.8,3.1,2.08,1.74,3.11,Grid,Industrial,-2\n");
    EXPECT_THROW(load_dataset_strict(strict), ValidationError);
}

TEST(SaveDataset, RoundTripIsBitIdentical) {
    std::mt19937_64 rng(4);
    auto recs = generate_covariates(50, CovariateDistributions{}, rng);
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].crash_count = static_cast<long>(i * 3 % 17);
    std::ostringstream a;
    save_dataset(a, recs);
    std::istringstream in(a.str());
    auto back = load_dataset_strict(in);
    EXPECT_EQ(back, recs);
    std::ostringstream b;
    save_dataset(b, back);
    EXPECT_EQ(a.str(), b.str());
}

TEST(BuildDesign, BaseLevelsHaveNoDummies) {
    auto d = build_design({base_record()});
    ASSERT_EQ(d.labels.size(), 1u + 6u + 3u + 6u);
    EXPECT_EQ(d.labels[0], "intercept");
    EXPECT_EQ(d.x(0, 0), 1.0);
    for (Eigen::Index j = 7; j < d.x.cols(); ++j) EXPECT_EQ(d.x(0, j), 0.0);
}

TEST(BuildDesign, LollipopsDummies) {
    auto r = base_record();
    r.pattern = PatternClass::Lollipops;
    auto d = build_design({r});
    EXPECT_EQ(d.labels[7], "pattern_IrregularGrid");
    EXPECT_EQ(d.x(0, 7), 0.0);
    EXPECT_EQ(d.x(0, 8), 0.0);
    EXPECT_EQ(d.x(0, 9), 1.0);
}

TEST(BuildDesign, SingleCovariateDifference) {
    auto a = base_record();
    auto b = base_record();
    b.access_density = 3.08;
    auto d = build_design({a, b});
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
        if (d.labels[static_cast<std::size_t>(j)] == "access_density") EXPECT_DOUBLE_EQ(d.x(1, j) - d.x(0, j), 1.0);
        else EXPECT_EQ(d.x(1, j), d.x(0, j));
    }
}

TEST(BuildDesign, DummyBlocksSumToAtMostOne) {
    std::mt19937_64 rng(8);
    auto recs = generate_covariates(300, CovariateDistributions{}, rng);
    auto d = build_design(recs);
    for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
        const double pat = d.x.row(i).segment(7, 3).sum();
        const double land = d.x.row(i).segment(10, 6).sum();
        EXPECT_TRUE(pat == 0.0 || pat == 1.0);
        EXPECT_TRUE(land == 0.0 || land == 1.0);
    }
}

TEST(BuildDesign, FullRankOnGeneratorOutput) {
    std::mt19937_64 rng(1);
    auto d = build_design(generate_covariates(169, CovariateDistributions{}, rng));
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.x);
    EXPECT_EQ(qr.rank(), d.x.cols());
}

TEST(BuildDesign, ConstantColumnWarns) {
    auto d = build_design({base_record(), base_record()});
    EXPECT_FALSE(d.warnings.empty());
}

TEST(BuildDesign, StandardizedCoefficientsMapBack) {
    std::mt19937_64 rng(2);
    auto recs = generate_covariates(40, CovariateDistributions{}, rng);
    DesignOptions opt;
    opt.standardize = true;
    auto ds = build_design(recs, opt);
    auto dr = build_design(recs);
    Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(ds.x.cols(), -0.3, 0.4);
    Eigen::VectorXd raw = ds.to_raw_scale(b);
    EXPECT_LT(((ds.x * b) - (dr.x * raw)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(BuildDesign, OffsetFlag) {
    DesignOptions opt;
    opt.offset_log_arterial_length = true;
    auto d = build_design({base_record()}, opt);
    EXPECT_DOUBLE_EQ(d.offset(0), std::log(3.0));
    EXPECT_EQ(build_design({base_record()}).offset(0), 0.0);
}

TEST(Covariates, SignalSpacingAlias) {
    EXPECT_EQ(parse_covariate("signal_spacing"), Covariate::SignalDensity);
    EXPECT_EQ(parse_covariate("signal_density"), Covariate::SignalDensity);
    EXPECT_FALSE(parse_covariate("speed").has_value());
}

TEST(Summarize, Examples) {
    auto s = summarize_values("x", {1, 2, 3});
    EXPECT_DOUBLE_EQ(s.mean, 2.0);
    EXPECT_DOUBLE_EQ(s.sd, 1.0);
    EXPECT_EQ(s.min, 1.0);
    EXPECT_EQ(s.max, 3.0);
    EXPECT_EQ(summarize_values("c", {4, 4, 4}).sd, 0.0);
    EXPECT_THROW(summarize_values("x", {1}), DomainError);
}

TEST(Summarize, GeneratorMatchesDescriptiveMeans) {
    std::mt19937_64 rng(3);
    auto sums = summarize(generate_covariates(5000, CovariateDistributions{}, rng));
    auto find = [&](const std::string& n) {
        for (const auto& s : sums)
            if (s.name == n) return s;
        return CovariateSummary{};
    };
    EXPECT_NEAR(find("access_density").mean, 2.08, 0.05 * 2.08);
    EXPECT_NEAR(find("signal_density").mean, 1.74, 0.05 * 1.74);
}

TEST(ResolvePattern, ExplicitValueWinsWithWarning) {
    std::vector<RoadEdge> star;
    for (std::size_t i = 1; i < 6; ++i) star.push_back({0, i, std::nullopt});
    RoadGraph g(6, star);
    auto r = base_record();
    r.pattern = PatternClass::Grid;
    auto warn = resolve_pattern(r, g);
    EXPECT_TRUE(warn.has_value());
    EXPECT_EQ(r.pattern, PatternClass::Grid);
    r.pattern = PatternClass::Unclassifiable;
    EXPECT_FALSE(resolve_pattern(r, g).has_value());
    EXPECT_EQ(r.pattern, PatternClass::Lollipops);
}
