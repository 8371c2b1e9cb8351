#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "crashcar/graph_centrality.hpp"
#include "crashcar/synth.hpp"
#include "oracles.hpp"

using namespace crashcar;

namespace {

RoadGraph make(std::size_t n, std::initializer_list<std::pair<std::size_t, std::size_t>> e) {
    std::vector<RoadEdge> edges;
    for (auto [u, v] : e) edges.push_back({u, v, std::nullopt});
    return RoadGraph(n, edges);
}

RoadGraph path(std::size_t n) {
    std::vector<RoadEdge> e;
    for (std::size_t i = 0; i + 1 < n; ++i) e.push_back({i, i + 1, std::nullopt});
    return RoadGraph(n, e);
}

RoadGraph star(std::size_t leaves) {
    std::vector<RoadEdge> e;
    for (std::size_t i = 1; i <= leaves; ++i) e.push_back({0, i, std::nullopt});
    return RoadGraph(leaves + 1, e);
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

RoadGraph to_graph(std::size_t n, const std::vector<oracle::Edge>& es, bool lengths) {
    std::vector<RoadEdge> e;
    for (const auto& x : es) e.push_back({x.u, x.v, lengths ? std::optional<double>(x.len) : std::nullopt});
    return RoadGraph(n, e);
}

}  // namespace

TEST(NodeBetweenness, PathInteriorCarriesBothPairs) {
    auto s = node_betweenness(path(3));
    EXPECT_DOUBLE_EQ(s[0], 0.0);
    EXPECT_DOUBLE_EQ(s[1], 1.0);
    EXPECT_DOUBLE_EQ(s[2], 0.0);
}

TEST(NodeBetweenness, StarCenterIsOne) {
    auto s = node_betweenness(star(4));
    EXPECT_DOUBLE_EQ(s[0], 1.0);
    for (std::size_t i = 1; i < 5; ++i) EXPECT_DOUBLE_EQ(s[i], 0.0);
}

TEST(NodeBetweenness, FourCycleMatchesEnumeration) {
    auto s = node_betweenness(cycle(4));
    auto raw = oracle::brute_force_betweenness(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}, false);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(s[i], 1.0 / 6.0, 1e-12);
        EXPECT_NEAR(s[i], raw[i] / 6.0, 1e-12);
    }
}

TEST(NodeBetweenness, SmallGraphsReturnZeros) {
    auto s = node_betweenness(make(2, {{0, 1}}));
    EXPECT_EQ(s, (std::vector<double>{0.0, 0.0}));
}

TEST(NodeBetweenness, MatchesBruteForceOnRandomGraphs) {
    std::mt19937_64 rng(20240611);
    std::uniform_int_distribution<std::size_t> size(3, 8);
    std::uniform_real_distribution<double> dens(0.0, 0.6);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = size(rng);
        const bool weighted = trial % 2 == 1;
        auto es = oracle::random_connected_graph(n, dens(rng), rng, weighted);
        auto g = to_graph(n, es, weighted);
        auto want = oracle::brute_force_betweenness(n, es, weighted);
        auto got = betweenness(g, weighted ? PathMetric::EdgeLength : PathMetric::HopCount);
        ASSERT_FALSE(got.disconnected);
        for (std::size_t i = 0; i < n; ++i) {
            ASSERT_NEAR(got.raw[i], want[i], 1e-9) << "trial " << trial << " node " << i;
            ASSERT_NEAR(got.normalized[i], want[i] / ((n - 1.0) * (n - 2.0)), 1e-9);
        }
    }
}

TEST(NodeBetweenness, ScoresNeverExceedOneAndOneOnlyForCutCenters) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + trial % 6;
        auto es = oracle::random_connected_graph(n, 0.3, rng);
        auto g = to_graph(n, es, false);
        auto s = node_betweenness(g);
        auto raw = oracle::brute_force_betweenness(n, es, false);
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_LE(s[i], 1.0 + 1e-12);
            // Score 1 exactly when every path between every other ordered pair uses i.
            const bool all = std::abs(raw[i] - (n - 1.0) * (n - 2.0)) < 1e-9;
            EXPECT_EQ(std::abs(s[i] - 1.0) < 1e-12, all);
        }
    }
}

TEST(NodeBetweenness, VertexTransitiveGraphsAreUniform) {
    for (std::size_t n = 3; n <= 9; ++n) {
        for (const auto& g : {cycle(n), complete(n)}) {
            auto s = node_betweenness(g);
            for (double v : s) EXPECT_NEAR(v, s[0], 1e-12);
            EXPECT_DOUBLE_EQ(graph_centralization(g), 0.0);
        }
    }
}

TEST(NodeBetweenness, EqualLengthsMatchHopCount) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + trial % 10;
        auto es = oracle::random_connected_graph(n, 0.4, rng);
        for (auto& e : es) e.len = 2.5;
        auto hop = node_betweenness(to_graph(n, es, false), PathMetric::HopCount);
        auto len = node_betweenness(to_graph(n, es, true), PathMetric::EdgeLength);
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(hop[i], len[i], 1e-12);
    }
}

TEST(NodeBetweenness, DisconnectedGraphFlagsAndCountsOnlyReachablePairs) {
    auto r = betweenness(make(5, {{0, 1}, {1, 2}, {3, 4}}));
    EXPECT_TRUE(r.disconnected);
    EXPECT_DOUBLE_EQ(r.raw[1], 2.0);
    EXPECT_DOUBLE_EQ(r.raw[3], 0.0);
}

TEST(RoadGraphValidation, NamesOffendingEdge) {
    try {
        make(3, {{0, 1}, {2, 2}});
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("edge 1 (2, 2)"), std::string::npos);
    }
    EXPECT_THROW(make(3, {{0, 3}}), ValidationError);
    EXPECT_THROW(make(3, {{0, 1}, {1, 0}}), ValidationError);
    EXPECT_THROW(RoadGraph(2, {{0, 1, -1.0}}), ValidationError);
}

TEST(GraphCentralization, StarIsExactlyOne) {
    EXPECT_EQ(graph_centralization(star(4)), 1.0);
    for (std::size_t leaves = 2; leaves < 20; ++leaves) EXPECT_DOUBLE_EQ(graph_centralization(star(leaves)), 1.0);
}

TEST(GraphCentralization, StarNumeratorAndDenominator) {
    auto raw = oracle::brute_force_betweenness(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}, false);
    double num = 0.0;
    const double top = *std::max_element(raw.begin(), raw.end());
    for (double b : raw) num += top - b;
    EXPECT_DOUBLE_EQ(num, 48.0);
    EXPECT_DOUBLE_EQ(centralization_denominator(5), 48.0);
}

TEST(GraphCentralization, DenominatorIdentity) {
    for (std::size_t n = 3; n <= 50; ++n) {
        const double x = static_cast<double>(n);
        EXPECT_EQ(centralization_denominator(n), (x - 1.0) * (x - 1.0) * (x - 2.0));
    }
}

TEST(GraphCentralization, CyclesAndCompleteGraphsAreZero) {
    for (std::size_t n = 3; n <= 12; ++n) {
        EXPECT_EQ(graph_centralization(cycle(n)), 0.0);
        EXPECT_EQ(graph_centralization(complete(n)), 0.0);
    }
}

TEST(GraphCentralization, TooFewNodesIsDomainError) {
    EXPECT_THROW(graph_centralization(make(2, {{0, 1}})), DomainError);
}

TEST(GraphCentralization, NormalizedNumeratorVariantShrinksStar) {
    // Normalized scores in the numerator cap the star at 1 / ((N-1)(N-2)).
    EXPECT_NEAR(graph_centralization(star(4), PathMetric::HopCount, CentralizationVariant::NormalizedNumerator),
                1.0 / 12.0, 1e-15);
}

TEST(GraphCentralization, AlwaysInUnitInterval) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + trial % 12;
        auto g = to_graph(n, oracle::random_connected_graph(n, 0.2, rng), false);
        auto r = analyze_centrality(g);
        EXPECT_GE(r.graph_centralization, 0.0);
        EXPECT_LE(r.graph_centralization, 1.0);
        EXPECT_EQ(r.node_scores.size(), n);
    }
}

TEST(ClassifyPattern, TableIntervals) {
    EXPECT_EQ(classify_pattern(0.10), PatternClass::Grid);
    EXPECT_EQ(classify_pattern(0.22), PatternClass::IrregularGrid);
    EXPECT_EQ(classify_pattern(0.35), PatternClass::Mixed);
    EXPECT_EQ(classify_pattern(0.50), PatternClass::Lollipops);
}

TEST(ClassifyPattern, BoundariesAreHalfOpen) {
    EXPECT_EQ(classify_pattern(0.0), PatternClass::Grid);
    EXPECT_EQ(classify_pattern(0.1499999), PatternClass::Grid);
    EXPECT_EQ(classify_pattern(0.15), PatternClass::IrregularGrid);
    EXPECT_EQ(classify_pattern(0.30), PatternClass::Mixed);
    EXPECT_EQ(classify_pattern(0.40), PatternClass::Lollipops);
    EXPECT_EQ(classify_pattern(1.0), PatternClass::Lollipops);
    EXPECT_THROW(classify_pattern(-0.01), DomainError);
    EXPECT_THROW(classify_pattern(1.01), DomainError);
}

TEST(ClassifyPattern, MonotoneStepFunction) {
    int prev = 0;
    for (int k = 0; k <= 10000; ++k) {
        const int cls = static_cast<int>(classify_pattern(k / 10000.0));
        EXPECT_GE(cls, prev);
        prev = cls;
    }
}

TEST(AdjacencyMatrix, Examples) {
    EXPECT_EQ(adjacency_matrix(path(3)), (std::vector<std::vector<int>>{{0, 1, 0}, {1, 0, 1}, {0, 1, 0}}));
    EXPECT_EQ(adjacency_matrix(make(2, {{0, 1}})), (std::vector<std::vector<int>>{{0, 1}, {1, 0}}));
    EXPECT_EQ(adjacency_matrix(RoadGraph(3, {})), (std::vector<std::vector<int>>(3, std::vector<int>(3, 0))));
}

TEST(EdgeList, ParsesCommentsHeaderAndLengths) {
    std::istringstream in("# zone 12\nnodes 5\n0 1 0.4\n\n1 2   # link\n");
    auto g = read_edge_list(in);
    EXPECT_EQ(g.node_count(), 5u);
    ASSERT_EQ(g.edges().size(), 2u);
    EXPECT_DOUBLE_EQ(*g.edges()[0].length_km, 0.4);
    EXPECT_FALSE(g.edges()[1].length_km.has_value());
}

TEST(EdgeList, InfersNodeCount) {
    std::istringstream in("0 1\n1 4\n");
    EXPECT_EQ(read_edge_list(in).node_count(), 5u);
}

TEST(EdgeList, MalformedLineReportsLineNumber) {
    std::istringstream in("0 1\n1 x\n");
    try {
        read_edge_list(in);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(EdgeList, RoundTrip) {
    auto g = RoadGraph(4, {{0, 1, 0.5}, {1, 2, std::nullopt}, {2, 3, 1.25}});
    std::ostringstream out;
    write_edge_list(out, g);
    std::istringstream in(out.str());
    auto h = read_edge_list(in);
    ASSERT_EQ(h.edges().size(), 3u);
    EXPECT_EQ(h.edges()[2].length_km, 1.25);
    EXPECT_EQ(node_betweenness(g, PathMetric::EdgeLength), node_betweenness(h, PathMetric::EdgeLength));
}

TEST(PatternNetworks, GridBelowLollipopsOnEverySeed) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        std::mt19937_64 rng(seed);
        auto grid = generate_pattern_network(PatternClass::Grid, 5, 0.0, rng);
        auto lolli = generate_pattern_network(PatternClass::Lollipops, 5, 0.0, rng);
        ASSERT_EQ(grid.node_count(), lolli.node_count());
        EXPECT_LT(graph_centralization(grid), graph_centralization(lolli));
    }
}

TEST(PatternNetworks, SmallLollipopNearTopOfRange) {
    std::mt19937_64 rng(3);
    auto g = generate_pattern_network(PatternClass::Lollipops, 3, 0.0, rng);
    EXPECT_GE(graph_centralization(g), 0.4);
}

TEST(PatternNetworks, AlwaysConnected) {
    for (auto p : {PatternClass::Grid, PatternClass::IrregularGrid, PatternClass::Mixed, PatternClass::Lollipops})
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            std::mt19937_64 rng(seed);
            auto g = generate_pattern_network(p, 2 + seed % 6, 0.5, rng);
            EXPECT_TRUE(g.is_connected());
            EXPECT_EQ(g.node_count(), (2 + seed % 6) * (2 + seed % 6));
        }
}
