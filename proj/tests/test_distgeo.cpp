#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "support.hpp"

using namespace dggcn;

namespace {

using Bonds = std::vector<std::pair<std::size_t, std::size_t>>;

PairOrders oracle_pairs(const Bonds& bonds, std::size_t n, int max_order) {
    const auto d = testsupport::hop_matrix(bonds, n);
    PairOrders out;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (d[i][j] >= 1 && d[i][j] <= max_order) out[{i, j}] = d[i][j];
    return out;
}

std::set<std::pair<std::size_t, std::size_t>> unordered(const DistGeoGraph& g) {
    std::set<std::pair<std::size_t, std::size_t>> s;
    for (const GeoEdge& e : g.edges) s.insert(ordered_pair(e.src, e.dst));
    return s;
}

} // namespace

TEST(PairDistance, Examples) {
    EXPECT_EQ(pair_distance({0, 0, 0}, {3, 4, 0}), 5.0);
    EXPECT_EQ(pair_distance({1, 2, 3}, {1, 2, 3}), 0.0);
    EXPECT_NEAR(pair_distance({1, 1, 1}, {2, 2, 2}), std::sqrt(3.0), 1e-15);
}

TEST(KhopPairs, PathGraph) {
    const PairOrders p = khop_pairs({{0, 1}, {1, 2}, {2, 3}}, 4, 3);
    const PairOrders want{{{0, 1}, 1}, {{1, 2}, 1}, {{2, 3}, 1}, {{0, 2}, 2}, {{1, 3}, 2}, {{0, 3}, 3}};
    EXPECT_EQ(p, want);
}

TEST(KhopPairs, TriangleHasOnlyFirstOrder) {
    const PairOrders p = khop_pairs({{0, 1}, {1, 2}, {2, 0}}, 3, 3);
    const PairOrders want{{{0, 1}, 1}, {{1, 2}, 1}, {{0, 2}, 1}};
    EXPECT_EQ(p, want);
}

TEST(KhopPairs, SixRingCountsAndPerNodeNeighbors) {
    Bonds ring;
    for (std::size_t i = 0; i < 6; ++i) ring.emplace_back(i, (i + 1) % 6);
    const PairOrders p = khop_pairs(ring, 6, 3);
    EXPECT_EQ(p, oracle_pairs(ring, 6, 3));
    std::array<int, 4> count{};
    for (const auto& [_, o] : p) ++count[o];
    EXPECT_EQ(count[1], 6);
    EXPECT_EQ(count[2], 6);
    EXPECT_EQ(count[3], 3);
    for (std::size_t v = 0; v < 6; ++v) {
        std::array<int, 4> per{};
        for (const auto& [key, o] : p)
            if (key.first == v || key.second == v) ++per[o];
        EXPECT_EQ(per[1], 2);
        EXPECT_EQ(per[2], 2);
        EXPECT_EQ(per[3], 1);
    }
}

TEST(KhopPairs, RejectsInvalidOrder) {
    EXPECT_THROW(khop_pairs({{0, 1}}, 2, 0), ConfigError);
    EXPECT_THROW(khop_pairs({{0, 1}}, 2, 4), ConfigError);
}

TEST(KhopPairs, MatchesAllPairsOracleOnRandomGraphs) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng() % 12;
        const Bonds bonds = testsupport::random_bonds(rng, n, 0.1 + 0.3 * static_cast<double>(rng() % 4) / 3.0);
        for (int order = 1; order <= 3; ++order) {
            ASSERT_EQ(khop_pairs(bonds, n, order), oracle_pairs(bonds, n, order)) << "trial " << trial;
        }
    }
}

TEST(BuildDistGeo, CollinearChainDistances) {
    const DistGeoGraph g = build_distgeo(testsupport::chain4(), 3);
    EXPECT_EQ(g.counts, (EdgeCounts{3, 2, 1}));
    ASSERT_EQ(g.edges.size(), 12u);
    for (const GeoEdge& e : g.edges) {
        EXPECT_EQ(e.distance, static_cast<double>(to_int(e.order)));
        EXPECT_EQ(e.distance, std::abs(static_cast<double>(e.src) - static_cast<double>(e.dst)));
    }
}

TEST(BuildDistGeo, FirstOrderIsTheBondList) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        const Graph3D m = random_molecule(rng);
        const DistGeoGraph g = build_distgeo(m, 1);
        std::set<std::pair<std::size_t, std::size_t>> bonds;
        for (auto [i, j] : m.bonds) bonds.insert(ordered_pair(i, j));
        EXPECT_EQ(unordered(g), bonds);
        for (const GeoEdge& e : g.edges) {
            EXPECT_EQ(e.order, EdgeOrder::First);
            EXPECT_EQ(e.distance, pair_distance(m.atoms[e.src].position, m.atoms[e.dst].position));
        }
    }
}

TEST(BuildDistGeo, CoincidentAtomsNameThePair) {
    Graph3D g = testsupport::chain4();
    g.atoms[3].position = g.atoms[1].position;
    try {
        build_distgeo(g, 3);
        FAIL() << "expected GraphError";
    } catch (const GraphError& e) {
        EXPECT_NE(std::string(e.what()).find("1 and 3"), std::string::npos) << e.what();
    }
}

TEST(BuildDistGeo, DisconnectedNodesContributeNoEdges) {
    Graph3D g = testsupport::chain4();
    g.atoms.push_back({"O", 8, {10, 10, 10}});
    const DistGeoGraph d = build_distgeo(g, 3);
    for (const GeoEdge& e : d.edges) {
        EXPECT_NE(e.src, 4u);
        EXPECT_NE(e.dst, 4u);
    }
}

TEST(BuildDistGeo, MatchesOracleOnRandomMolecules) {
    std::mt19937_64 rng(77);
    for (int t = 0; t < 100; ++t) {
        const Graph3D m = random_molecule(rng);
        const std::size_t n = m.atoms.size();
        const auto hops = testsupport::hop_matrix(m.bonds, n);
        const DistGeoGraph g = build_distgeo(m, 3);
        EdgeCounts want;
        std::map<std::pair<std::size_t, std::size_t>, std::pair<int, double>> expected;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j || hops[i][j] > 3) continue;
                const auto& p = m.atoms[i].position;
                const auto& q = m.atoms[j].position;
                const double d = std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) +
                                           (p[2] - q[2]) * (p[2] - q[2]));
                expected[{j, i}] = {hops[i][j], d};
                if (i < j) (hops[i][j] == 1 ? want.first : hops[i][j] == 2 ? want.second : want.third)++;
            }
        EXPECT_EQ(g.counts, want);
        ASSERT_EQ(g.edges.size(), expected.size());
        for (const GeoEdge& e : g.edges) {
            const auto it = expected.find({e.src, e.dst});
            ASSERT_NE(it, expected.end());
            EXPECT_EQ(to_int(e.order), it->second.first);
            EXPECT_NEAR(e.distance, it->second.second, 1e-12);
        }
    }
}

TEST(DistGeoProperties, RigidMotionInvariance) {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
        const Graph3D m = random_molecule(rng);
        const DistGeoGraph a = build_distgeo(m, 3);
        const DistGeoGraph b = build_distgeo(testsupport::rigid_motion(m, rng), 3);
        ASSERT_EQ(a.edges.size(), b.edges.size());
        for (std::size_t k = 0; k < a.edges.size(); ++k) {
            EXPECT_EQ(a.edges[k].src, b.edges[k].src);
            EXPECT_EQ(a.edges[k].dst, b.edges[k].dst);
            EXPECT_EQ(a.edges[k].order, b.edges[k].order);
            EXPECT_NEAR(a.edges[k].distance, b.edges[k].distance, 1e-9);
        }
    }
}

TEST(DistGeoProperties, SymmetryAndSingleOrderPerPair) {
    std::mt19937_64 rng(10);
    for (int t = 0; t < 50; ++t) {
        const DistGeoGraph g = build_distgeo(random_molecule(rng), 3);
        std::map<std::pair<std::size_t, std::size_t>, const GeoEdge*> directed;
        for (const GeoEdge& e : g.edges) {
            EXPECT_NE(e.src, e.dst);
            EXPECT_GT(e.distance, 0.0);
            EXPECT_TRUE(directed.emplace(std::make_pair(e.src, e.dst), &e).second);
        }
        for (const auto& [key, e] : directed) {
            const auto rev = directed.find({key.second, key.first});
            ASSERT_NE(rev, directed.end());
            EXPECT_EQ(rev->second->order, e->order);
            EXPECT_EQ(rev->second->distance, e->distance);
        }
    }
}

TEST(DistGeoProperties, EdgeSetsNestAcrossOrders) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 50; ++t) {
        const Graph3D m = random_molecule(rng);
        const auto s1 = unordered(build_distgeo(m, 1));
        const auto s2 = unordered(build_distgeo(m, 2));
        const auto s3 = unordered(build_distgeo(m, 3));
        EXPECT_TRUE(std::includes(s2.begin(), s2.end(), s1.begin(), s1.end()));
        EXPECT_TRUE(std::includes(s3.begin(), s3.end(), s2.begin(), s2.end()));
    }
}

TEST(DistGeoJson, ExportCarriesCountsAndEdges) {
    const nlohmann::json j = to_json(build_distgeo(testsupport::chain4(), 3));
    EXPECT_EQ(j["counts"]["edge"], 3);
    EXPECT_EQ(j["counts"]["angle"], 2);
    EXPECT_EQ(j["counts"]["dihedral"], 1);
    EXPECT_EQ(j["edges"].size(), 12u);
}
