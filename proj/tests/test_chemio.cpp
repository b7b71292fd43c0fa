#include <gtest/gtest.h>

#include <iomanip>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace dggcn;

namespace {

std::string record(const std::string& name, const std::string& body) { return name + "\n  t\n\n" + body; }

} // namespace

TEST(Sdf, MethaneReadsAtomsAndBondsVerbatim) {
    const SdfResult r = parse_sdf(std::string_view(testsupport::methane_sdf()));
    ASSERT_TRUE(r.errors.empty());
    ASSERT_EQ(r.molecules.size(), 1u);
    const Graph3D& g = r.molecules[0];
    EXPECT_EQ(g.id, "methane");
    EXPECT_EQ(g.atoms.size(), 5u);
    EXPECT_EQ(g.bonds.size(), 4u);
    EXPECT_EQ(g.atoms[0].element, "C");
    EXPECT_EQ(g.atoms[0].atomic_number, 6);
    EXPECT_EQ(g.atoms[1].atomic_number, 1);
    EXPECT_EQ(g.atoms[2].position[0], -0.6291);
    EXPECT_EQ(g.atoms[2].position[2], 0.6291);
    EXPECT_EQ(g.bonds[3], std::make_pair(std::size_t{0}, std::size_t{4}));
    ASSERT_TRUE(g.target.has_value());
    EXPECT_EQ(*g.target, -0.636);
}

TEST(Sdf, EmptyStreamGivesEmptyList) {
    const SdfResult r = parse_sdf(std::string_view(""));
    EXPECT_TRUE(r.molecules.empty());
    EXPECT_TRUE(r.errors.empty());
}

TEST(Sdf, BondToAtomZeroIsReportedWithRecordIndex) {
    const std::string good = testsupport::methane_sdf();
    const std::string bad = record("broken",
                                   "  2  1  0  0  0  0  0  0  0  0999 V2000\n"
                                   "    0.0000    0.0000    0.0000 C   0  0\n"
                                   "    1.5000    0.0000    0.0000 C   0  0\n"
                                   "  0  1  1  0\n"
                                   "M  END\n$$$$\n");
    const SdfResult r = parse_sdf(std::string_view(good + bad + good));
    EXPECT_EQ(r.molecules.size(), 2u);
    ASSERT_EQ(r.errors.size(), 1u);
    EXPECT_EQ(r.errors[0].record, 1u);
    EXPECT_NE(r.errors[0].message.find("out of range"), std::string::npos);
}

TEST(Sdf, MalformedCountsLineAndCoordinatesAreErrors) {
    const std::string counts = record("c", "  x  1  0  0  0  0  0  0  0  0999 V2000\nM  END\n$$$$\n");
    const std::string coord = record("d",
                                     "  1  0  0  0  0  0  0  0  0  0999 V2000\n"
                                     "    0.0000    abcdef    0.0000 C   0  0\n"
                                     "M  END\n$$$$\n");
    const SdfResult r = parse_sdf(std::string_view(counts + coord));
    EXPECT_TRUE(r.molecules.empty());
    ASSERT_EQ(r.errors.size(), 2u);
    EXPECT_NE(r.errors[0].message.find("counts"), std::string::npos);
    EXPECT_NE(r.errors[1].message.find("coordinate"), std::string::npos);
}

TEST(Sdf, DuplicateBondRejected) {
    const std::string dup = record("dup",
                                   "  2  2  0  0  0  0  0  0  0  0999 V2000\n"
                                   "    0.0000    0.0000    0.0000 C   0  0\n"
                                   "    1.5000    0.0000    0.0000 C   0  0\n"
                                   "  1  2  1  0\n"
                                   "  2  1  1  0\n"
                                   "M  END\n$$$$\n");
    const SdfResult r = parse_sdf(std::string_view(dup));
    ASSERT_EQ(r.errors.size(), 1u);
    EXPECT_NE(r.errors[0].message.find("duplicate"), std::string::npos);
}

TEST(Sdf, DistinctBondsAcrossLargeRecordAreAccepted) {
    std::ostringstream s;
    s << "ring\n  t\n\n";
    const int n = 12;
    s << std::setw(3) << n << std::setw(3) << n << "  0  0  0  0  0  0  0  0999 V2000\n";
    for (int i = 0; i < n; ++i) {
        s << std::fixed << std::setprecision(4) << std::setw(10) << std::cos(i * 0.5) << std::setw(10)
          << std::sin(i * 0.5) << std::setw(10) << 0.0 << " C   0  0\n";
    }
    for (int i = 0; i < n; ++i) s << std::setw(3) << i + 1 << std::setw(3) << (i + 1) % n + 1 << "  1  0\n";
    s << "M  END\n$$$$\n";
    const SdfResult r = parse_sdf(std::string_view(s.str()));
    ASSERT_TRUE(r.errors.empty()) << r.errors[0].message;
    EXPECT_EQ(r.molecules[0].bonds.size(), 12u);
}

TEST(Sdf, TargetsCsvAttachesById) {
    std::vector<Graph3D> g = parse_sdf(std::string_view(testsupport::methane_sdf())).molecules;
    g[0].target.reset();
    std::istringstream csv("id,target\nmethane,2.5\nother,1\n");
    attach_targets(g, read_targets_csv(csv));
    EXPECT_EQ(*g[0].target, 2.5);
    std::istringstream missing("id,target\nother,1\n");
    EXPECT_THROW(attach_targets(g, read_targets_csv(missing)), ParseError);
}

TEST(Graph3DInvariants, ValidateRejectsViolations) {
    Graph3D g = testsupport::chain4();
    EXPECT_NO_THROW(validate(g));
    Graph3D loop = g;
    loop.bonds.emplace_back(2, 2);
    EXPECT_THROW(validate(loop), GraphError);
    Graph3D dup = g;
    dup.bonds.emplace_back(1, 0);
    EXPECT_THROW(validate(dup), GraphError);
    Graph3D range = g;
    range.bonds.emplace_back(0, 4);
    EXPECT_THROW(validate(range), GraphError);
    Graph3D nan = g;
    nan.atoms[1].position[2] = std::nan("");
    EXPECT_THROW(validate(nan), GraphError);
}

TEST(Featurize, CarbonAndHydrogenExamples) {
    // Methane: carbon has 4 bonds, each hydrogen 1. Vocabulary fitted on it is [H, C];
    // widen it to [H, C, N, O] to mirror the documented example.
    const Graph3D methane = parse_sdf(std::string_view(testsupport::methane_sdf())).molecules[0];
    FeatureScheme scheme;
    scheme.vocabulary = {"H", "C", "N", "O"};
    const Graph3D f = featurize_nodes(methane, scheme);
    ASSERT_EQ(f.node_features.cols(), 6u);
    // Layout: one-hot over the vocabulary, unknown slot, bond degree.
    const std::vector<double> carbon{0, 1, 0, 0, 0, 4};
    const std::vector<double> hydrogen{1, 0, 0, 0, 0, 1};
    for (std::size_t c = 0; c < 6; ++c) {
        EXPECT_EQ(f.node_features(0, c), carbon[c]);
        EXPECT_EQ(f.node_features(1, c), hydrogen[c]);
    }
}

TEST(Featurize, UnknownElementUsesReservedSlotAndWarns) {
    Graph3D g = testsupport::chain4();
    g.atoms[2].element = "S";
    g.atoms[2].atomic_number = 16;
    FeatureScheme scheme;
    scheme.vocabulary = {"H", "C", "N", "O"};
    std::vector<std::string> warnings;
    const Graph3D f = featurize_nodes(g, scheme, &warnings);
    EXPECT_EQ(warnings.size(), 1u);
    EXPECT_EQ(f.node_features(2, scheme.unknown_slot()), 1.0);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(f.node_features(2, c), 0.0);
    EXPECT_EQ(f.node_features(2, scheme.degree_slot()), 2.0);
}

TEST(Featurize, VocabularyIsSortedByAtomicNumberAndDimensionIsConstant) {
    const auto mols = random_dataset(30, 4);
    const FeatureScheme s = FeatureScheme::fit(mols);
    for (std::size_t i = 1; i < s.vocabulary.size(); ++i) {
        EXPECT_LT(atomic_number(s.vocabulary[i - 1]), atomic_number(s.vocabulary[i]));
    }
    for (const Graph3D& g : mols) EXPECT_EQ(g.node_features.cols(), s.dimension());
}

TEST(Split, PublishedSizesArePartitionedExactly) {
    for (auto [n, sizes] : {std::pair{std::size_t{1127}, SplitSizes{901, 113, 113}},
                            std::pair{std::size_t{639}, SplitSizes{510, 65, 64}}}) {
        const SplitIndices s = split_indices(n, sizes, 0);
        EXPECT_EQ(s.train.size(), sizes.train);
        EXPECT_EQ(s.val.size(), sizes.val);
        EXPECT_EQ(s.test.size(), sizes.test);
        std::set<std::size_t> all;
        for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
        EXPECT_EQ(all.size(), n);
    }
}

TEST(Split, OversizedRequestIsAnError) {
    const auto mols = random_dataset(5, 1);
    EXPECT_THROW(split_dataset(mols, {10, 0, 0}, 0), ConfigError);
}

TEST(Split, PureFunctionOfSeedAndDisjoint) {
    const auto a = split_indices(200, {150, 25, 25}, 7);
    const auto b = split_indices(200, {150, 25, 25}, 7);
    const auto c = split_indices(200, {150, 25, 25}, 8);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.val, b.val);
    EXPECT_EQ(a.test, b.test);
    EXPECT_NE(a.train, c.train);
    std::set<std::size_t> seen;
    for (const auto* part : {&a.train, &a.val, &a.test})
        for (std::size_t i : *part) EXPECT_TRUE(seen.insert(i).second);
}

TEST(Split, ExplicitFileOverridesAndIsValidated) {
    const auto j = nlohmann::json::parse(R"({"train":[3,1],"val":[0],"test":[2]})");
    const SplitIndices s = split_indices_from_json(j, 4);
    EXPECT_EQ(s.train, (std::vector<std::size_t>{3, 1}));
    EXPECT_THROW(split_indices_from_json(nlohmann::json::parse(R"({"train":[1,1],"val":[],"test":[]})"), 4),
                 ConfigError);
    EXPECT_THROW(split_indices_from_json(nlohmann::json::parse(R"({"train":[9],"val":[],"test":[]})"), 4),
                 ConfigError);
}

TEST(JsonLines, RoundTripIsBitExact) {
    std::vector<Graph3D> mols = random_dataset(20, 11);
    mols.push_back(parse_sdf(std::string_view(testsupport::methane_sdf())).molecules[0]);
    mols.back().target.reset();
    std::stringstream buf;
    write_jsonl(buf, mols);
    const std::vector<Graph3D> back = read_jsonl(buf);
    ASSERT_EQ(back.size(), mols.size());
    for (std::size_t m = 0; m < mols.size(); ++m) {
        EXPECT_EQ(back[m].id, mols[m].id);
        EXPECT_EQ(back[m].bonds, mols[m].bonds);
        EXPECT_EQ(back[m].target, mols[m].target);
        ASSERT_EQ(back[m].atoms.size(), mols[m].atoms.size());
        for (std::size_t i = 0; i < mols[m].atoms.size(); ++i) {
            EXPECT_EQ(back[m].atoms[i].element, mols[m].atoms[i].element);
            EXPECT_EQ(back[m].atoms[i].atomic_number, mols[m].atoms[i].atomic_number);
            for (int k = 0; k < 3; ++k) EXPECT_EQ(back[m].atoms[i].position[k], mols[m].atoms[i].position[k]);
        }
    }
}

TEST(JsonLines, BadLineNamesItsNumber) {
    std::istringstream in("{\"id\":\"a\",\"atoms\":[],\"bonds\":[]}\nnot json\n");
    try {
        read_jsonl(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}
