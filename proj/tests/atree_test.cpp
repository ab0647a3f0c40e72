#include <gtest/gtest.h>

#include <random>
#include <set>

#include "photoreport/atree.hpp"
#include "support/oracles.hpp"

namespace photoreport {
namespace {

using testing::make_submission;
using testing::visual_triple;

const std::vector<LayerSpec> kVisualOnly = {{LayerKind::Visual, 10}};
const std::vector<LayerSpec> kThreeLayers = {{LayerKind::Time, 300}, {LayerKind::Position, 0.5}, {LayerKind::Visual, 10}};

TEST(ATree, TripleIsSimilarAsConstructed) {
  auto t = visual_triple();
  EXPECT_TRUE(similar_visual(t.a.keypoints, t.b.keypoints, 10));
  EXPECT_TRUE(similar_visual(t.b.keypoints, t.c.keypoints, 10));
  EXPECT_FALSE(similar_visual(t.a.keypoints, t.c.keypoints, 10));
  EXPECT_FALSE(similar_visual(t.c.keypoints, t.a.keypoints, 10));
}

TEST(ATree, FirstInsertGrowsOneNodePerLayer) {
  ATree tree("t", kThreeLayers);
  EXPECT_EQ(tree.node_count(), 1u);
  auto path = tree.insert(make_submission("s1", 0, {1, 1}, {}));
  EXPECT_EQ(tree.node_count(), 4u);
  EXPECT_EQ(tree.group_count(), 1u);
  EXPECT_EQ(path.branch, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_EQ(path.group, 0u);
}

TEST(ATree, StreamOrderABC) {
  auto t = visual_triple();
  ATree tree("t", kVisualOnly);
  tree.insert(t.a);
  tree.insert(t.b);
  tree.insert(t.c);
  EXPECT_EQ(tree.partition(), (std::vector<std::vector<std::string>>{{"A", "B"}, {"C"}}));
}

TEST(ATree, StreamOrderBAC) {
  auto t = visual_triple();
  ATree tree("t", kVisualOnly);
  tree.insert(t.b);
  tree.insert(t.a);
  tree.insert(t.c);
  EXPECT_EQ(tree.partition(), (std::vector<std::vector<std::string>>{{"B", "A", "C"}}));
  EXPECT_EQ(tree.handover(RepresentativePolicy::First).representatives, std::vector<std::string>{"B"});
}

TEST(ATree, SamePlaceAndViewButFourHundredSecondsApartStaysSeparate) {
  std::mt19937_64 rng(3);
  auto kp = testing::random_rows(rng, 20, 128);
  ATree tree("t", kThreeLayers);
  tree.insert(make_submission("early", 1000, {36.8, 10.18}, kp));
  tree.insert(make_submission("late", 1400, {36.8, 10.18}, kp));
  EXPECT_EQ(tree.group_count(), 2u);
}

TEST(ATree, BestMatchPrefersClosestAnchorThenOldest) {
  ATree tree("t", {{LayerKind::Time, 100}});
  tree.insert(make_submission("a", 0));
  tree.insert(make_submission("b", 150));  // too far from a: new anchor
  auto p = tree.insert(make_submission("c", 90));  // matches both, closer to b
  EXPECT_EQ(p.branch[0], 1u);
  auto q = tree.insert(make_submission("d", 75));  // equidistant: oldest wins
  EXPECT_EQ(q.branch[0], 0u);
}

TEST(ATree, BoundaryDistanceIsSimilar) {
  ATree tree("t", {{LayerKind::Time, 300}});
  tree.insert(make_submission("a", 1000));
  tree.insert(make_submission("b", 1300));
  EXPECT_EQ(tree.group_count(), 1u);
}

TEST(ATree, SealedTreeRefusesInsert) {
  ATree tree("t", kVisualOnly);
  tree.seal();
  EXPECT_THROW(tree.insert(make_submission("a")), std::logic_error);
}

TEST(Handover, EmptyTree) {
  ATree tree("t", kVisualOnly);
  auto h = tree.handover(RepresentativePolicy::Last);
  EXPECT_TRUE(h.representatives.empty());
  EXPECT_EQ(h.redundancy_ratio, 0.0);
}

TEST(Handover, PoliciesOnTheTriple) {
  auto t = visual_triple();
  ATree abc("t", kVisualOnly);
  for (const auto* s : {&t.a, &t.b, &t.c}) abc.insert(*s);
  auto last = abc.handover(RepresentativePolicy::Last);
  EXPECT_EQ(last.representatives, (std::vector<std::string>{"B", "C"}));
  EXPECT_EQ(last.group_sizes, (std::vector<std::size_t>{2, 1}));
  EXPECT_DOUBLE_EQ(last.redundancy_ratio, 1.0 / 3.0);

  ATree bac("t", kVisualOnly);
  for (const auto* s : {&t.b, &t.a, &t.c}) bac.insert(*s);
  auto first = bac.handover(RepresentativePolicy::First);
  EXPECT_EQ(first.representatives, std::vector<std::string>{"B"});
  EXPECT_DOUBLE_EQ(first.redundancy_ratio, 2.0 / 3.0);
}

// Random one-dimensional streams: anchors are pairwise dissimilar, nothing is
// lost, and a replay rebuilds the same tree.
TEST(ATreeProperties, RandomStreams) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<Submission> stream;
    for (std::size_t i = 0; i < n; ++i)
      stream.push_back(make_submission("s" + std::to_string(i), static_cast<Timestamp>(rng() % 2000),
                                       GeoPoint(36.8 + double(rng() % 100) * 1e-3, 10.18)));
    const std::vector<LayerSpec> layers =
        trial % 2 ? std::vector<LayerSpec>{{LayerKind::Time, 150}}
                  : std::vector<LayerSpec>{{LayerKind::Position, 1.0}, {LayerKind::Time, 200}};
    ATree tree("t", layers);
    for (const auto& s : stream) tree.insert(s);

    std::size_t total = 0;
    std::set<std::string> seen;
    for (const auto& g : tree.partition()) {
      EXPECT_FALSE(g.empty());
      total += g.size();
      seen.insert(g.begin(), g.end());
    }
    EXPECT_EQ(total, n);
    EXPECT_EQ(seen.size(), n);
    EXPECT_EQ(tree.insertion_log().size(), n);
    EXPECT_LE(tree.group_count(), n);

    if (layers.size() == 1) {
      auto anchors = tree.anchors_at(1);
      std::map<std::string, const Submission*> by_id;
      for (const auto& s : stream) by_id[s.submission_id] = &s;
      for (std::size_t i = 0; i < anchors.size(); ++i)
        for (std::size_t j = i + 1; j < anchors.size(); ++j)
          EXPECT_FALSE(similar_under(layers[0], *by_id[anchors[i]], *by_id[anchors[j]], {}));
    }

    ATree replay("t", layers);
    for (const auto& s : stream) replay.insert(s);
    EXPECT_TRUE(replay == tree);
    EXPECT_EQ(replay.snapshot(), tree.snapshot());
  }
}

TEST(ATreeProperties, AllPairwiseDissimilarGivesOneGroupEach) {
  ATree tree("t", {{LayerKind::Time, 10}});
  for (int i = 0; i < 8; ++i) tree.insert(make_submission("s" + std::to_string(i), i * 100));
  EXPECT_EQ(tree.group_count(), 8u);
}

TEST(Snapshot, NestedShape) {
  ATree tree("t", {{LayerKind::Time, 10}, {LayerKind::Position, 1}});
  tree.insert(make_submission("a", 0));
  tree.insert(make_submission("b", 5));
  auto j = tree.snapshot();
  EXPECT_EQ(j["root"]["layer_index"], 0);
  EXPECT_TRUE(j["root"]["anchor"].is_null());
  const auto& l1 = j["root"]["children"][0];
  EXPECT_EQ(l1["layer_index"], 1);
  EXPECT_EQ(l1["anchor"], "a");
  const auto& l2 = l1["children"][0];
  EXPECT_EQ(l2["layer_index"], 2);
  const auto& leaf = l2["children"][0];
  EXPECT_EQ(leaf["layer_index"], 3);
  EXPECT_EQ(leaf["members"], (Json{"a", "b"}));
  EXPECT_EQ(j["insertion_log"].size(), 2u);
  EXPECT_EQ(j["group_count"], 1);
}

}  // namespace
}  // namespace photoreport
