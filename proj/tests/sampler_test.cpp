#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "grec/sampler/sampler.hpp"
#include "test_graphs.hpp"

namespace grec {
namespace {

using fixtures::path_graph;
using fixtures::random_graph;

TEST(PartitionNodes, SizesFollowBatchSize) {
  Rng rng(1);
  const auto batches = partition_nodes(10, 3, rng);
  ASSERT_EQ(batches.size(), 4u);
  EXPECT_EQ(batches[0].size(), 3u);
  EXPECT_EQ(batches[1].size(), 3u);
  EXPECT_EQ(batches[2].size(), 3u);
  EXPECT_EQ(batches[3].size(), 1u);
  std::set<NodeId> all;
  for (const auto& b : batches) all.insert(b.begin(), b.end());
  EXPECT_EQ(all.size(), 10u);
}

TEST(PartitionNodes, LargeBatchGivesSingleBatch) {
  Rng rng(1);
  EXPECT_EQ(partition_nodes(7, 7, rng).size(), 1u);
  EXPECT_EQ(partition_nodes(7, 100, rng).size(), 1u);
}

TEST(PartitionNodes, DeterministicForSeed) {
  Rng a(77), b(77);
  EXPECT_EQ(partition_nodes(50, 8, a), partition_nodes(50, 8, b));
}

TEST(SampleSubgraph, ThreeThenTwoBudget) {
  const auto g = random_graph(200, 12, 4);
  SamplerConfig cfg{1, {3, 2}, false, 0};
  for (NodeId seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const std::vector<NodeId> seeds{seed};
    const auto b = sample_subgraph(g, seeds, cfg, rng);
    std::size_t hop1 = 0, hop2 = 0;
    for (const auto& list : b.edges) {
      for (const auto& e : list) (e.hop == 1 ? hop1 : hop2)++;
    }
    EXPECT_LE(hop1, 3u);
    EXPECT_LE(hop2, 6u);
    EXPECT_LE(b.total_edges(), cfg.edges_per_seed_bound());
  }
  EXPECT_EQ(cfg.edges_per_seed_bound(), 9u);
}

TEST(SampleSubgraph, EmptyBudgetListKeepsSeedsOnly) {
  const auto g = random_graph(50, 6, 2);
  SamplerConfig cfg{4, {}, false, 0};
  Rng rng(3);
  const std::vector<NodeId> seeds{1, 2, 3};
  const auto b = sample_subgraph(g, seeds, cfg, rng);
  EXPECT_EQ(b.all_nodes, seeds);
  EXPECT_EQ(b.total_edges(), 0u);
}

TEST(SampleSubgraph, PathGraphEnumeration) {
  // A-B-C-D, seed A, [1, 1]: hop 1 must take A-B; hop 2 from B takes A-B or B-C.
  const auto g = path_graph(4);
  SamplerConfig cfg{1, {1, 1}, false, 0};
  std::set<std::vector<NodeId>> outcomes;
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng(s);
    const std::vector<NodeId> seeds{0};
    auto b = sample_subgraph(g, seeds, cfg, rng);
    std::vector<NodeId> nodes = b.all_nodes;
    std::sort(nodes.begin(), nodes.end());
    outcomes.insert(nodes);
    ASSERT_EQ(b.edges[0].size(), 2u);
    EXPECT_EQ(b.edges[0][0].hop, 1);
    EXPECT_EQ(b.edges[0][0].to, 1u);
  }
  const std::set<std::vector<NodeId>> expected{{0, 1}, {0, 1, 2}};
  EXPECT_EQ(outcomes, expected);
}

TEST(SampleSubgraph, IsolatedSeedsYieldNoEdges) {
  std::array<std::vector<WeightedEdge>, kNumRelations> e;
  const auto g = HeteroGraph::from_edges(fixtures::node_names(3), e);
  Rng rng(0);
  const std::vector<NodeId> seeds{0, 2};
  EXPECT_EQ(sample_subgraph(g, seeds, SamplerConfig{}, rng).total_edges(), 0u);
}

TEST(SampleSubgraph, NoPhantomEdges) {
  const auto g = random_graph(300, 10, 9);
  SamplerConfig cfg{16, {4, 3}, true, 0};
  Rng rng(5);
  const auto batches = partition_nodes(g.num_nodes(), cfg.batch_size, rng);
  for (const auto& seeds : batches) {
    const auto b = sample_subgraph(g, seeds, cfg, rng);
    const std::set<NodeId> nodes(b.all_nodes.begin(), b.all_nodes.end());
    for (auto rel : kAllInteractionTypes) {
      for (const auto& e : b.edges[relation_index(rel)]) {
        EXPECT_EQ(g.weight(rel, e.from, e.to), e.weight);
        EXPECT_TRUE(nodes.contains(e.from));
        EXPECT_TRUE(nodes.contains(e.to));
      }
    }
    EXPECT_LE(b.total_edges(), cfg.max_batch_edges());
    EXPECT_LE(b.all_nodes.size(), cfg.max_batch_nodes());
  }
}

TEST(SampleSubgraph, WeightedSamplingFavorsHeavySpoke) {
  std::array<std::vector<WeightedEdge>, kNumRelations> e;
  e[3].push_back({0, 1, 100});
  for (NodeId s = 2; s <= 10; ++s) e[3].push_back({0, s, 1});
  const auto g = HeteroGraph::from_edges(fixtures::node_names(11), e);
  SamplerConfig cfg{1, {1}, true, 0};
  const int trials = 10000;
  int heavy = 0;
  Rng rng(2024);
  const std::vector<NodeId> seeds{0};
  for (int t = 0; t < trials; ++t) {
    const auto b = sample_subgraph(g, seeds, cfg, rng);
    heavy += b.edges[3].at(0).to == 1;
  }
  const double p = 100.0 / 109.0;
  const double sigma = std::sqrt(trials * p * (1 - p));
  EXPECT_NEAR(heavy, trials * p, 3 * sigma);
}

TEST(BatchStream, SmallGraphSingleBatch) {
  const auto g = random_graph(100, 4, 1);
  BatchStream stream(g, SamplerConfig{128, {8, 8, 8}, false, 3});
  stream.begin_epoch(0);
  EXPECT_EQ(stream.batches_in_epoch(), 1u);
  EXPECT_TRUE(stream.next().has_value());
  EXPECT_FALSE(stream.next().has_value());
}

TEST(BatchStream, DeterministicAndReshuffledPerEpoch) {
  const auto g = random_graph(500, 6, 1);
  SamplerConfig cfg{64, {3, 2}, true, 21};
  auto run = [&](std::uint64_t epoch) {
    BatchStream s(g, cfg);
    s.begin_epoch(epoch);
    std::vector<std::vector<NodeId>> seq;
    while (auto b = s.next()) seq.push_back(b->all_nodes);
    return seq;
  };
  EXPECT_EQ(run(0), run(0));
  EXPECT_EQ(run(1), run(1));
  EXPECT_NE(run(0), run(1));
}

TEST(BatchStream, BoundDoesNotGrowWithGraphSize) {
  SamplerConfig cfg{32, {3, 3}, false, 1};
  for (std::size_t n : {1000u, 20000u}) {
    const auto g = random_graph(n, 12, n);
    BatchStream s(g, cfg);
    s.begin_epoch(0);
    for (std::size_t i = 0; i < std::min<std::size_t>(s.batches_in_epoch(), 20); ++i) {
      const auto b = s.sample(i);
      EXPECT_LE(b.total_edges(), cfg.max_batch_edges());
      EXPECT_LE(b.all_nodes.size(), cfg.max_batch_nodes());
    }
  }
}

}  // namespace
}  // namespace grec
