#pragma once

#include <array>
#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include "grec/graph/hetero_graph.hpp"
#include "grec/numeric/matrix.hpp"
#include "grec/numeric/rng.hpp"

namespace grec::fixtures {

inline std::vector<std::string> node_names(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
  return ids;
}

// Random multi-relation graph with roughly `avg_degree` incident edges per node.
inline HeteroGraph random_graph(std::size_t n, double avg_degree, std::uint64_t seed) {
  Rng rng(seed);
  std::array<std::vector<WeightedEdge>, kNumRelations> edges;
  const auto m = static_cast<std::size_t>(static_cast<double>(n) * avg_degree / 2.0);
  std::array<std::unordered_set<std::uint64_t>, kNumRelations> seen;
  for (std::size_t i = 0; i < m && n > 1; ++i) {
    const auto r = rng.below(kNumRelations);
    auto p = static_cast<NodeId>(rng.below(n));
    auto q = static_cast<NodeId>(rng.below(n));
    if (p == q) continue;
    if (p > q) std::swap(p, q);
    const auto key = (static_cast<std::uint64_t>(p) << 32) | q;
    if (!seen[r].insert(key).second) continue;
    edges[r].push_back({p, q, static_cast<std::uint32_t>(1 + rng.below(5))});
  }
  return HeteroGraph::from_edges(node_names(n), std::move(edges));
}

inline HeteroGraph path_graph(std::size_t n, InteractionType rel = InteractionType::Click) {
  std::array<std::vector<WeightedEdge>, kNumRelations> edges;
  for (NodeId i = 0; i + 1 < n; ++i) edges[relation_index(rel)].push_back({i, i + 1, 1});
  return HeteroGraph::from_edges(node_names(n), std::move(edges));
}

// Two clusters joined only by intra-cluster co-purchase edges. Features are
// a per-cluster prototype plus isotropic noise.
template <typename T>
struct TwoClusterBenchmark {
  HeteroGraph graph;
  DenseMatrix<T> features;
  std::vector<int> labels;
};

template <typename T>
TwoClusterBenchmark<T> two_cluster_benchmark(std::size_t per_cluster, std::size_t dim,
                                             std::size_t degree, double noise,
                                             std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 2 * per_cluster;
  TwoClusterBenchmark<T> b;
  b.features = DenseMatrix<T>(n, dim);
  std::array<std::vector<double>, 2> proto;
  for (auto& p : proto) {
    for (std::size_t k = 0; k < dim; ++k) p.push_back(rng.normal());
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int c = i < per_cluster ? 0 : 1;
    b.labels.push_back(c);
    for (std::size_t k = 0; k < dim; ++k) {
      b.features(i, k) = static_cast<T>(proto[c][k] + noise * rng.normal());
    }
  }
  std::array<std::vector<WeightedEdge>, kNumRelations> edges;
  std::unordered_set<std::uint64_t> seen;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i < per_cluster ? 0 : per_cluster;
    for (std::size_t e = 0; e < degree; ++e) {
      auto p = static_cast<NodeId>(i);
      auto q = static_cast<NodeId>(base + rng.below(per_cluster));
      if (p == q) continue;
      if (p > q) std::swap(p, q);
      if (!seen.insert((static_cast<std::uint64_t>(p) << 32) | q).second) continue;
      edges[relation_index(InteractionType::Purchase)].push_back(
          {p, q, static_cast<std::uint32_t>(1 + rng.below(3))});
    }
  }
  b.graph = HeteroGraph::from_edges(node_names(n), std::move(edges));
  return b;
}

// Mean pairwise distance inside clusters divided by the mean across them.
template <typename T>
double intra_inter_ratio(const DenseMatrix<T>& emb, const std::vector<int>& labels) {
  double intra = 0, inter = 0;
  std::size_t ni = 0, nx = 0;
  for (std::size_t a = 0; a < emb.rows(); ++a) {
    for (std::size_t b = a + 1; b < emb.rows(); ++b) {
      const double d = std::sqrt(static_cast<double>(squared_distance<T>(emb.row(a), emb.row(b))));
      if (labels[a] == labels[b]) {
        intra += d;
        ++ni;
      } else {
        inter += d;
        ++nx;
      }
    }
  }
  return (intra / static_cast<double>(ni)) / (inter / static_cast<double>(nx));
}

}  // namespace grec::fixtures
