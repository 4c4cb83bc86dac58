#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "grec/error.hpp"
#include "grec/graph/hetero_graph.hpp"
#include "grec/numeric/rng.hpp"

namespace grec {

struct SamplerConfig {
  std::size_t batch_size = 128;
  std::vector<std::size_t> num_neighbors{8, 8, 8};  // per-hop edge budget per frontier node
  bool weighted = false;                            // P(edge) proportional to its weight
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw InputError("SamplerConfig: batch_size must be >= 1");
    for (auto k : num_neighbors) {
      if (k == 0) throw InputError("SamplerConfig: num_neighbors entries must be >= 1");
    }
  }

  // sum_k prod_{j<=k} num_neighbors[j]: the most edges one seed can add.
  std::size_t edges_per_seed_bound() const noexcept {
    std::size_t total = 0, prod = 1;
    for (auto k : num_neighbors) {
      prod *= k;
      total += prod;
    }
    return total;
  }
  std::size_t max_batch_edges() const noexcept { return batch_size * edges_per_seed_bound(); }
  std::size_t max_batch_nodes() const noexcept {
    return batch_size * (1 + edges_per_seed_bound());
  }

  bool operator==(const SamplerConfig&) const = default;
};

struct SampledEdge {
  NodeId from = 0;  // node that was expanded
  NodeId to = 0;    // induced endpoint
  std::uint32_t weight = 0;
  std::uint8_t hop = 0;  // 1-based expansion hop
};

// Sampled subgraph. Only edges traversed by the sampler are present, even if
// other graph edges join batch nodes. all_nodes lists the seeds first, then
// induced nodes in discovery order.
struct BatchGraph {
  std::vector<NodeId> seed_nodes;
  std::vector<NodeId> all_nodes;
  std::array<std::vector<SampledEdge>, kNumRelations> edges;

  std::size_t total_edges() const noexcept {
    std::size_t n = 0;
    for (const auto& e : edges) n += e.size();
    return n;
  }

  std::unordered_map<NodeId, std::uint32_t> local_index() const {
    std::unordered_map<NodeId, std::uint32_t> idx;
    idx.reserve(all_nodes.size());
    for (std::uint32_t i = 0; i < all_nodes.size(); ++i) idx.emplace(all_nodes[i], i);
    return idx;
  }

  // Distinct undirected edges of one relation, in graph node ids (p < q),
  // sorted. A pair traversed more than once appears once.
  std::vector<WeightedEdge> distinct_edges(InteractionType rel) const {
    std::vector<WeightedEdge> out;
    for (const auto& e : edges[relation_index(rel)]) {
      out.push_back({std::min(e.from, e.to), std::max(e.from, e.to), e.weight});
    }
    std::sort(out.begin(), out.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
      return std::pair(a.p, a.q) < std::pair(b.p, b.q);
    });
    out.erase(std::unique(out.begin(), out.end(),
                          [](const WeightedEdge& a, const WeightedEdge& b) {
                            return a.p == b.p && a.q == b.q;
                          }),
              out.end());
    return out;
  }
};

// Shuffled partition into batches of batch_size (last one possibly smaller).
inline std::vector<std::vector<NodeId>> partition_nodes(std::span<const NodeId> nodes,
                                                        std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw InputError("partition_nodes: batch_size must be >= 1");
  std::vector<NodeId> order(nodes.begin(), nodes.end());
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<NodeId>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const auto end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

inline std::vector<std::vector<NodeId>> partition_nodes(std::size_t num_nodes,
                                                        std::size_t batch_size, Rng& rng) {
  std::vector<NodeId> nodes(num_nodes);
  std::iota(nodes.begin(), nodes.end(), NodeId{0});
  return partition_nodes(nodes, batch_size, rng);
}

namespace detail {

// Picks min(k, |incident|) distinct positions. Weighted mode draws
// sequentially without replacement with probability proportional to weight,
// realized via exponential keys log(u) / w (largest keys win).
inline void choose_incident(std::span<const IncidentEdge> incident, std::size_t k, bool weighted,
                            Rng& rng, std::vector<std::uint32_t>& picks,
                            std::vector<std::pair<double, std::uint32_t>>& keys) {
  picks.clear();
  const std::size_t n = incident.size();
  if (n == 0) return;
  if (k >= n) {
    for (std::uint32_t i = 0; i < n; ++i) picks.push_back(i);
    return;
  }
  if (!weighted) {
    picks.resize(n);
    std::iota(picks.begin(), picks.end(), 0u);
    for (std::size_t i = 0; i < k; ++i) std::swap(picks[i], picks[i + rng.below(n - i)]);
    picks.resize(k);
    return;
  }
  keys.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    double u = rng.uniform();
    while (u == 0.0) u = rng.uniform();
    keys[i] = {std::log(u) / static_cast<double>(incident[i].weight), i};
  }
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end(),
                    [](const auto& a, const auto& b) {
                      return a.first > b.first || (a.first == b.first && a.second < b.second);
                    });
  for (std::size_t i = 0; i < k; ++i) picks.push_back(keys[i].second);
}

}  // namespace detail

// Iterative expansion per seed: at hop k each frontier node contributes up to
// num_neighbors[k] of its incident edges (pooled over relations, sampled
// without replacement); the far endpoints form the next frontier.
inline BatchGraph sample_subgraph(const HeteroGraph& graph, std::span<const NodeId> seeds,
                                  const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  BatchGraph batch;
  batch.seed_nodes.assign(seeds.begin(), seeds.end());
  std::unordered_set<NodeId> in_batch;
  for (auto s : seeds) {
    if (s >= graph.num_nodes()) throw InputError("sample_subgraph: seed outside graph");
    if (in_batch.insert(s).second) batch.all_nodes.push_back(s);
  }
  std::vector<NodeId> frontier, next;
  std::vector<std::uint32_t> picks;
  std::vector<std::pair<double, std::uint32_t>> keys;
  std::unordered_set<NodeId> next_seen;
  for (auto seed : seeds) {
    frontier.assign(1, seed);
    for (std::size_t hop = 0; hop < cfg.num_neighbors.size(); ++hop) {
      next.clear();
      next_seen.clear();
      for (auto node : frontier) {
        const auto incident = graph.incident(node);
        detail::choose_incident(incident, cfg.num_neighbors[hop], cfg.weighted, rng, picks, keys);
        for (auto pick : picks) {
          const auto& inc = incident[pick];
          batch.edges[relation_index(inc.relation)].push_back(
              {node, inc.neighbor, inc.weight, static_cast<std::uint8_t>(hop + 1)});
          if (in_batch.insert(inc.neighbor).second) batch.all_nodes.push_back(inc.neighbor);
          if (next_seen.insert(inc.neighbor).second) next.push_back(inc.neighbor);
        }
      }
      frontier.swap(next);
      if (frontier.empty()) break;
    }
  }
  return batch;
}

// Epoch driver: partition_nodes then sample_subgraph per batch. The
// partition and every batch draw from streams derived from (seed, epoch,
// batch index), so batches can be sampled independently in any order.
class BatchStream {
 public:
  BatchStream(const HeteroGraph& graph, SamplerConfig cfg) : graph_(&graph), cfg_(std::move(cfg)) {
    cfg_.validate();
  }

  void begin_epoch(std::uint64_t epoch) {
    epoch_ = epoch;
    Rng rng(derive_seed(cfg_.seed, {epoch, 0xB47C4ULL}));
    batches_ = partition_nodes(graph_->num_nodes(), cfg_.batch_size, rng);
    position_ = 0;
  }

  std::size_t batches_in_epoch() const noexcept { return batches_.size(); }

  BatchGraph sample(std::size_t batch_index) const {
    Rng rng(derive_seed(cfg_.seed, {epoch_, batch_index + 1}));
    return sample_subgraph(*graph_, batches_.at(batch_index), cfg_, rng);
  }

  std::optional<BatchGraph> next() {
    if (position_ >= batches_.size()) return std::nullopt;
    return sample(position_++);
  }

  const SamplerConfig& config() const noexcept { return cfg_; }

 private:
  const HeteroGraph* graph_;
  SamplerConfig cfg_;
  std::uint64_t epoch_ = 0;
  std::vector<std::vector<NodeId>> batches_;
  std::size_t position_ = 0;
};

}  // namespace grec
