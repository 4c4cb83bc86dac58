#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "grec/error.hpp"
#include "grec/graph/events.hpp"
#include "grec/numeric/binary_io.hpp"
#include "grec/numeric/rng.hpp"

namespace grec {

using NodeId = std::uint32_t;
inline constexpr std::size_t kNumRelations = kNumInteractionTypes;

// Undirected co-interaction edge, stored once with p < q.
struct WeightedEdge {
  NodeId p = 0;
  NodeId q = 0;
  std::uint32_t weight = 0;
  bool operator==(const WeightedEdge&) const = default;
};

struct IncidentEdge {
  NodeId neighbor = 0;
  std::uint32_t weight = 0;
  InteractionType relation = InteractionType::Click;
};

using NodePair = std::pair<NodeId, NodeId>;

// Item nodes plus one weighted edge set per interaction type. Immutable after
// construction; edges are canonical (p < q, sorted) so equal edge sets give
// equal graphs regardless of input order.
class HeteroGraph {
 public:
  HeteroGraph() = default;

  static HeteroGraph from_edges(std::vector<std::string> item_ids,
                                std::array<std::vector<WeightedEdge>, kNumRelations> edges) {
    HeteroGraph g;
    g.item_ids_ = std::move(item_ids);
    for (NodeId n = 0; n < g.item_ids_.size(); ++n) {
      if (!g.index_.emplace(g.item_ids_[n], n).second) {
        throw InputError("HeteroGraph: duplicate item id '" + g.item_ids_[n] + "'");
      }
    }
    const auto n = g.item_ids_.size();
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      auto& list = edges[r];
      for (auto& e : list) {
        if (e.p == e.q) throw InputError("HeteroGraph: self-loop");
        if (e.p >= n || e.q >= n) throw InputError("HeteroGraph: edge endpoint out of range");
        if (e.weight == 0) throw InputError("HeteroGraph: edge weight must be >= 1");
        if (e.p > e.q) std::swap(e.p, e.q);
      }
      std::sort(list.begin(), list.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
        return std::pair(a.p, a.q) < std::pair(b.p, b.q);
      });
      for (std::size_t i = 1; i < list.size(); ++i) {
        if (list[i].p == list[i - 1].p && list[i].q == list[i - 1].q) {
          throw InputError("HeteroGraph: duplicate edge");
        }
      }
      g.edges_[r] = std::move(list);
    }
    g.build_adjacency();
    return g;
  }

  std::size_t num_nodes() const noexcept { return item_ids_.size(); }
  const std::string& item_id(NodeId n) const { return item_ids_.at(n); }
  const std::vector<std::string>& item_ids() const noexcept { return item_ids_; }
  std::optional<NodeId> find(const std::string& item_id) const {
    auto it = index_.find(item_id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const WeightedEdge> edges(InteractionType rel) const noexcept {
    return edges_[relation_index(rel)];
  }
  std::size_t num_edges(InteractionType rel) const noexcept { return edges(rel).size(); }
  std::size_t total_edges() const noexcept {
    std::size_t n = 0;
    for (const auto& e : edges_) n += e.size();
    return n;
  }

  // 0 when absent. Symmetric in (p, q).
  std::uint32_t weight(InteractionType rel, NodeId p, NodeId q) const noexcept {
    if (p > q) std::swap(p, q);
    const auto& list = edges_[relation_index(rel)];
    auto it = std::lower_bound(list.begin(), list.end(), std::pair(p, q),
                               [](const WeightedEdge& e, const std::pair<NodeId, NodeId>& k) {
                                 return std::pair(e.p, e.q) < k;
                               });
    if (it == list.end() || it->p != p || it->q != q) return 0;
    return it->weight;
  }
  bool has_edge(InteractionType rel, NodeId p, NodeId q) const noexcept {
    return p != q && weight(rel, p, q) != 0;
  }

  // Edges incident to `node` across all relations, ordered by (relation, neighbor).
  std::span<const IncidentEdge> incident(NodeId node) const noexcept {
    return {incident_.data() + offsets_[node], offsets_[node + 1] - offsets_[node]};
  }

  bool operator==(const HeteroGraph& o) const {
    return item_ids_ == o.item_ids_ && edges_ == o.edges_;
  }

 private:
  void build_adjacency() {
    const auto n = num_nodes();
    std::vector<std::size_t> degree(n, 0);
    for (const auto& list : edges_) {
      for (const auto& e : list) {
        ++degree[e.p];
        ++degree[e.q];
      }
    }
    offsets_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + degree[i];
    incident_.resize(offsets_[n]);
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      const auto rel = static_cast<InteractionType>(r);
      for (const auto& e : edges_[r]) {
        incident_[cursor[e.p]++] = {e.q, e.weight, rel};
        incident_[cursor[e.q]++] = {e.p, e.weight, rel};
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::sort(incident_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
                incident_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]),
                [](const IncidentEdge& a, const IncidentEdge& b) {
                  return std::pair(a.relation, a.neighbor) < std::pair(b.relation, b.neighbor);
                });
    }
  }

  std::vector<std::string> item_ids_;
  std::unordered_map<std::string, NodeId> index_;
  std::array<std::vector<WeightedEdge>, kNumRelations> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<IncidentEdge> incident_;
};

// Half-open [begin, end) in UTC seconds.
struct TimeWindow {
  std::int64_t begin = std::numeric_limits<std::int64_t>::min();
  std::int64_t end = std::numeric_limits<std::int64_t>::max();

  bool contains(std::int64_t t) const noexcept { return t >= begin && t < end; }
  bool empty() const noexcept { return end <= begin; }
  static TimeWindow all() noexcept { return {}; }
  bool operator==(const TimeWindow&) const = default;
};

struct PairingConfig {
  enum class Mode { Window, Session };
  Mode mode = Mode::Window;
  // Session mode: a gap longer than this between a user's consecutive events
  // starts a new session; pairs only form within a session.
  std::int64_t session_gap_minutes = 30;
  bool operator==(const PairingConfig&) const = default;
};

namespace detail {

constexpr std::uint64_t pair_key(NodeId p, NodeId q) noexcept {
  if (p > q) std::swap(p, q);
  return (static_cast<std::uint64_t>(p) << 32) | q;
}

}  // namespace detail

// For each interaction type, connects two items when a user has events of
// that type on both inside the window; the weight is the number of distinct
// such users. Types are never mixed. Nodes are the in-window items in
// first-seen order.
inline HeteroGraph build_cointeraction_graph(std::span<const Event> events, TimeWindow window,
                                             PairingConfig pairing = {}) {
  if (window.empty()) throw InputError("build_cointeraction_graph: empty window");
  std::vector<std::string> ids;
  std::unordered_map<std::string, NodeId> node_of;
  std::unordered_map<std::string, std::uint32_t> user_of;
  struct Touch {
    std::int64_t t;
    std::size_t order;
    NodeId node;
  };
  std::vector<std::array<std::vector<Touch>, kNumRelations>> per_user;
  std::size_t order = 0;
  for (const auto& e : events) {
    if (!window.contains(e.timestamp)) continue;
    auto [nit, nnew] = node_of.try_emplace(e.item_id, static_cast<NodeId>(ids.size()));
    if (nnew) ids.push_back(e.item_id);
    auto [uit, unew] = user_of.try_emplace(e.user_id, static_cast<std::uint32_t>(per_user.size()));
    if (unew) per_user.emplace_back();
    per_user[uit->second][relation_index(e.kind)].push_back({e.timestamp, order++, nit->second});
  }

  std::array<std::vector<WeightedEdge>, kNumRelations> edges;
  std::vector<NodeId> distinct;
  std::unordered_set<std::uint64_t> user_pairs;
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    std::unordered_map<std::uint64_t, std::uint32_t> counts;
    for (auto& user : per_user) {
      auto& touches = user[r];
      if (touches.size() < 2) continue;
      user_pairs.clear();
      auto add_group = [&](std::size_t lo, std::size_t hi) {
        distinct.clear();
        for (std::size_t i = lo; i < hi; ++i) distinct.push_back(touches[i].node);
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        for (std::size_t a = 0; a < distinct.size(); ++a) {
          for (std::size_t b = a + 1; b < distinct.size(); ++b) {
            user_pairs.insert(detail::pair_key(distinct[a], distinct[b]));
          }
        }
      };
      if (pairing.mode == PairingConfig::Mode::Window) {
        add_group(0, touches.size());
      } else {
        std::sort(touches.begin(), touches.end(), [](const Touch& a, const Touch& b) {
          return std::pair(a.t, a.order) < std::pair(b.t, b.order);
        });
        const std::int64_t gap = pairing.session_gap_minutes * 60;
        std::size_t start = 0;
        for (std::size_t i = 1; i <= touches.size(); ++i) {
          if (i == touches.size() || touches[i].t - touches[i - 1].t > gap) {
            add_group(start, i);
            start = i;
          }
        }
      }
      for (auto key : user_pairs) ++counts[key];
    }
    edges[r].reserve(counts.size());
    for (const auto& [key, count] : counts) {
      edges[r].push_back({static_cast<NodeId>(key >> 32), static_cast<NodeId>(key & 0xFFFFFFFFu),
                          count});
    }
  }
  return HeteroGraph::from_edges(std::move(ids), std::move(edges));
}

// Uniform draws over node pairs that are not edges of `rel`. Duplicates
// across the sample are allowed.
inline std::vector<NodePair> negative_edge_sample(const HeteroGraph& graph, InteractionType rel,
                                                  std::size_t count, Rng& rng) {
  const std::uint64_t n = graph.num_nodes();
  if (n < 2) throw InputError("negative_edge_sample: graph needs at least 2 nodes");
  const std::uint64_t pairs = n * (n - 1) / 2;
  const std::uint64_t positives = graph.num_edges(rel);
  if (positives >= pairs) {
    throw InputError("negative_edge_sample: relation " + std::string(relation_name(rel)) +
                     " is complete, no non-edges exist");
  }
  std::vector<NodePair> out;
  out.reserve(count);
  if (positives * 2 > pairs) {
    std::vector<NodePair> complement;
    for (NodeId p = 0; p < n; ++p) {
      for (NodeId q = p + 1; q < n; ++q) {
        if (!graph.has_edge(rel, p, q)) complement.emplace_back(p, q);
      }
    }
    for (std::size_t i = 0; i < count; ++i) out.push_back(complement[rng.below(complement.size())]);
    return out;
  }
  while (out.size() < count) {
    NodeId p = static_cast<NodeId>(rng.below(n));
    NodeId q = static_cast<NodeId>(rng.below(n - 1));
    if (q >= p) ++q;
    if (p > q) std::swap(p, q);
    if (!graph.has_edge(rel, p, q)) out.emplace_back(p, q);
  }
  return out;
}

// Negative pairs restricted to `nodes` (positions into that list are
// returned). Empty when every pair among the nodes is an edge of `rel`.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> sample_non_edges_among(
    const HeteroGraph& graph, InteractionType rel, std::span<const NodeId> nodes,
    std::size_t count, Rng& rng) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  const std::uint64_t m = nodes.size();
  if (m < 2 || count == 0) return out;
  out.reserve(count);
  const std::size_t max_attempts = 64 * count + 64;
  std::size_t attempts = 0;
  while (out.size() < count && attempts < max_attempts) {
    ++attempts;
    auto a = static_cast<std::uint32_t>(rng.below(m));
    auto b = static_cast<std::uint32_t>(rng.below(m - 1));
    if (b >= a) ++b;
    if (nodes[a] == nodes[b] || graph.has_edge(rel, nodes[a], nodes[b])) continue;
    out.emplace_back(a, b);
  }
  if (out.size() < count) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> complement;
    for (std::uint32_t a = 0; a < m; ++a) {
      for (std::uint32_t b = a + 1; b < m; ++b) {
        if (nodes[a] != nodes[b] && !graph.has_edge(rel, nodes[a], nodes[b])) {
          complement.emplace_back(a, b);
        }
      }
    }
    if (complement.empty()) return {};
    while (out.size() < count) out.push_back(complement[rng.below(complement.size())]);
  }
  return out;
}

inline constexpr std::string_view kGraphMagic = "GGRF";

// "GGRF" | u16 version | u32 nodes | ids | per relation: u32 count, (p, q, w) u32 triples
inline void save_graph(std::ostream& os, const HeteroGraph& g) {
  io::Writer w(os);
  w.bytes(kGraphMagic);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(g.num_nodes()));
  for (const auto& id : g.item_ids()) w.string(id);
  for (auto rel : kAllInteractionTypes) {
    const auto edges = g.edges(rel);
    w.u32(static_cast<std::uint32_t>(edges.size()));
    for (const auto& e : edges) {
      w.u32(e.p);
      w.u32(e.q);
      w.u32(e.weight);
    }
  }
  w.check();
}

inline HeteroGraph load_graph(std::istream& is) {
  io::Reader r(is);
  r.expect_magic(kGraphMagic);
  if (r.u16() != 1) throw FormatError("graph: unsupported version");
  const auto n = r.u32();
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) ids.push_back(r.string());
  std::array<std::vector<WeightedEdge>, kNumRelations> edges;
  for (auto& list : edges) {
    const auto m = r.u32();
    list.reserve(m);
    for (std::uint32_t i = 0; i < m; ++i) {
      WeightedEdge e;
      e.p = r.u32();
      e.q = r.u32();
      e.weight = r.u32();
      list.push_back(e);
    }
  }
  try {
    return HeteroGraph::from_edges(std::move(ids), std::move(edges));
  } catch (const InputError& e) {
    throw FormatError(std::string("graph: ") + e.what());
  }
}

}  // namespace grec
