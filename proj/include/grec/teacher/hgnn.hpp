#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "grec/error.hpp"
#include "grec/graph/hetero_graph.hpp"
#include "grec/numeric/checkpoint.hpp"
#include "grec/numeric/matrix.hpp"
#include "grec/numeric/rng.hpp"
#include "grec/sampler/sampler.hpp"

namespace grec {

enum class Aggregation : std::uint8_t { Mean = 0, Sum = 1 };

inline std::string_view to_string(Aggregation a) noexcept {
  return a == Aggregation::Mean ? "mean" : "sum";
}

// One relation's message-passing layer:
//   m_q = Omega h_q + omega_b
//   a_p = Psi({m_q : q in N_p})            (zero when N_p is empty)
//   z_p = Phi [h_p ; a_p] + phi_b,  out_p = relu(z_p) except on the last layer
template <typename T>
struct RelationLayer {
  DenseMatrix<T> omega_w;  // d_in x d_in
  std::vector<T> omega_b;
  DenseMatrix<T> phi_w;  // d_out x 2 d_in
  std::vector<T> phi_b;

  bool operator==(const RelationLayer&) const = default;
};

// Heterogeneous sample-and-aggregate network: one stack per relation sharing
// layer_dims; per layer the relation outputs are combined by relation_agg.
template <typename T>
struct HgnnParams {
  using value_type = T;

  std::vector<std::size_t> layer_dims;
  Aggregation neighborhood_agg = Aggregation::Mean;
  Aggregation relation_agg = Aggregation::Mean;
  std::vector<std::array<RelationLayer<T>, kNumRelations>> layers;

  static HgnnParams zeros(std::vector<std::size_t> dims, Aggregation nagg = Aggregation::Mean,
                          Aggregation ragg = Aggregation::Mean) {
    if (dims.size() < 2) throw InputError("HgnnParams: need at least input and output dims");
    HgnnParams p;
    p.layer_dims = std::move(dims);
    p.neighborhood_agg = nagg;
    p.relation_agg = ragg;
    for (std::size_t l = 0; l + 1 < p.layer_dims.size(); ++l) {
      const auto din = p.layer_dims[l], dout = p.layer_dims[l + 1];
      if (din == 0 || dout == 0) throw InputError("HgnnParams: zero-width layer");
      auto& layer = p.layers.emplace_back();
      for (auto& rl : layer) {
        rl.omega_w = DenseMatrix<T>(din, din);
        rl.omega_b.assign(din, T{0});
        rl.phi_w = DenseMatrix<T>(dout, 2 * din);
        rl.phi_b.assign(dout, T{0});
      }
    }
    return p;
  }

  HgnnParams zeros_like() const { return zeros(layer_dims, neighborhood_agg, relation_agg); }
  std::size_t num_layers() const noexcept { return layers.size(); }
  std::size_t input_dim() const noexcept { return layer_dims.front(); }
  std::size_t output_dim() const noexcept { return layer_dims.back(); }

  template <typename F>
  void visit_blocks(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit_blocks(F&& f) const {
    visit_impl(*this, f);
  }

  bool operator==(const HgnnParams&) const = default;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    using S = std::conditional_t<std::is_const_v<Self>, const T, T>;
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      for (std::size_t r = 0; r < kNumRelations; ++r) {
        auto& rl = self.layers[l][r];
        const std::string prefix = "layer" + std::to_string(l) + "." +
                                   std::string(relation_name(static_cast<InteractionType>(r)));
        f(prefix + ".omega.weight", rl.omega_w.data());
        f(prefix + ".omega.bias", std::span<S>(rl.omega_b));
        f(prefix + ".phi.weight", rl.phi_w.data());
        f(prefix + ".phi.bias", std::span<S>(rl.phi_b));
      }
    }
  }
};

template <typename T>
HgnnParams<T> init_hgnn(std::vector<std::size_t> dims, Aggregation nagg, Aggregation ragg,
                        Rng& rng) {
  auto p = HgnnParams<T>::zeros(std::move(dims), nagg, ragg);
  auto glorot = [&](DenseMatrix<T>& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-limit, limit));
  };
  for (auto& layer : p.layers) {
    for (auto& rl : layer) {
      glorot(rl.omega_w);
      glorot(rl.phi_w);
    }
  }
  return p;
}

// Per-relation neighbor lists over batch-local rows (CSR). Neighbors of a
// node are ordered by graph node id so aggregation order, and therefore every
// floating-point result, is independent of batch and adjacency ordering.
struct LocalAdjacency {
  std::vector<std::uint32_t> offsets;
  std::vector<std::uint32_t> neighbors;

  std::span<const std::uint32_t> of(std::uint32_t row) const noexcept {
    return {neighbors.data() + offsets[row], offsets[row + 1] - offsets[row]};
  }
};

inline std::array<LocalAdjacency, kNumRelations> build_local_adjacency(const BatchGraph& batch) {
  const auto index = batch.local_index();
  const auto n = batch.all_nodes.size();
  std::array<LocalAdjacency, kNumRelations> adj;
  for (auto rel : kAllInteractionTypes) {
    auto& a = adj[relation_index(rel)];
    std::vector<std::vector<std::uint32_t>> lists(n);
    for (const auto& e : batch.distinct_edges(rel)) {
      const auto lp = index.at(e.p), lq = index.at(e.q);
      lists[lp].push_back(lq);
      lists[lq].push_back(lp);
    }
    a.offsets.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::sort(lists[i].begin(), lists[i].end(), [&](std::uint32_t x, std::uint32_t y) {
        return batch.all_nodes[x] < batch.all_nodes[y];
      });
      a.offsets[i + 1] = a.offsets[i] + static_cast<std::uint32_t>(lists[i].size());
      a.neighbors.insert(a.neighbors.end(), lists[i].begin(), lists[i].end());
    }
  }
  return adj;
}

template <typename T>
struct HgnnTape {
  std::array<LocalAdjacency, kNumRelations> adjacency;
  std::vector<DenseMatrix<T>> inputs;                                 // per layer: n x d_l
  std::vector<std::array<DenseMatrix<T>, kNumRelations>> aggregated;  // n x d_l
  std::vector<std::array<DenseMatrix<T>, kNumRelations>> pre;         // n x d_{l+1}
};

template <typename T>
struct HgnnForward {
  DenseMatrix<T> embeddings;  // one row per batch.all_nodes entry; seeds come first
  HgnnTape<T> tape;
};

// `node_features` rows are indexed by graph node id.
template <typename T>
HgnnForward<T> hgnn_forward(const BatchGraph& batch, const DenseMatrix<T>& node_features,
                            const HgnnParams<T>& params) {
  if (params.num_layers() == 0) throw InputError("hgnn_forward: empty parameter set");
  if (node_features.cols() != params.input_dim()) {
    throw InputError("hgnn_forward: feature dim " + std::to_string(node_features.cols()) +
                     " != layer_dims[0] " + std::to_string(params.input_dim()));
  }
  const std::size_t n = batch.all_nodes.size();
  HgnnForward<T> fwd;
  auto& tape = fwd.tape;
  tape.adjacency = build_local_adjacency(batch);

  DenseMatrix<T> h(n, params.input_dim());
  for (std::size_t i = 0; i < n; ++i) {
    const auto node = batch.all_nodes[i];
    if (node >= node_features.rows()) throw InputError("hgnn_forward: node without features");
    const auto src = node_features.row(node);
    std::copy(src.begin(), src.end(), h.row(i).begin());
  }

  const T rel_scale = params.relation_agg == Aggregation::Mean
                          ? T{1} / static_cast<T>(kNumRelations)
                          : T{1};
  std::vector<T> msg, cat, z;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    const auto din = params.layer_dims[l], dout = params.layer_dims[l + 1];
    const bool hidden = l + 1 < params.num_layers();
    DenseMatrix<T> out(n, dout);
    auto& agg_l = tape.aggregated.emplace_back();
    auto& pre_l = tape.pre.emplace_back();
    msg.resize(din);
    cat.resize(2 * din);
    z.resize(dout);
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      const auto& rl = params.layers[l][r];
      const auto& adj = tape.adjacency[r];
      DenseMatrix<T> messages(n, din);
      for (std::size_t q = 0; q < n; ++q) {
        if (adj.offsets[q + 1] == adj.offsets[q]) continue;  // only neighbors send messages
        affine<T>(rl.omega_w, rl.omega_b, h.row(q), messages.row(q));
      }
      DenseMatrix<T> agg(n, din);
      DenseMatrix<T> pre(n, dout);
      for (std::size_t p = 0; p < n; ++p) {
        const auto nbrs = adj.of(static_cast<std::uint32_t>(p));
        auto ap = agg.row(p);
        for (auto q : nbrs) axpy<T>(T{1}, messages.row(q), ap);
        if (!nbrs.empty() && params.neighborhood_agg == Aggregation::Mean) {
          const T inv = T{1} / static_cast<T>(nbrs.size());
          for (auto& v : ap) v *= inv;
        }
        const auto hp = h.row(p);
        std::copy(hp.begin(), hp.end(), cat.begin());
        std::copy(ap.begin(), ap.end(), cat.begin() + static_cast<std::ptrdiff_t>(din));
        affine<T>(rl.phi_w, rl.phi_b, cat, z);
        std::copy(z.begin(), z.end(), pre.row(p).begin());
        auto op = out.row(p);
        for (std::size_t k = 0; k < dout; ++k) {
          const T act = hidden ? (z[k] > T{0} ? z[k] : T{0}) : z[k];
          op[k] += rel_scale * act;
        }
      }
      agg_l[r] = std::move(agg);
      pre_l[r] = std::move(pre);
    }
    tape.inputs.push_back(std::move(h));
    h = std::move(out);
  }
  fwd.embeddings = std::move(h);
  return fwd;
}

// Embeddings for every graph node (row = node id): nodes are split into
// batches that cover the graph once, each embedded as a seed of its own
// sampled neighborhood.
template <typename T>
DenseMatrix<T> hgnn_embed_graph(const HeteroGraph& graph, const DenseMatrix<T>& node_features,
                                const HgnnParams<T>& params, const SamplerConfig& cfg) {
  cfg.validate();
  DenseMatrix<T> out(graph.num_nodes(), params.output_dim());
  Rng rng(derive_seed(cfg.seed, {0x454D4244ULL}));
  const auto batches = partition_nodes(graph.num_nodes(), cfg.batch_size, rng);
  for (const auto& seeds : batches) {
    const auto batch = sample_subgraph(graph, seeds, cfg, rng);
    const auto fwd = hgnn_forward(batch, node_features, params);
    for (std::size_t i = 0; i < batch.seed_nodes.size(); ++i) {
      const auto src = fwd.embeddings.row(i);
      std::copy(src.begin(), src.end(), out.row(batch.seed_nodes[i]).begin());
    }
  }
  return out;
}

// d(loss)/d(params) given d(loss)/d(embeddings) for every batch row.
template <typename T>
HgnnParams<T> hgnn_backward(const HgnnParams<T>& params, const HgnnTape<T>& tape,
                            const DenseMatrix<T>& embedding_grad) {
  const std::size_t layers = params.num_layers();
  if (tape.inputs.size() != layers) throw InputError("hgnn_backward: tape depth mismatch");
  const std::size_t n = tape.inputs.front().rows();
  if (embedding_grad.rows() != n || embedding_grad.cols() != params.output_dim()) {
    throw InputError("hgnn_backward: embedding gradient shape mismatch");
  }
  auto grads = params.zeros_like();
  const T rel_scale = params.relation_agg == Aggregation::Mean
                          ? T{1} / static_cast<T>(kNumRelations)
                          : T{1};
  DenseMatrix<T> dh = embedding_grad;
  std::vector<T> cat, dcat, dz;
  for (std::size_t l = layers; l-- > 0;) {
    const auto din = params.layer_dims[l], dout = params.layer_dims[l + 1];
    const bool hidden = l + 1 < layers;
    const auto& h_in = tape.inputs[l];
    if (h_in.cols() != din) throw InputError("hgnn_backward: tape shape mismatch");
    DenseMatrix<T> dh_in(n, din);
    cat.resize(2 * din);
    dcat.resize(2 * din);
    dz.resize(dout);
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      const auto& rl = params.layers[l][r];
      auto& gl = grads.layers[l][r];
      const auto& adj = tape.adjacency[r];
      const auto& agg = tape.aggregated[l][r];
      const auto& pre = tape.pre[l][r];
      DenseMatrix<T> dmsg(n, din);
      for (std::size_t p = 0; p < n; ++p) {
        const auto zp = pre.row(p);
        const auto gp = dh.row(p);
        bool any = false;
        for (std::size_t k = 0; k < dout; ++k) {
          const bool pass = !hidden || zp[k] > T{0};
          dz[k] = pass ? rel_scale * gp[k] : T{0};
          any = any || dz[k] != T{0};
        }
        if (!any) continue;
        const auto hp = h_in.row(p);
        const auto ap = agg.row(p);
        std::copy(hp.begin(), hp.end(), cat.begin());
        std::copy(ap.begin(), ap.end(), cat.begin() + static_cast<std::ptrdiff_t>(din));
        add_outer<T>(dz, cat, gl.phi_w);
        axpy<T>(T{1}, dz, gl.phi_b);
        std::fill(dcat.begin(), dcat.end(), T{0});
        add_transposed_product<T>(rl.phi_w, dz, dcat);
        axpy<T>(T{1}, std::span<const T>(dcat.data(), din), dh_in.row(p));
        const auto nbrs = adj.of(static_cast<std::uint32_t>(p));
        if (nbrs.empty()) continue;
        const T scale = params.neighborhood_agg == Aggregation::Mean
                            ? T{1} / static_cast<T>(nbrs.size())
                            : T{1};
        const std::span<const T> dagg(dcat.data() + din, din);
        for (auto q : nbrs) axpy<T>(scale, dagg, dmsg.row(q));
      }
      for (std::size_t q = 0; q < n; ++q) {
        if (adj.offsets[q + 1] == adj.offsets[q]) continue;
        const auto gq = dmsg.row(q);
        add_outer<T>(gq, h_in.row(q), gl.omega_w);
        axpy<T>(T{1}, gq, gl.omega_b);
        if (l > 0) add_transposed_product<T>(rl.omega_w, gq, dh_in.row(q));
      }
    }
    dh = std::move(dh_in);
  }
  return grads;
}

template <typename T>
T min_abs_pre_activation(const HgnnTape<T>& tape) {
  T best = std::numeric_limits<T>::infinity();
  for (std::size_t l = 0; l + 1 < tape.pre.size(); ++l) {
    for (const auto& m : tape.pre[l]) {
      for (T v : m.data()) best = std::min(best, std::abs(v));
    }
  }
  return best;
}

template <typename T>
void save_hgnn(std::ostream& os, const HgnnParams<T>& params) {
  io::Writer w(os);
  detail::write_header(w, {kCheckpointVersion, precision_flag<T>(), ModelKind::Hgnn,
                           {static_cast<std::uint8_t>(params.neighborhood_agg),
                            static_cast<std::uint8_t>(params.relation_agg),
                            static_cast<std::uint8_t>(kNumRelations)},
                           params.layer_dims});
  detail::write_blocks(w, params);
  w.check();
}

template <typename T>
HgnnParams<T> load_hgnn(std::istream& is) {
  io::Reader r(is);
  const auto h = detail::read_header(r);
  if (h.kind != ModelKind::Hgnn) throw FormatError("checkpoint: not an HGNN checkpoint");
  if (h.extra[0] > 1 || h.extra[1] > 1 || h.extra[2] != kNumRelations) {
    throw FormatError("checkpoint: bad HGNN header");
  }
  auto params = HgnnParams<T>::zeros(h.layer_dims, static_cast<Aggregation>(h.extra[0]),
                                     static_cast<Aggregation>(h.extra[1]));
  detail::read_blocks(r, params, h.precision);
  return params;
}

template <typename T>
std::string hgnn_to_bytes(const HgnnParams<T>& params) {
  std::ostringstream os(std::ios::binary);
  save_hgnn(os, params);
  return os.str();
}

template <typename T>
HgnnParams<T> hgnn_from_bytes(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return load_hgnn<T>(is);
}

}  // namespace grec
