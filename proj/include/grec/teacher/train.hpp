#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "grec/error.hpp"
#include "grec/graph/hetero_graph.hpp"
#include "grec/numeric/matrix.hpp"
#include "grec/numeric/rng.hpp"
#include "grec/numeric/sgd.hpp"
#include "grec/sampler/sampler.hpp"
#include "grec/teacher/contrastive.hpp"
#include "grec/teacher/hgnn.hpp"

namespace grec {

struct ContrastiveConfig {
  RelationWeights gamma = kDefaultGamma;
  SgdConfig sgd{};
  std::size_t epochs_max = 50;
  std::size_t patience = 5;
  SamplerConfig sampler{};
  std::size_t workers = 1;  // batches whose gradients are accumulated per step
  bool normalize_weights = false;

  void validate() const {
    for (double g : gamma) {
      if (!(g >= 0.0) || !std::isfinite(g)) throw InputError("ContrastiveConfig: gamma must be >= 0");
    }
    if (patience < 1) throw InputError("ContrastiveConfig: patience must be >= 1");
    if (workers < 1) throw InputError("ContrastiveConfig: workers must be >= 1");
    sgd.validate();
    sampler.validate();
  }

  bool operator==(const ContrastiveConfig&) const = default;
};

// Loss terms of one batch, in batch-local rows. A relation without positives
// (or whose gamma is zero) has both lists empty and is skipped.
template <typename T>
struct BatchObjective {
  std::array<std::vector<PositivePair<T>>, kNumRelations> positives;
  std::array<std::vector<NegativePair>, kNumRelations> negatives;
};

template <typename T>
BatchObjective<T> build_batch_objective(const HeteroGraph& graph, const BatchGraph& batch,
                                        const ContrastiveConfig& cfg, Rng& rng) {
  BatchObjective<T> obj;
  const auto index = batch.local_index();
  for (auto rel : kAllInteractionTypes) {
    const auto r = relation_index(rel);
    if (cfg.gamma[r] == 0.0) continue;
    const auto edges = batch.distinct_edges(rel);
    if (edges.empty()) continue;
    auto& pos = obj.positives[r];
    double mean_w = 0.0;
    for (const auto& e : edges) mean_w += e.weight;
    mean_w /= static_cast<double>(edges.size());
    for (const auto& e : edges) {
      const double w = cfg.normalize_weights ? e.weight / mean_w : static_cast<double>(e.weight);
      pos.push_back({index.at(e.p), index.at(e.q), static_cast<T>(w)});
    }
    obj.negatives[r] = sample_non_edges_among(graph, rel, batch.all_nodes, pos.size(), rng);
    if (obj.negatives[r].empty()) pos.clear();
  }
  return obj;
}

template <typename T>
struct BatchLoss {
  T total = T{0};
  std::array<std::optional<T>, kNumRelations> relation_losses{};
  HgnnParams<T> grads;
};

template <typename T>
BatchLoss<T> batch_objective_loss(const HgnnParams<T>& params, const DenseMatrix<T>& features,
                                  const BatchGraph& batch, const BatchObjective<T>& obj,
                                  const RelationWeights& gamma, bool with_grad = true) {
  auto fwd = hgnn_forward(batch, features, params);
  BatchLoss<T> out;
  DenseMatrix<T> demb(fwd.embeddings.rows(), fwd.embeddings.cols());
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    if (obj.positives[r].empty()) continue;
    out.relation_losses[r] = contrastive_loss_accumulate<T>(
        fwd.embeddings, obj.positives[r], obj.negatives[r], static_cast<T>(gamma[r]), demb);
  }
  out.total = total_contrastive_loss(out.relation_losses, gamma);
  out.grads = with_grad ? hgnn_backward(params, fwd.tape, demb) : params.zeros_like();
  return out;
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  std::array<double, kNumRelations> relation_losses{};  // NaN when never present
  double wallclock_ms = 0.0;
};

inline nlohmann::json to_json(const EpochLog& e) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  nlohmann::json rel = nlohmann::json::object();
  for (auto t : kAllInteractionTypes) {
    rel[std::string(relation_name(t))] = num(e.relation_losses[relation_index(t)]);
  }
  return {{"epoch", e.epoch},          {"train_loss", num(e.train_loss)},
          {"val_loss", num(e.val_loss)}, {"relation_losses", rel},
          {"wallclock_ms", e.wallclock_ms}};
}

template <typename T>
struct TrainResult {
  HgnnParams<T> best;
  HgnnParams<T> last;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

// Optional hooks; `initial` plus `start_epoch` resume an interrupted run.
template <typename T>
struct TrainOptions {
  std::optional<HgnnParams<T>> initial;
  std::size_t start_epoch = 0;
  std::function<void(const EpochLog&, const HgnnParams<T>&)> on_epoch;
  bool threaded = true;  // false computes accumulated batches one after another
};

namespace detail {

template <typename T>
struct EpochTotals {
  double loss_sum = 0.0;
  std::size_t batches = 0;
  std::array<double, kNumRelations> rel_sum{};
  std::array<std::size_t, kNumRelations> rel_count{};

  void add(const BatchLoss<T>& b) {
    loss_sum += static_cast<double>(b.total);
    ++batches;
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      if (b.relation_losses[r]) {
        rel_sum[r] += static_cast<double>(*b.relation_losses[r]);
        ++rel_count[r];
      }
    }
  }
  double mean() const {
    return batches ? loss_sum / static_cast<double>(batches)
                   : std::numeric_limits<double>::quiet_NaN();
  }
  std::array<double, kNumRelations> relation_means() const {
    std::array<double, kNumRelations> out{};
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      out[r] = rel_count[r] ? rel_sum[r] / static_cast<double>(rel_count[r])
                            : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
  }
};

constexpr std::uint64_t kNegativeStream = 0x4E4547ULL;
constexpr std::uint64_t kValidationStream = 0x56414CULL;

template <typename T>
BatchLoss<T> sampled_batch_loss(const HeteroGraph& graph, const DenseMatrix<T>& features,
                                const HgnnParams<T>& params, const ContrastiveConfig& cfg,
                                const BatchStream& stream, std::uint64_t seed, std::uint64_t epoch,
                                std::size_t batch_index, bool with_grad) {
  const auto batch = stream.sample(batch_index);
  Rng rng(derive_seed(seed, {epoch, batch_index, kNegativeStream}));
  const auto obj = build_batch_objective<T>(graph, batch, cfg, rng);
  return batch_objective_loss(params, features, batch, obj, cfg.gamma, with_grad);
}

}  // namespace detail

// Mean batch loss over a fixed (epoch-independent) sampling of the graph.
// NaN when no batch yields a loss term.
template <typename T>
double validation_loss(const HeteroGraph& graph, const DenseMatrix<T>& features,
                       const HgnnParams<T>& params, const ContrastiveConfig& cfg) {
  if (graph.num_nodes() == 0) return std::numeric_limits<double>::quiet_NaN();
  auto scfg = cfg.sampler;
  scfg.seed = derive_seed(cfg.sampler.seed, {detail::kValidationStream});
  BatchStream stream(graph, scfg);
  stream.begin_epoch(0);
  detail::EpochTotals<T> totals;
  for (std::size_t b = 0; b < stream.batches_in_epoch(); ++b) {
    auto loss = detail::sampled_batch_loss(graph, features, params, cfg, stream, scfg.seed, 0, b,
                                           false);
    bool any = false;
    for (const auto& l : loss.relation_losses) any = any || l.has_value();
    if (any) totals.add(loss);
  }
  return totals.mean();
}

// Features are aligned to graph node ids. Early stopping tracks validation
// loss, or training loss when the validation graph yields no loss terms.
template <typename T>
TrainResult<T> train_structural_encoder(const HeteroGraph& graph, const DenseMatrix<T>& features,
                                        const std::vector<std::size_t>& layer_dims,
                                        Aggregation nagg, Aggregation ragg,
                                        const ContrastiveConfig& cfg,
                                        const HeteroGraph& val_graph,
                                        const DenseMatrix<T>& val_features,
                                        TrainOptions<T> opts = {}) {
  cfg.validate();
  if (!layer_dims.empty() && features.cols() != layer_dims.front()) {
    throw InputError("train_structural_encoder: feature dim does not match layer_dims[0]");
  }
  const std::uint64_t seed = cfg.sampler.seed;
  HgnnParams<T> params;
  if (opts.initial) {
    params = std::move(*opts.initial);
    if (params.layer_dims != layer_dims) {
      throw InputError("train_structural_encoder: resume checkpoint dims differ from config");
    }
  } else {
    Rng init_rng(derive_seed(seed, {0x494E4954ULL}));
    params = init_hgnn<T>(layer_dims, nagg, ragg, init_rng);
  }

  TrainResult<T> result;
  result.best = params;
  result.best_epoch = opts.start_epoch;
  double best_score = std::numeric_limits<double>::infinity();
  BatchStream stream(graph, cfg.sampler);

  for (std::size_t epoch = opts.start_epoch; epoch < cfg.epochs_max; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    stream.begin_epoch(epoch);
    detail::EpochTotals<T> totals;
    const std::size_t nb = stream.batches_in_epoch();
    for (std::size_t start = 0; start < nb; start += cfg.workers) {
      const std::size_t group = std::min(cfg.workers, nb - start);
      std::vector<BatchLoss<T>> losses(group);
      auto run = [&](std::size_t i) {
        losses[i] = detail::sampled_batch_loss(graph, features, params, cfg, stream, seed, epoch,
                                               start + i, true);
      };
      if (group == 1 || !opts.threaded) {
        for (std::size_t i = 0; i < group; ++i) run(i);
      } else {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> failures(group);
        for (std::size_t i = 0; i < group; ++i) {
          threads.emplace_back([&, i] {
            try {
              run(i);
            } catch (...) {
              failures[i] = std::current_exception();
            }
          });
        }
        for (auto& t : threads) t.join();
        for (auto& f : failures) {
          if (f) std::rethrow_exception(f);
        }
      }
      auto grad = std::move(losses[0].grads);
      for (std::size_t i = 1; i < group; ++i) accumulate_scaled(grad, losses[i].grads, T{1});
      if (group > 1) {
        grad.visit_blocks([&](const std::string&, std::span<T> b) {
          for (auto& v : b) v /= static_cast<T>(group);
        });
      }
      for (std::size_t i = 0; i < group; ++i) {
        if (!std::isfinite(static_cast<double>(losses[i].total))) {
          throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(start + i));
        }
        totals.add(losses[i]);
      }
      try {
        sgd_step_inplace(params, grad, cfg.sgd);
      } catch (const InputError& e) {
        throw DivergenceError("train: epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }
    if (!params_finite(params)) {
      throw DivergenceError("train: parameters became non-finite at epoch " + std::to_string(epoch));
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = totals.mean();
    entry.relation_losses = totals.relation_means();
    entry.val_loss = validation_loss(val_graph, val_features, params, cfg);
    entry.wallclock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    if (opts.on_epoch) opts.on_epoch(entry, params);

    const double score = std::isfinite(entry.val_loss) ? entry.val_loss : entry.train_loss;
    if (std::isnan(score)) {
      // nothing to learn from (no edges at all); keep going until epochs_max
    } else if (score < best_score) {
      best_score = score;
      result.best = params;
      result.best_epoch = epoch;
    } else if (epoch - result.best_epoch >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (result.log.empty() || !std::isfinite(best_score)) result.best = params;
  result.last = std::move(params);
  return result;
}

}  // namespace grec
