#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "grec/error.hpp"
#include "grec/graph/features.hpp"
#include "grec/graph/hetero_graph.hpp"
#include "grec/numeric/checkpoint.hpp"
#include "grec/numeric/matrix.hpp"
#include "grec/numeric/mlp.hpp"
#include "grec/numeric/rng.hpp"
#include "grec/numeric/sgd.hpp"
#include "grec/sampler/sampler.hpp"
#include "grec/teacher/contrastive.hpp"
#include "grec/teacher/hgnn.hpp"

namespace grec {

// (1/|V|) sum_p ||s_p - t_p||^2 with the gradient wrt the student outputs.
template <typename T>
EmbeddingLoss<T> alignment_loss(const DenseMatrix<T>& student, const DenseMatrix<T>& teacher) {
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols()) {
    throw InputError("alignment_loss: student/teacher shapes differ");
  }
  EmbeddingLoss<T> out;
  out.grad = DenseMatrix<T>(student.rows(), student.cols());
  if (student.rows() == 0) return out;
  const T inv = T{1} / static_cast<T>(student.rows());
  const auto s = student.data(), t = teacher.data();
  auto g = out.grad.data();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const T r = s[i] - t[i];
    out.value += r * r;
    g[i] = T{2} * inv * r;
  }
  out.value *= inv;
  return out;
}

template <typename T>
struct StudentLoss {
  T value = T{0};
  MlpParams<T> grads;
};

// Alignment loss of MLP(features[rows]) against targets[rows], with the
// gradient wrt the student's parameters. Teacher targets are constants.
template <typename T>
StudentLoss<T> student_alignment_loss(const MlpParams<T>& student, const DenseMatrix<T>& features,
                                      const DenseMatrix<T>& targets,
                                      std::span<const std::uint32_t> rows, bool with_grad = true) {
  if (targets.cols() != student.output_dim()) {
    throw InputError("alignment_loss: student output dim " + std::to_string(student.output_dim()) +
                     " != teacher dim " + std::to_string(targets.cols()));
  }
  if (features.rows() != targets.rows()) throw InputError("alignment_loss: row count mismatch");
  StudentLoss<T> out;
  out.grads = student.zeros_like();
  if (rows.empty()) return out;
  const T inv = T{1} / static_cast<T>(rows.size());
  std::vector<T> g(student.output_dim()), a, b, y(student.output_dim());
  for (auto r : rows) {
    const auto t = targets.row(r);
    if (with_grad) {
      const auto fwd = mlp_forward<T>(features.row(r), student);
      for (std::size_t k = 0; k < g.size(); ++k) {
        const T res = fwd.output[k] - t[k];
        out.value += res * res;
        g[k] = T{2} * inv * res;
      }
      mlp_backward_accumulate<T>(student, fwd.tape, g, out.grads);
    } else {
      mlp_apply<T>(features.row(r), student, y, a, b);
      out.value += squared_distance<T>(y, t);
    }
  }
  out.value *= inv;
  return out;
}

// Rows of the result follow the feature rows. Each row is computed exactly
// as a single mlp_apply call, so the threading split cannot change values.
template <typename T>
DenseMatrix<T> project_catalog(const MlpParams<T>& student, const DenseMatrix<T>& features,
                               std::size_t threads = 1) {
  if (features.cols() != student.input_dim()) {
    throw InputError("project_catalog: feature dim " + std::to_string(features.cols()) +
                     " != student input dim " + std::to_string(student.input_dim()));
  }
  DenseMatrix<T> out(features.rows(), student.output_dim());
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<T> a, b;
    for (std::size_t r = begin; r < end; ++r) mlp_apply<T>(features.row(r), student, out.row(r), a, b);
  };
  threads = std::max<std::size_t>(1, std::min(threads, features.rows() / 256 + 1));
  if (threads == 1) {
    work(0, features.rows());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (features.rows() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const auto begin = std::min(features.rows(), t * chunk);
      const auto end = std::min(features.rows(), begin + chunk);
      pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

template <typename T>
DenseMatrix<T> project_catalog(const MlpParams<T>& student, const FeatureStore<T>& features,
                               std::size_t threads = 1) {
  return project_catalog(student, features.matrix(), threads);
}

struct DistillConfig {
  std::vector<std::size_t> student_dims;  // empty: [d_in, 64, 32, 16]-style default from the caller
  SgdConfig sgd{1e-2, 0.0};
  std::size_t epochs = 50;
  std::size_t patience = 5;
  std::size_t batch_size = 128;
  double holdout_fraction = 0.10;
  bool resample_targets = false;  // fresh teacher neighbourhoods every epoch
  bool standardize_targets = false;  // divide targets by their RMS row norm
  std::uint64_t seed = 0;

  void validate() const {
    sgd.validate();
    if (patience < 1) throw InputError("DistillConfig: patience must be >= 1");
    if (batch_size < 1) throw InputError("DistillConfig: batch_size must be >= 1");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
      throw InputError("DistillConfig: holdout_fraction must be in [0, 1)");
    }
  }

  bool operator==(const DistillConfig&) const = default;
};

struct DistillEpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double holdout_loss = std::numeric_limits<double>::quiet_NaN();
  double wallclock_ms = 0.0;
};

inline nlohmann::json to_json(const DistillEpochLog& e) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  return {{"epoch", e.epoch},
          {"train_loss", num(e.train_loss)},
          {"holdout_loss", num(e.holdout_loss)},
          {"wallclock_ms", e.wallclock_ms}};
}

template <typename T>
struct DistillResult {
  MlpParams<T> student;  // best holdout epoch
  std::vector<DistillEpochLog> log;
  std::size_t best_epoch = 0;
  std::size_t checkpoint_bytes = 0;
};

template <typename T>
MlpParams<T> init_student(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x53545544ULL}));
  return init_mlp<T>(dims, rng);
}

// Minibatch SGD on the alignment loss against `targets` (one row per
// feature row). `target_fn`, when set, supplies fresh targets per epoch.
template <typename T>
DistillResult<T> fit_student(const DenseMatrix<T>& features, DenseMatrix<T> targets,
                             const DistillConfig& cfg,
                             const std::function<DenseMatrix<T>(std::size_t)>& target_fn = {}) {
  cfg.validate();
  if (cfg.student_dims.size() < 2) throw InputError("distill: student_dims needs >= 2 entries");
  if (cfg.student_dims.front() != features.cols()) {
    throw InputError("distill: student_dims[0] must equal the feature dim");
  }
  if (cfg.student_dims.back() != targets.cols()) {
    throw InputError("distill: student output dim must equal the teacher embedding dim");
  }
  auto student = init_student<T>(cfg.student_dims, cfg.seed);
  DistillResult<T> result;
  result.student = student;

  const std::size_t n = features.rows();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  Rng split_rng(derive_seed(cfg.seed, {0x484F4C44ULL}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  std::size_t n_hold = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(n)));
  if (cfg.holdout_fraction > 0.0 && n >= 2) n_hold = std::max<std::size_t>(n_hold, 1);
  std::vector<std::uint32_t> holdout(order.end() - static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::vector<std::uint32_t> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_hold));
  std::sort(holdout.begin(), holdout.end());

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (target_fn && epoch > 0) targets = target_fn(epoch);
    Rng rng(derive_seed(cfg.seed, {epoch, 0x45504F43ULL}));
    auto perm = train;
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < perm.size(); s += cfg.batch_size) {
      const std::span<const std::uint32_t> rows(perm.data() + s,
                                                std::min(cfg.batch_size, perm.size() - s));
      auto loss = student_alignment_loss(student, features, targets, rows);
      if (!std::isfinite(static_cast<double>(loss.value))) {
        throw DivergenceError("distill: non-finite alignment loss at epoch " + std::to_string(epoch));
      }
      try {
        sgd_step_inplace(student, loss.grads, cfg.sgd);
      } catch (const InputError& e) {
        throw DivergenceError("distill: epoch " + std::to_string(epoch) + ": " + e.what());
      }
      sum += static_cast<double>(loss.value);
      ++batches;
    }
    DistillEpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = batches ? sum / static_cast<double>(batches) : 0.0;
    if (!holdout.empty()) {
      entry.holdout_loss =
          static_cast<double>(student_alignment_loss(student, features, targets, holdout, false).value);
    }
    entry.wallclock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    if (!params_finite(student)) throw DivergenceError("distill: student parameters non-finite");

    const double score = holdout.empty() ? entry.train_loss : entry.holdout_loss;
    if (score < best) {
      best = score;
      result.student = student;
      result.best_epoch = epoch;
    } else if (epoch - result.best_epoch >= cfg.patience) {
      break;
    }
  }
  result.checkpoint_bytes = mlp_to_bytes(result.student).size();
  return result;
}

// Teacher targets for every node, computed once with the training sampler.
template <typename T>
DenseMatrix<T> compute_teacher_embeddings(const HeteroGraph& graph, const DenseMatrix<T>& features,
                                          const HgnnParams<T>& teacher, const SamplerConfig& cfg) {
  return hgnn_embed_graph(graph, features, teacher, cfg);
}

template <typename T>
DistillResult<T> distill(const HeteroGraph& graph, const DenseMatrix<T>& features,
                         const HgnnParams<T>& teacher, const DistillConfig& cfg,
                         const SamplerConfig& sampler) {
  if (features.rows() != graph.num_nodes()) {
    throw InputError("distill: features must be aligned to graph nodes");
  }
  auto targets = compute_teacher_embeddings(graph, features, teacher, sampler);
  // A single scalar keeps the teacher geometry and nearest neighbours intact.
  T scale{1};
  if (cfg.standardize_targets && targets.rows() > 0) {
    double ss = 0.0;
    for (T v : targets.data()) ss += static_cast<double>(v) * static_cast<double>(v);
    const double rms = std::sqrt(ss / static_cast<double>(targets.rows()));
    if (rms > 0.0 && std::isfinite(rms)) scale = static_cast<T>(1.0 / rms);
  }
  auto rescale = [scale](DenseMatrix<T> m) {
    if (scale != T{1}) {
      for (auto& v : m.data()) v *= scale;
    }
    return m;
  };
  targets = rescale(std::move(targets));
  std::function<DenseMatrix<T>(std::size_t)> resample;
  if (cfg.resample_targets) {
    resample = [&](std::size_t epoch) {
      auto s = sampler;
      s.seed = derive_seed(sampler.seed, {epoch, 0x52534D50ULL});
      return rescale(compute_teacher_embeddings(graph, features, teacher, s));
    };
  }
  return fit_student(features, std::move(targets), cfg, resample);
}

}  // namespace grec
