#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grec/error.hpp"
#include "grec/graph/hetero_graph.hpp"
#include "grec/numeric/matrix.hpp"

namespace grec {

// Rows index into the embedding matrix.
template <typename T>
struct PositivePair {
  std::uint32_t p = 0;
  std::uint32_t q = 0;
  T weight = T{1};
};

using NegativePair = std::pair<std::uint32_t, std::uint32_t>;

template <typename T>
struct EmbeddingLoss {
  T value = T{0};
  DenseMatrix<T> grad;  // same shape as the embeddings
};

// L = (1/|E+|) sum a ||h_p - h_q||^2 - (1/|E-|) sum ||h_p - h_q||^2.
// The gradient is accumulated into `grad` scaled by `scale`.
template <typename T>
T contrastive_loss_accumulate(const DenseMatrix<T>& emb, std::span<const PositivePair<T>> pos,
                              std::span<const NegativePair> neg, T scale, DenseMatrix<T>& grad) {
  if (pos.empty() || neg.empty()) {
    throw InputError("contrastive_loss: need at least one positive and one negative pair");
  }
  if (grad.rows() != emb.rows() || grad.cols() != emb.cols()) {
    throw InputError("contrastive_loss: gradient shape mismatch");
  }
  const std::size_t d = emb.cols();
  auto check = [&](std::uint32_t r) {
    if (r >= emb.rows()) throw InputError("contrastive_loss: pair index out of range");
  };
  std::vector<T> diff(d);
  auto term = [&](std::uint32_t p, std::uint32_t q, T w, T coeff) {
    check(p);
    check(q);
    const auto hp = emb.row(p), hq = emb.row(q);
    T sq = T{0};
    for (std::size_t k = 0; k < d; ++k) {
      diff[k] = hp[k] - hq[k];
      sq += diff[k] * diff[k];
    }
    // d/dh_p of c w ||h_p - h_q||^2 = 2 c w (h_p - h_q)
    const T g = T{2} * coeff * w * scale;
    auto gp = grad.row(p), gq = grad.row(q);
    for (std::size_t k = 0; k < d; ++k) {
      gp[k] += g * diff[k];
      gq[k] -= g * diff[k];
    }
    return w * sq;
  };
  const T inv_pos = T{1} / static_cast<T>(pos.size());
  const T inv_neg = T{1} / static_cast<T>(neg.size());
  T pos_sum = T{0}, neg_sum = T{0};
  for (const auto& e : pos) pos_sum += term(e.p, e.q, e.weight, inv_pos);
  for (const auto& [p, q] : neg) neg_sum += term(p, q, T{1}, -inv_neg);
  return pos_sum * inv_pos - neg_sum * inv_neg;
}

template <typename T>
EmbeddingLoss<T> contrastive_loss(const DenseMatrix<T>& emb, std::span<const PositivePair<T>> pos,
                                  std::span<const NegativePair> neg) {
  EmbeddingLoss<T> out;
  out.grad = DenseMatrix<T>(emb.rows(), emb.cols());
  out.value = contrastive_loss_accumulate(emb, pos, neg, T{1}, out.grad);
  return out;
}

using RelationWeights = std::array<double, kNumRelations>;

inline constexpr RelationWeights kDefaultGamma = {1.0, 0.5, 0.5, 0.1};

// Missing entries are relations without positive edges in the batch.
template <typename T>
T total_contrastive_loss(const std::array<std::optional<T>, kNumRelations>& losses,
                         const RelationWeights& gamma) {
  T total = T{0};
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    if (losses[r] && gamma[r] != 0.0) total += static_cast<T>(gamma[r]) * *losses[r];
  }
  return total;
}

}  // namespace grec
