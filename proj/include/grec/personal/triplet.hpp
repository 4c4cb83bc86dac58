#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "grec/error.hpp"
#include "grec/graph/events.hpp"
#include "grec/numeric/matrix.hpp"
#include "grec/numeric/mlp.hpp"

namespace grec {

// (1/|B|) sum_i w_i f_i, w from the interaction type.
template <typename T>
std::vector<T> weighted_centroid(std::span<const std::span<const T>> features,
                                 std::span<const InteractionType> kinds) {
  if (features.empty()) throw InputError("weighted_centroid: empty batch");
  if (features.size() != kinds.size()) throw InputError("weighted_centroid: size mismatch");
  std::vector<T> c(features.front().size(), T{0});
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != c.size()) throw InputError("weighted_centroid: dim mismatch");
    axpy<T>(static_cast<T>(interaction_weight(kinds[i])), features[i], c);
  }
  const T inv = T{1} / static_cast<T>(features.size());
  for (auto& v : c) v *= inv;
  return c;
}

template <typename T>
struct TripletLoss {
  T value = T{0};
  std::size_t active = 0;       // pairs whose hinge is open
  T positive_distance = T{0};   // mean ||f(anchor) - f(p+)||^2
  MlpParams<T> grads;
};

// sum_i max(0, ||f(a) - f(p_i)||^2 - ||f(a) - n_i||^2 + margin), f = mlp.
// An infinite margin removes the hinge; the dropped constant is not part
// of the reported value.
template <typename T>
TripletLoss<T> triplet_loss(const MlpParams<T>& mlp, std::span<const T> anchor,
                            std::span<const std::span<const T>> positives,
                            std::span<const std::span<const T>> negatives, double margin,
                            bool with_grad = true) {
  if (positives.empty()) throw InputError("triplet_loss: need at least one positive");
  if (negatives.size() != positives.size()) {
    throw InputError("triplet_loss: each positive needs one paired negative");
  }
  if (!(margin > 0.0)) throw InputError("triplet_loss: margin must be positive");
  const bool hinge = std::isfinite(margin);
  TripletLoss<T> out;
  if (with_grad) out.grads = mlp.zeros_like();
  const auto fa = mlp_forward<T>(anchor, mlp);
  const std::size_t d = mlp.output_dim();
  std::vector<T> ga(d, T{0}), g(d);
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const auto fp = mlp_forward<T>(positives[i], mlp);
    const auto fn = mlp_forward<T>(negatives[i], mlp);
    const T dp = squared_distance<T>(fa.output, fp.output);
    const T dn = squared_distance<T>(fa.output, fn.output);
    out.positive_distance += dp;
    const T raw = dp - dn;
    if (hinge) {
      const T h = raw + static_cast<T>(margin);
      if (!(h > T{0})) continue;
      out.value += h;
    } else {
      out.value += raw;
    }
    ++out.active;
    if (!with_grad) continue;
    // d/d f(a) = 2(fa - fp) - 2(fa - fn) = 2(fn - fp)
    for (std::size_t k = 0; k < d; ++k) ga[k] += T{2} * (fn.output[k] - fp.output[k]);
    for (std::size_t k = 0; k < d; ++k) g[k] = T{2} * (fp.output[k] - fa.output[k]);
    mlp_backward_accumulate<T>(mlp, fp.tape, g, out.grads);
    for (std::size_t k = 0; k < d; ++k) g[k] = T{2} * (fa.output[k] - fn.output[k]);
    mlp_backward_accumulate<T>(mlp, fn.tape, g, out.grads);
  }
  out.positive_distance /= static_cast<T>(positives.size());
  if (with_grad && out.active > 0) mlp_backward_accumulate<T>(mlp, fa.tape, ga, out.grads);
  return out;
}

}  // namespace grec
