#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "grec/error.hpp"
#include "grec/numeric/matrix.hpp"
#include "grec/numeric/rng.hpp"

namespace grec {

// Feed-forward network: ReLU on every hidden layer, identity on the output.
// weights[l] maps layer_dims[l] -> layer_dims[l + 1].
template <typename T>
struct MlpParams {
  using value_type = T;

  std::vector<std::size_t> layer_dims;
  std::vector<DenseMatrix<T>> weights;
  std::vector<std::vector<T>> biases;

  static MlpParams zeros(std::vector<std::size_t> dims) {
    if (dims.size() < 2) throw InputError("MlpParams: need at least input and output dims");
    MlpParams p;
    p.layer_dims = std::move(dims);
    for (std::size_t l = 0; l + 1 < p.layer_dims.size(); ++l) {
      if (p.layer_dims[l] == 0 || p.layer_dims[l + 1] == 0) {
        throw InputError("MlpParams: zero-width layer");
      }
      p.weights.emplace_back(p.layer_dims[l + 1], p.layer_dims[l]);
      p.biases.emplace_back(p.layer_dims[l + 1], T{0});
    }
    return p;
  }

  MlpParams zeros_like() const { return zeros(layer_dims); }

  std::size_t num_layers() const noexcept { return weights.size(); }
  std::size_t input_dim() const noexcept { return layer_dims.front(); }
  std::size_t output_dim() const noexcept { return layer_dims.back(); }

  static std::size_t parameter_count(std::span<const std::size_t> dims) noexcept {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l + 1] * (dims[l] + 1);
    return n;
  }
  std::size_t parameter_count() const noexcept { return parameter_count(layer_dims); }

  // Visits every parameter block in checkpoint order: W0, b0, W1, b1, ...
  template <typename F>
  void visit_blocks(F&& f) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      f("layer" + std::to_string(l) + ".weight", weights[l].data());
      f("layer" + std::to_string(l) + ".bias", std::span<T>(biases[l]));
    }
  }
  template <typename F>
  void visit_blocks(F&& f) const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      f("layer" + std::to_string(l) + ".weight", weights[l].data());
      f("layer" + std::to_string(l) + ".bias", std::span<const T>(biases[l]));
    }
  }

  bool operator==(const MlpParams&) const = default;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
template <typename T>
MlpParams<T> init_mlp(std::vector<std::size_t> dims, Rng& rng) {
  auto p = MlpParams<T>::zeros(std::move(dims));
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(p.layer_dims[l] + p.layer_dims[l + 1]));
    for (auto& w : p.weights[l].data()) w = static_cast<T>(rng.uniform(-limit, limit));
  }
  return p;
}

// Single linear layer with W = I and b = 0. Projects features onto themselves.
template <typename T>
MlpParams<T> identity_mlp(std::size_t dim) {
  auto p = MlpParams<T>::zeros({dim, dim});
  for (std::size_t i = 0; i < dim; ++i) p.weights[0](i, i) = T{1};
  return p;
}

template <typename T>
struct MlpTape {
  std::vector<std::vector<T>> inputs;          // activation entering layer l
  std::vector<std::vector<T>> pre_activations;  // W_l a_l + b_l
};

template <typename T>
struct MlpForward {
  std::vector<T> output;
  MlpTape<T> tape;
};

namespace detail {

template <typename T>
void check_input(const MlpParams<T>& params, std::size_t n) {
  if (params.num_layers() == 0) throw InputError("mlp: empty parameter set");
  if (n != params.input_dim()) {
    throw InputError("mlp: input length " + std::to_string(n) + " != layer_dims[0] " +
                     std::to_string(params.input_dim()));
  }
}

}  // namespace detail

template <typename T>
MlpForward<T> mlp_forward(std::span<const T> x, const MlpParams<T>& params) {
  detail::check_input(params, x.size());
  MlpForward<T> fwd;
  const std::size_t layers = params.num_layers();
  fwd.tape.inputs.reserve(layers);
  fwd.tape.pre_activations.reserve(layers);
  std::vector<T> act(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<T> z(params.layer_dims[l + 1]);
    affine<T>(params.weights[l], params.biases[l], act, z);
    fwd.tape.inputs.push_back(std::move(act));
    act = z;
    if (l + 1 < layers) {
      for (auto& v : act) v = v > T{0} ? v : T{0};
    }
    fwd.tape.pre_activations.push_back(std::move(z));
  }
  fwd.output = std::move(act);
  return fwd;
}

// Tape-free forward into `out`; arithmetic identical to mlp_forward.
template <typename T>
void mlp_apply(std::span<const T> x, const MlpParams<T>& params, std::span<T> out,
               std::vector<T>& scratch_a, std::vector<T>& scratch_b) {
  detail::check_input(params, x.size());
  if (out.size() != params.output_dim()) throw InputError("mlp_apply: output size mismatch");
  scratch_a.assign(x.begin(), x.end());
  const std::size_t layers = params.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    scratch_b.resize(params.layer_dims[l + 1]);
    affine<T>(params.weights[l], params.biases[l], scratch_a, scratch_b);
    if (l + 1 < layers) {
      for (auto& v : scratch_b) v = v > T{0} ? v : T{0};
    }
    std::swap(scratch_a, scratch_b);
  }
  std::copy(scratch_a.begin(), scratch_a.end(), out.begin());
}

template <typename T>
std::vector<T> mlp_apply(std::span<const T> x, const MlpParams<T>& params) {
  std::vector<T> out(params.output_dim()), a, b;
  mlp_apply<T>(x, params, out, a, b);
  return out;
}

// Accumulates d(loss)/d(theta) into `grads` given d(loss)/d(output).
// Returns d(loss)/d(input) when `input_grad` is non-empty.
template <typename T>
void mlp_backward_accumulate(const MlpParams<T>& params, const MlpTape<T>& tape,
                             std::span<const T> output_grad, MlpParams<T>& grads,
                             std::span<T> input_grad = {}) {
  const std::size_t layers = params.num_layers();
  if (tape.inputs.size() != layers || tape.pre_activations.size() != layers) {
    throw InputError("mlp_backward: tape depth does not match parameters");
  }
  if (grads.layer_dims != params.layer_dims) {
    throw InputError("mlp_backward: gradient shape does not match parameters");
  }
  if (output_grad.size() != params.output_dim()) {
    throw InputError("mlp_backward: output gradient length mismatch");
  }
  std::vector<T> delta(output_grad.begin(), output_grad.end());
  for (std::size_t l = layers; l-- > 0;) {
    const auto& z = tape.pre_activations[l];
    const auto& a = tape.inputs[l];
    if (z.size() != params.layer_dims[l + 1] || a.size() != params.layer_dims[l]) {
      throw InputError("mlp_backward: tape shape mismatch at layer " + std::to_string(l));
    }
    if (l + 1 < layers) {
      // ReLU subgradient at 0 is 0.
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (!(z[i] > T{0})) delta[i] = T{0};
      }
    }
    add_outer<T>(delta, a, grads.weights[l]);
    axpy<T>(T{1}, delta, grads.biases[l]);
    if (l > 0 || !input_grad.empty()) {
      std::vector<T> prev(params.layer_dims[l], T{0});
      add_transposed_product<T>(params.weights[l], delta, prev);
      delta = std::move(prev);
    }
  }
  if (!input_grad.empty()) {
    if (input_grad.size() != delta.size()) throw InputError("mlp_backward: input grad size");
    std::copy(delta.begin(), delta.end(), input_grad.begin());
  }
}

template <typename T>
MlpParams<T> mlp_backward(const MlpParams<T>& params, const MlpTape<T>& tape,
                          std::span<const T> output_grad) {
  auto grads = params.zeros_like();
  mlp_backward_accumulate<T>(params, tape, output_grad, grads);
  return grads;
}

template <typename T>
T min_abs_pre_activation(const MlpTape<T>& tape) {
  T best = std::numeric_limits<T>::infinity();
  // Output layer has no ReLU.
  for (std::size_t l = 0; l + 1 < tape.pre_activations.size(); ++l) {
    for (T v : tape.pre_activations[l]) best = std::min(best, std::abs(v));
  }
  return best;
}

}  // namespace grec
