#pragma once

#include <span>
#include <string>
#include <vector>

#include "grec/error.hpp"
#include "grec/numeric/matrix.hpp"

namespace grec {

struct SgdConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw InputError("SgdConfig: learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) throw InputError("SgdConfig: weight_decay must be >= 0");
  }
  bool operator==(const SgdConfig&) const = default;
};

// A parameter set is any type with `value_type` and visit_blocks(f(name, span)).
// Its gradient set is an object of the same type and shape.

template <typename P>
std::size_t flat_size(const P& params) {
  std::size_t n = 0;
  params.visit_blocks([&](const std::string&, auto block) { n += block.size(); });
  return n;
}

template <typename P>
std::vector<typename P::value_type> flatten(const P& params) {
  std::vector<typename P::value_type> out;
  out.reserve(flat_size(params));
  params.visit_blocks([&](const std::string&, auto block) {
    out.insert(out.end(), block.begin(), block.end());
  });
  return out;
}

template <typename P>
void assign_flat(P& params, std::span<const typename P::value_type> values) {
  if (values.size() != flat_size(params)) throw InputError("assign_flat: length mismatch");
  std::size_t offset = 0;
  params.visit_blocks([&](const std::string&, auto block) {
    for (auto& v : block) v = values[offset++];
  });
}

namespace detail {

template <typename P>
std::vector<std::span<const typename P::value_type>> const_blocks(const P& p) {
  std::vector<std::span<const typename P::value_type>> out;
  p.visit_blocks([&](const std::string&, auto block) { out.emplace_back(block.data(), block.size()); });
  return out;
}

template <typename P>
void require_congruent(const P& a, const P& b, const char* what) {
  std::vector<std::pair<std::string, std::size_t>> sa, sb;
  a.visit_blocks([&](const std::string& n, auto block) { sa.emplace_back(n, block.size()); });
  b.visit_blocks([&](const std::string& n, auto block) { sb.emplace_back(n, block.size()); });
  if (sa != sb) throw InputError(std::string(what) + ": gradient shape mismatch");
}

}  // namespace detail

// theta <- theta - lr * (g + weight_decay * theta). The whole step is
// rejected, params untouched, if any gradient entry is non-finite.
template <typename P>
void sgd_step_inplace(P& params, const P& grads, const SgdConfig& cfg) {
  using T = typename P::value_type;
  cfg.validate();
  detail::require_congruent(params, grads, "sgd_step");
  std::string bad_block;
  grads.visit_blocks([&](const std::string& name, auto block) {
    if (bad_block.empty() && !all_finite(std::span<const T>(block.data(), block.size()))) {
      bad_block = name;
    }
  });
  if (!bad_block.empty()) {
    throw InputError("sgd_step: non-finite gradient in block '" + bad_block + "'");
  }
  const auto g = detail::const_blocks(grads);
  const T lr = static_cast<T>(cfg.learning_rate);
  const T wd = static_cast<T>(cfg.weight_decay);
  std::size_t i = 0;
  params.visit_blocks([&](const std::string&, auto block) {
    const auto gb = g[i++];
    for (std::size_t k = 0; k < block.size(); ++k) {
      block[k] = block[k] - lr * (gb[k] + wd * block[k]);
    }
  });
}

template <typename P>
P sgd_step(P params, const P& grads, const SgdConfig& cfg) {
  sgd_step_inplace(params, grads, cfg);
  return params;
}

// acc += scale * other
template <typename P>
void accumulate_scaled(P& acc, const P& other, typename P::value_type scale) {
  detail::require_congruent(acc, other, "accumulate_scaled");
  const auto src = detail::const_blocks(other);
  std::size_t i = 0;
  acc.visit_blocks([&](const std::string&, auto block) {
    const auto s = src[i++];
    for (std::size_t k = 0; k < block.size(); ++k) block[k] += scale * s[k];
  });
}

template <typename P>
bool params_finite(const P& params) {
  bool ok = true;
  params.visit_blocks([&](const std::string&, auto block) {
    using T = typename P::value_type;
    ok = ok && all_finite(std::span<const T>(block.data(), block.size()));
  });
  return ok;
}

}  // namespace grec
