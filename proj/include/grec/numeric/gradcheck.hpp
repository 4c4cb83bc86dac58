#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "grec/numeric/rng.hpp"

namespace grec {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

template <typename T>
using LossAndGradient = std::function<std::pair<T, std::vector<T>>(std::span<const T>)>;

// Compares the analytic gradient at theta with central differences
// (f(theta + eps e_i) - f(theta - eps e_i)) / 2 eps. Relative error per
// coordinate is |a - n| / max(|a|, |n|, denominator_floor). When
// max_coordinates is non-zero and smaller than theta, a seeded random subset
// of coordinates is checked.
template <typename T>
GradCheckResult finite_difference_check(const LossAndGradient<T>& loss_fn,
                                        std::span<const T> theta, T epsilon,
                                        std::size_t max_coordinates = 0,
                                        std::uint64_t seed = 0,
                                        double denominator_floor = 1e-3) {
  const auto [value, analytic] = loss_fn(theta);
  (void)value;
  std::vector<std::size_t> coords(theta.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (max_coordinates != 0 && max_coordinates < coords.size()) {
    Rng rng(seed);
    for (std::size_t i = 0; i < max_coordinates; ++i) {
      std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
    }
    coords.resize(max_coordinates);
  }
  GradCheckResult result;
  std::vector<T> probe(theta.begin(), theta.end());
  for (std::size_t idx : coords) {
    const T saved = probe[idx];
    probe[idx] = saved + epsilon;
    const double f_plus = static_cast<double>(loss_fn(probe).first);
    probe[idx] = saved - epsilon;
    const double f_minus = static_cast<double>(loss_fn(probe).first);
    probe[idx] = saved;
    const double numeric = (f_plus - f_minus) / (2.0 * static_cast<double>(epsilon));
    const double a = static_cast<double>(analytic[idx]);
    const double denom = std::max({std::abs(a), std::abs(numeric), denominator_floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = idx;
    }
    ++result.coordinates_checked;
  }
  return result;
}

}  // namespace grec
