#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grec/error.hpp"
#include "grec/graph/events.hpp"
#include "grec/numeric/rng.hpp"

namespace grec {

inline constexpr std::int64_t kSecondsPerDay = 86400;

// UTC day index (floor division, correct for negative timestamps).
constexpr std::int64_t utc_day(std::int64_t ts) noexcept {
  return ts >= 0 ? ts / kSecondsPerDay : -((-ts + kSecondsPerDay - 1) / kSecondsPerDay);
}

struct SplitResult {
  std::vector<Event> train;       // train days, users not held out
  std::vector<Event> validation;  // train days, held-out users
  std::vector<Event> test;
  std::int64_t train_begin = 0;  // seconds, half-open ranges
  std::int64_t test_begin = 0;
  std::int64_t test_end = 0;
};

inline bool is_validation_user(std::string_view user, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0) return false;
  const auto h = derive_seed(seed, {stable_hash(user)});
  return static_cast<double>(h >> 11) * 0x1.0p-53 < fraction;
}

// The first `train_days` UTC days (counted from the earliest event) train,
// the following `test_days` test. Event order is preserved in every part.
inline SplitResult temporal_split(std::span<const Event> events, std::int64_t train_days,
                                  std::int64_t test_days, double validation_fraction = 0.10,
                                  std::uint64_t seed = 0) {
  if (train_days < 1 || test_days < 1) throw InputError("temporal_split: day counts must be >= 1");
  if (events.empty()) throw InputError("temporal_split: no events");
  std::int64_t lo = events.front().timestamp, hi = lo;
  for (const auto& e : events) {
    lo = std::min(lo, e.timestamp);
    hi = std::max(hi, e.timestamp);
  }
  const auto first_day = utc_day(lo);
  const auto span_days = utc_day(hi) - first_day + 1;
  if (span_days < train_days + test_days) {
    throw InputError("temporal_split: events span " + std::to_string(span_days) + " day(s), need " +
                     std::to_string(train_days + test_days));
  }
  SplitResult out;
  out.train_begin = first_day * kSecondsPerDay;
  out.test_begin = (first_day + train_days) * kSecondsPerDay;
  out.test_end = (first_day + train_days + test_days) * kSecondsPerDay;
  for (const auto& e : events) {
    if (e.timestamp < out.test_begin) {
      (is_validation_user(e.user_id, validation_fraction, seed) ? out.validation : out.train)
          .push_back(e);
    } else if (e.timestamp < out.test_end) {
      out.test.push_back(e);
    }
  }
  return out;
}

}  // namespace grec
