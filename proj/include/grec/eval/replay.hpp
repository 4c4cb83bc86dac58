#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "grec/eval/metrics.hpp"
#include "grec/eval/split.hpp"
#include "grec/graph/events.hpp"
#include "grec/graph/features.hpp"

namespace grec {

struct ReplayEvent {
  std::uint32_t item = 0;  // catalog row
  InteractionType kind = InteractionType::Click;
  std::int64_t timestamp = 0;
};

// One user's stream, stably sorted by timestamp (file order breaks ties).
struct UserStream {
  std::string user_id;
  std::vector<ReplayEvent> events;
};

// Events whose item is not in the catalog are dropped and counted.
template <typename T>
std::vector<UserStream> group_user_streams(std::span<const Event> events,
                                           const FeatureStore<T>& catalog,
                                           std::size_t* unknown_items = nullptr) {
  std::vector<UserStream> streams;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t unknown = 0;
  for (const auto& e : events) {
    const auto row = catalog.find(e.item_id);
    if (!row) {
      ++unknown;
      continue;
    }
    auto [it, fresh] = index.try_emplace(e.user_id, streams.size());
    if (fresh) streams.push_back({e.user_id, {}});
    streams[it->second].events.push_back({*row, e.kind, e.timestamp});
  }
  for (auto& s : streams) {
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const ReplayEvent& a, const ReplayEvent& b) { return a.timestamp < b.timestamp; });
  }
  if (unknown_items) *unknown_items = unknown;
  return streams;
}

// Next `t` distinct purchased items strictly after event `i`, in order.
inline std::vector<std::uint32_t> future_purchases(std::span<const ReplayEvent> events,
                                                   std::size_t i, std::size_t t) {
  std::vector<std::uint32_t> truth;
  const auto now = events[i].timestamp;
  for (std::size_t j = i + 1; j < events.size() && truth.size() < t; ++j) {
    const auto& e = events[j];
    if (e.kind != InteractionType::Purchase || e.timestamp <= now) continue;
    if (std::find(truth.begin(), truth.end(), e.item) == truth.end()) truth.push_back(e.item);
  }
  return truth;
}

class UserSession {
 public:
  virtual ~UserSession() = default;
  virtual void observe(const ReplayEvent& e) = 0;
  virtual std::vector<std::uint32_t> recommend(std::size_t k) = 0;
  virtual void end_of_day() {}
};

class Runtime {
 public:
  virtual ~Runtime() = default;
  virtual std::string name() const = 0;
  // `stream` is the user's whole test stream (only the oracle looks ahead).
  virtual std::unique_ptr<UserSession> start(const UserStream& stream) const = 0;
};

struct ReplayOptions {
  std::size_t k = 10;
  std::size_t t = 12;
  bool daily_cold_start = false;
  std::size_t threads = 1;
};

inline MetricCounts replay_user(const Runtime& runtime, const UserStream& stream,
                                const ReplayOptions& opt) {
  MetricCounts c;
  auto session = runtime.start(stream);
  const auto& ev = stream.events;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (opt.daily_cold_start && i > 0 && utc_day(ev[i].timestamp) != utc_day(ev[i - 1].timestamp)) {
      session->end_of_day();
    }
    session->observe(ev[i]);
    const auto recs = session->recommend(opt.k);
    const auto truth = future_purchases(ev, i, opt.t);
    if (truth.empty()) {
      ++c.skipped;
      continue;
    }
    ++c.events;
    c.slots += opt.k;
    c.truth_total += truth.size();
    for (auto r : recs) c.hits += std::find(truth.begin(), truth.end(), r) != truth.end();
  }
  return c;
}

// Users are independent; counts are integers, so the split across threads
// does not change the result.
inline MetricsReport evaluate_stream(const Runtime& runtime, std::span<const UserStream> streams,
                                     const ReplayOptions& opt) {
  if (opt.k < 1 || opt.t < 1) throw InputError("evaluate_stream: K and T must be >= 1");
  std::vector<MetricCounts> per_user(streams.size());
  const std::size_t threads = std::max<std::size_t>(1, std::min(opt.threads, streams.size()));
  std::vector<std::exception_ptr> failures(threads);
  auto work = [&](std::size_t tid) {
    try {
      for (std::size_t u = tid; u < streams.size(); u += threads) {
        per_user[u] = replay_user(runtime, streams[u], opt);
      }
    } catch (...) {
      failures[tid] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  MetricCounts total;
  for (const auto& c : per_user) total += c;
  return MetricsReport::from_counts(runtime.name(), total);
}

}  // namespace grec
