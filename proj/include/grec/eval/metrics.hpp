#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace grec {

// Micro-averaged hit counts over prediction events.
struct MetricCounts {
  std::uint64_t events = 0;       // prediction events with non-empty truth
  std::uint64_t hits = 0;
  std::uint64_t slots = 0;        // K per event
  std::uint64_t truth_total = 0;  // sum of |truth|
  std::uint64_t skipped = 0;      // events without future purchases

  MetricCounts& operator+=(const MetricCounts& o) {
    events += o.events;
    hits += o.hits;
    slots += o.slots;
    truth_total += o.truth_total;
    skipped += o.skipped;
    return *this;
  }
  bool operator==(const MetricCounts&) const = default;

  double precision() const { return slots ? static_cast<double>(hits) / static_cast<double>(slots) : 0.0; }
  double recall() const {
    return truth_total ? static_cast<double>(hits) / static_cast<double>(truth_total) : 0.0;
  }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
};

struct MetricsReport {
  std::string name;
  MetricCounts counts;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> per_seed;  // empty for single-seed reports

  static MetricsReport from_counts(std::string name, const MetricCounts& c) {
    MetricsReport r;
    r.name = std::move(name);
    r.counts = c;
    r.precision = c.precision();
    r.recall = c.recall();
    r.f1 = c.f1();
    return r;
  }

  // Metrics of the pooled counts; per-seed spread kept for the table.
  static MetricsReport aggregate(std::string name, std::vector<MetricsReport> runs) {
    MetricCounts total;
    for (const auto& r : runs) total += r.counts;
    auto out = from_counts(std::move(name), total);
    for (const auto& r : runs) out.seeds.insert(out.seeds.end(), r.seeds.begin(), r.seeds.end());
    out.per_seed = std::move(runs);
    return out;
  }

  double stddev(double MetricsReport::*field) const {
    if (per_seed.size() < 2) return 0.0;
    double mean = 0.0;
    for (const auto& r : per_seed) mean += r.*field;
    mean /= static_cast<double>(per_seed.size());
    double ss = 0.0;
    for (const auto& r : per_seed) ss += (r.*field - mean) * (r.*field - mean);
    return std::sqrt(ss / static_cast<double>(per_seed.size() - 1));
  }
};

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["averaging"] = "micro";
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["scaled_1e4"] = {{"precision", std::round(r.precision * 1e4)},
                     {"recall", std::round(r.recall * 1e4)},
                     {"f1", std::round(r.f1 * 1e4)}};
  j["counts"] = {{"events", r.counts.events},         {"hits", r.counts.hits},
                 {"slots", r.counts.slots},           {"truth_total", r.counts.truth_total},
                 {"skipped_events", r.counts.skipped}};
  j["seeds"] = r.seeds;
  if (!r.per_seed.empty()) {
    j["std"] = {{"precision", r.stddev(&MetricsReport::precision)},
                {"recall", r.stddev(&MetricsReport::recall)},
                {"f1", r.stddev(&MetricsReport::f1)}};
    j["per_seed"] = nlohmann::json::array();
    for (const auto& s : r.per_seed) j["per_seed"].push_back(to_json(s));
  }
  return j;
}

// Relative F1 change of `r` over `base`, in percent.
inline double f1_improvement(const MetricsReport& r, const MetricsReport& base) {
  return base.f1 > 0.0 ? 100.0 * (r.f1 - base.f1) / base.f1 : 0.0;
}

// Aligned text table scaled by 1e4, with the first report as
// the improvement baseline.
inline std::string format_table(const std::vector<MetricsReport>& reports) {
  std::size_t w = 13;
  for (const auto& r : reports) w = std::max(w, r.name.size() + 2);
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << "configuration" << std::right
     << std::setw(16) << "precision" << std::setw(16) << "recall" << std::setw(16) << "f1"
     << std::setw(12) << "vs first" << '\n';
  auto cell = [&](const MetricsReport& r, double MetricsReport::*f) {
    std::ostringstream c;
    c << std::fixed << std::setprecision(0) << r.*f * 1e4;
    if (!r.per_seed.empty()) c << " +- " << std::setprecision(0) << r.stddev(f) * 1e4;
    os << std::setw(16) << c.str();
  };
  for (const auto& r : reports) {
    os << std::left << std::setw(static_cast<int>(w)) << r.name << std::right;
    cell(r, &MetricsReport::precision);
    cell(r, &MetricsReport::recall);
    cell(r, &MetricsReport::f1);
    std::ostringstream imp;
    imp << std::showpos << std::fixed << std::setprecision(1) << f1_improvement(r, reports.front()) << '%';
    os << std::setw(12) << imp.str() << '\n';
  }
  return os.str();
}

}  // namespace grec
