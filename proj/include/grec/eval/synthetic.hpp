#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "grec/error.hpp"
#include "grec/eval/split.hpp"
#include "grec/graph/events.hpp"
#include "grec/graph/features.hpp"
#include "grec/numeric/rng.hpp"

namespace grec {

struct SyntheticConfig {
  std::size_t n_users = 2000;
  std::size_t n_items = 500;
  std::size_t n_clusters = 8;
  std::size_t feature_dim = 32;
  std::size_t days = 21;
  std::size_t events_per_user_per_day = 6;
  double preference_sharpness = 5.0;
  std::uint64_t seed = 0;

  // Prototypes and user taste live in the first signal_dims coordinates (0:
  // all); the remaining ones carry noise that no behaviour depends on.
  std::size_t signal_dims = 0;
  double prototype_scale = 1.0;  // per-dimension spread of the cluster prototypes
  double feature_noise = 1.0;    // isotropic item noise around its prototype
  double style_strength = 1.5;   // how sharply a user's taste picks items within a cluster
  double explore_prob = 0.15;    // non-purchase events on a uniformly random item
  double active_prob = 0.6;      // chance a user shows up on a given day
  std::int64_t start_timestamp = 1699920000;  // a UTC midnight

  void validate() const {
    if (n_users < 1 || n_items < 1 || n_clusters < 1 || feature_dim < 1 || days < 1 ||
        events_per_user_per_day < 1) {
      throw InputError("SyntheticConfig: all counts must be >= 1");
    }
    if (n_clusters > n_items) throw InputError("SyntheticConfig: n_clusters must be <= n_items");
    if (signal_dims > feature_dim) throw InputError("SyntheticConfig: signal_dims must be <= feature_dim");
    if (start_timestamp % kSecondsPerDay != 0) {
      throw InputError("SyntheticConfig: start_timestamp must be a UTC midnight");
    }
  }

  bool operator==(const SyntheticConfig&) const = default;
};

struct SyntheticDataset {
  std::vector<Event> events;  // chronological
  FeatureStore<float> features;
  std::vector<std::uint32_t> item_cluster;
  std::vector<std::vector<double>> user_preferences;  // over clusters
};

inline std::string synthetic_item_id(std::size_t i) { return "item" + std::to_string(i); }
inline std::string synthetic_user_id(std::size_t u) { return "user" + std::to_string(u); }

// Item features are a cluster prototype plus isotropic noise. Users visit in
// one session per active day, browsing a cluster drawn from their preference
// distribution. Within a cluster, items are chosen by the user's private
// taste, a random direction applied to the item's offset from its prototype. Purchases always come from
// the session cluster; other interactions occasionally explore at random.
inline SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticDataset ds;
  Rng rng(derive_seed(cfg.seed, {0x53594E54ULL}));
  const std::size_t d = cfg.feature_dim;
  const std::size_t signal = cfg.signal_dims ? cfg.signal_dims : d;

  std::vector<std::vector<double>> proto(cfg.n_clusters, std::vector<double>(d, 0.0));
  for (auto& p : proto) {
    for (std::size_t k = 0; k < signal; ++k) p[k] = cfg.prototype_scale * rng.normal();
  }
  // every cluster gets at least one item
  ds.item_cluster.resize(cfg.n_items);
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    ds.item_cluster[i] = static_cast<std::uint32_t>(i < cfg.n_clusters ? i : rng.below(cfg.n_clusters));
  }
  std::vector<std::vector<std::uint32_t>> members(cfg.n_clusters);
  for (std::uint32_t i = 0; i < cfg.n_items; ++i) members[ds.item_cluster[i]].push_back(i);

  ds.features = FeatureStore<float>(d);
  std::vector<std::vector<double>> noise(cfg.n_items, std::vector<double>(d));
  std::vector<float> row(d);
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    const auto& p = proto[ds.item_cluster[i]];
    for (std::size_t k = 0; k < d; ++k) {
      noise[i][k] = cfg.feature_noise * rng.normal();
      row[k] = static_cast<float>(p[k] + noise[i][k]);
    }
    ds.features.add(synthetic_item_id(i), row);
  }

  struct Profile {
    std::vector<double> cluster_cdf;
    std::vector<std::vector<double>> item_cdf;  // per cluster, over its members
  };
  std::vector<Profile> profiles(cfg.n_users);
  const double taste_scale = 1.0 / std::sqrt(static_cast<double>(signal));
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    std::vector<double> z(cfg.n_clusters);
    for (auto& v : z) v = rng.normal();
    const double zmax = *std::max_element(z.begin(), z.end());
    std::vector<double> pref(cfg.n_clusters);
    double total = 0.0;
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
      pref[c] = std::isinf(cfg.preference_sharpness)
                    ? (z[c] == zmax ? 1.0 : 0.0)
                    : std::exp(cfg.preference_sharpness * (z[c] - zmax));
      total += pref[c];
    }
    auto& prof = profiles[u];
    double acc = 0.0;
    for (auto& p : pref) {
      p /= total;
      acc += p;
      prof.cluster_cdf.push_back(acc);
    }
    ds.user_preferences.push_back(pref);
    std::vector<double> taste(signal);
    for (auto& v : taste) v = rng.normal() * taste_scale;
    prof.item_cdf.resize(cfg.n_clusters);
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
      double a = 0.0;
      for (auto i : members[c]) {
        double s = 0.0;
        for (std::size_t k = 0; k < signal; ++k) s += taste[k] * noise[i][k];
        a += std::exp(cfg.style_strength * s);
        prof.item_cdf[c].push_back(a);
      }
    }
  }

  auto pick = [&](const std::vector<double>& cdf) {
    const double x = rng.uniform() * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), x);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                             static_cast<std::ptrdiff_t>(cdf.size()) - 1));
  };
  for (std::size_t day = 0; day < cfg.days; ++day) {
    const std::int64_t day_start = cfg.start_timestamp + static_cast<std::int64_t>(day) * kSecondsPerDay;
    std::vector<Event> today;
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
      if (rng.uniform() >= cfg.active_prob) continue;
      const auto& prof = profiles[u];
      const std::size_t c = pick(prof.cluster_cdf);
      std::int64_t t = day_start + 8 * 3600 + static_cast<std::int64_t>(rng.below(14 * 3600));
      for (std::size_t j = 0; j < cfg.events_per_user_per_day; ++j) {
        const double r = rng.uniform();
        const InteractionType kind = r < 0.7   ? InteractionType::Click
                                     : r < 0.8 ? InteractionType::Favorite
                                     : r < 0.9 ? InteractionType::Cart
                                               : InteractionType::Purchase;
        std::uint32_t item;
        if (kind != InteractionType::Purchase && rng.uniform() < cfg.explore_prob) {
          item = static_cast<std::uint32_t>(rng.below(cfg.n_items));
        } else {
          item = members[c][pick(prof.item_cdf[c])];
        }
        t = std::min<std::int64_t>(t + 30 + static_cast<std::int64_t>(rng.below(240)),
                                   day_start + kSecondsPerDay - 1);
        today.push_back({synthetic_user_id(u), synthetic_item_id(item), kind, t});
      }
    }
    std::stable_sort(today.begin(), today.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    ds.events.insert(ds.events.end(), today.begin(), today.end());
  }
  return ds;
}

}  // namespace grec
