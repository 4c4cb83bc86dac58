#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grec/error.hpp"
#include "grec/graph/events.hpp"
#include "grec/graph/features.hpp"
#include "grec/numeric/checkpoint.hpp"
#include "grec/numeric/mlp.hpp"
#include "grec/numeric/rng.hpp"
#include "grec/numeric/sgd.hpp"
#include "grec/personal/knn.hpp"
#include "grec/personal/triplet.hpp"
#include "grec/student/distill.hpp"

namespace grec {

enum class ExcludePolicy : std::uint8_t { None = 0, Purchased = 1, Interacted = 2 };

inline std::string_view to_string(ExcludePolicy p) noexcept {
  switch (p) {
    case ExcludePolicy::None: return "none";
    case ExcludePolicy::Purchased: return "purchased";
    case ExcludePolicy::Interacted: return "interacted";
  }
  return "?";
}

inline std::optional<ExcludePolicy> parse_exclude_policy(std::string_view s) noexcept {
  for (auto p : {ExcludePolicy::None, ExcludePolicy::Purchased, ExcludePolicy::Interacted}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

struct PersonalizationConfig {
  double alpha = 0.5;
  double margin = 1.0;  // +inf: no hinge
  SgdConfig sgd{1e-2, 0.0};
  std::size_t adapt_every = 5;
  std::size_t base_steps = 8;  // steps = round(base_steps * mean(w) / 4)
  std::size_t k = 10;
  ExcludePolicy exclude = ExcludePolicy::Purchased;
  std::size_t negatives_capacity = 50;
  std::size_t ema_window = 32;
  bool adapt = true;  // false: global student + EMA only
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("PersonalizationConfig: alpha must be in (0, 1]");
    if (!(margin > 0.0)) throw InputError("PersonalizationConfig: margin must be positive");
    if (adapt_every < 1) throw InputError("PersonalizationConfig: adapt_every must be >= 1");
    if (k < 1) throw InputError("PersonalizationConfig: K must be >= 1");
    if (negatives_capacity < 1) throw InputError("PersonalizationConfig: negatives_capacity must be >= 1");
    if (ema_window < 1) throw InputError("PersonalizationConfig: ema_window must be >= 1");
    sgd.validate();
  }

  bool operator==(const PersonalizationConfig&) const = default;
};

inline std::size_t adaptation_steps(std::size_t base_steps, std::span<const InteractionType> kinds) {
  if (kinds.empty()) return 0;
  double w = 0.0;
  for (auto k : kinds) w += interaction_weight(k);
  w /= static_cast<double>(kinds.size());
  return static_cast<std::size_t>(std::llround(static_cast<double>(base_steps) * w / 4.0));
}

// A user's model and the catalog projected by it, published together.
template <typename T>
struct ModelSnapshot {
  MlpParams<T> mlp;
  DenseMatrix<T> projection;
  std::uint64_t version = 0;
};

// The catalog every user shares (read-only after construction).
template <typename T>
struct Catalog {
  FeatureStore<T> features;
  std::shared_ptr<const ModelSnapshot<T>> global;  // global student + its projection

  static std::shared_ptr<const Catalog> create(FeatureStore<T> features, MlpParams<T> student,
                                               std::size_t threads = 1) {
    auto c = std::make_shared<Catalog>();
    c->features = std::move(features);
    auto snap = std::make_shared<ModelSnapshot<T>>();
    snap->projection = project_catalog(student, c->features, threads);
    snap->mlp = std::move(student);
    c->global = std::move(snap);
    return c;
  }

  std::size_t size() const noexcept { return features.size(); }
};

struct PendingInteraction {
  std::uint32_t item = 0;
  InteractionType kind = InteractionType::Click;
  bool operator==(const PendingInteraction&) const = default;
};

template <typename T>
struct EmaComponent {
  std::uint32_t item = 0;
  std::vector<T> projection;
  bool operator==(const EmaComponent&) const = default;
};

struct AdaptationReport {
  std::size_t interactions = 0;  // batch size
  double mean_weight = 0.0;
  std::size_t steps = 0;
  double pre_loss = 0.0;
  double post_loss = 0.0;
  double pre_positive_distance = 0.0;
  double post_positive_distance = 0.0;
  bool skipped_no_negatives = false;
  bool rolled_back = false;
  bool ema_approximate = false;  // older EMA history kept as an unchanged residual
  std::uint64_t version = 0;
  double wallclock_ms = 0.0;
};

template <typename T>
struct UserState {
  std::string user_id;
  std::shared_ptr<const ModelSnapshot<T>> snapshot;
  std::optional<std::vector<T>> u;
  std::uint64_t interactions = 0;  // t
  std::vector<PendingInteraction> pending;
  std::deque<std::uint32_t> negatives_pool;
  std::deque<EmaComponent<T>> ema_window;  // last interactions, oldest first
  std::vector<T> ema_residual;             // u minus the windowed contributions
  std::vector<std::uint32_t> purchased;    // sorted
  std::vector<std::uint32_t> interacted;   // sorted
  std::uint64_t adaptations = 0;

  std::shared_ptr<const ModelSnapshot<T>> current() const { return std::atomic_load(&snapshot); }
  void publish(std::shared_ptr<const ModelSnapshot<T>> next) { std::atomic_store(&snapshot, std::move(next)); }
};

namespace detail {

inline bool sorted_contains(const std::vector<std::uint32_t>& v, std::uint32_t x) {
  return std::binary_search(v.begin(), v.end(), x);
}

inline void sorted_insert(std::vector<std::uint32_t>& v, std::uint32_t x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) v.insert(it, x);
}

// Weight of interaction k (1-based) in u_t.
inline double ema_coefficient(double alpha, std::uint64_t t, std::uint64_t k) {
  const double keep = std::pow(1.0 - alpha, static_cast<double>(t - k));
  return k == 1 ? keep : alpha * keep;
}

}  // namespace detail

template <typename T>
UserState<T> init_user(std::string user_id, const Catalog<T>& catalog) {
  UserState<T> s;
  s.user_id = std::move(user_id);
  s.snapshot = catalog.global;  // shared until the first adaptation replaces it
  return s;
}

template <typename T>
std::uint32_t catalog_row(const Catalog<T>& catalog, std::string_view item) {
  const auto row = catalog.features.find(item);
  if (!row) throw InputError("unknown item '" + std::string(item) + "'");
  return *row;
}

// Re-projects the windowed EMA inputs under `mlp`; older history stays as
// the residual vector.
template <typename T>
void recompute_user_vector(UserState<T>& s, const Catalog<T>& catalog, const MlpParams<T>& mlp,
                           double alpha) {
  if (!s.u) return;
  const std::uint64_t t = s.interactions;
  const std::uint64_t first = t - s.ema_window.size() + 1;
  std::vector<T> u = s.ema_residual;
  std::vector<T> a, b;
  for (std::size_t i = 0; i < s.ema_window.size(); ++i) {
    auto& c = s.ema_window[i];
    mlp_apply<T>(catalog.features.row(c.item), mlp, c.projection, a, b);
    axpy<T>(static_cast<T>(detail::ema_coefficient(alpha, t, first + i)), c.projection, u);
  }
  s.u = std::move(u);
}

template <typename T>
AdaptationReport adapt_user_model(UserState<T>& s, const Catalog<T>& catalog,
                                  const PersonalizationConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  AdaptationReport rep;
  const auto snap = s.current();
  rep.version = snap->version;
  rep.interactions = s.pending.size();
  std::vector<InteractionType> kinds;
  for (const auto& p : s.pending) kinds.push_back(p.kind);
  for (auto k : kinds) rep.mean_weight += interaction_weight(k);
  if (!kinds.empty()) rep.mean_weight /= static_cast<double>(kinds.size());
  rep.steps = adaptation_steps(cfg.base_steps, kinds);
  auto finish = [&] {
    s.pending.clear();
    rep.wallclock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  };
  if (s.pending.empty()) return finish();
  if (s.negatives_pool.empty()) {
    rep.skipped_no_negatives = true;
    rep.steps = 0;
    return finish();
  }
  if (rep.steps == 0) return finish();

  std::vector<std::span<const T>> positives;
  for (const auto& p : s.pending) positives.push_back(catalog.features.row(p.item));
  const auto anchor = weighted_centroid<T>(positives, kinds);
  const std::vector<std::uint32_t> pool(s.negatives_pool.begin(), s.negatives_pool.end());
  Rng rng(derive_seed(cfg.seed, {stable_hash(s.user_id), s.adaptations}));
  auto draw_negatives = [&] {
    std::vector<std::span<const T>> neg;
    for (std::size_t i = 0; i < positives.size(); ++i) {
      neg.push_back(catalog.features.row(pool[rng.below(pool.size())]));
    }
    return neg;
  };
  const auto eval_negatives = draw_negatives();

  MlpParams<T> mlp = snap->mlp;
  const auto pre = triplet_loss<T>(mlp, anchor, positives, eval_negatives, cfg.margin, false);
  rep.pre_loss = static_cast<double>(pre.value);
  rep.pre_positive_distance = static_cast<double>(pre.positive_distance);
  bool ok = true;
  for (std::size_t step = 0; step < rep.steps && ok; ++step) {
    const auto negs = draw_negatives();
    const auto loss = triplet_loss<T>(mlp, anchor, positives, negs, cfg.margin);
    if (!std::isfinite(static_cast<double>(loss.value))) {
      ok = false;
      break;
    }
    if (loss.active == 0) continue;
    try {
      sgd_step_inplace(mlp, loss.grads, cfg.sgd);
    } catch (const InputError&) {
      ok = false;
    }
  }
  const auto post = ok ? triplet_loss<T>(mlp, anchor, positives, eval_negatives, cfg.margin, false)
                       : pre;
  ok = ok && std::isfinite(static_cast<double>(post.value)) && params_finite(mlp);
  ++s.adaptations;
  if (!ok) {
    rep.rolled_back = true;
    rep.post_loss = rep.pre_loss;
    rep.post_positive_distance = rep.pre_positive_distance;
    return finish();
  }
  rep.post_loss = static_cast<double>(post.value);
  rep.post_positive_distance = static_cast<double>(post.positive_distance);

  auto next = std::make_shared<ModelSnapshot<T>>();
  next->projection = project_catalog(mlp, catalog.features);
  next->mlp = std::move(mlp);
  next->version = snap->version + 1;
  rep.version = next->version;
  recompute_user_vector(s, catalog, next->mlp, cfg.alpha);
  rep.ema_approximate = s.interactions > s.ema_window.size();
  s.publish(std::move(next));
  return finish();
}

template <typename T>
std::optional<AdaptationReport> observe(UserState<T>& s, const Catalog<T>& catalog,
                                        std::uint32_t item, InteractionType kind,
                                        std::span<const std::uint32_t> shown,
                                        const PersonalizationConfig& cfg) {
  if (item >= catalog.size()) throw InputError("observe: unknown item row " + std::to_string(item));
  const auto snap = s.current();
  const auto v_span = snap->projection.row(item);
  std::vector<T> v(v_span.begin(), v_span.end());
  const T a = static_cast<T>(cfg.alpha);
  ++s.interactions;
  if (!s.u) {
    s.u = v;
    s.ema_residual.assign(v.size(), T{0});
  } else {
    auto& u = *s.u;
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = (T{1} - a) * u[k] + a * v[k];
    for (auto& r : s.ema_residual) r *= (T{1} - a);
  }
  if (cfg.ema_window > 0) {
    if (s.ema_window.size() == cfg.ema_window) {
      // the oldest windowed contribution moves into the residual
      const auto& old = s.ema_window.front();
      const auto k = s.interactions - s.ema_window.size();
      axpy<T>(static_cast<T>(detail::ema_coefficient(cfg.alpha, s.interactions, k)), old.projection,
              s.ema_residual);
      s.ema_window.pop_front();
    }
    s.ema_window.push_back({item, std::move(v)});
  }

  s.pending.push_back({item, kind});
  detail::sorted_insert(s.interacted, item);
  if (kind == InteractionType::Purchase) detail::sorted_insert(s.purchased, item);
  std::erase(s.negatives_pool, item);
  for (auto sh : shown) {
    if (sh >= catalog.size() || detail::sorted_contains(s.interacted, sh)) continue;
    if (std::find(s.negatives_pool.begin(), s.negatives_pool.end(), sh) != s.negatives_pool.end()) continue;
    s.negatives_pool.push_back(sh);
    if (s.negatives_pool.size() > cfg.negatives_capacity) s.negatives_pool.pop_front();
  }

  if (s.pending.size() < cfg.adapt_every) return std::nullopt;
  if (!cfg.adapt) {
    s.pending.clear();
    return std::nullopt;
  }
  return adapt_user_model(s, catalog, cfg);
}

// Daily cold start: the personal model and its projection are deleted; the
// session's EMA is re-expressed under the global model.
template <typename T>
void reset_personalization(UserState<T>& s, const Catalog<T>& catalog,
                           const PersonalizationConfig& cfg) {
  s.pending.clear();
  if (s.current() == catalog.global) return;
  s.publish(catalog.global);
  recompute_user_vector(s, catalog, catalog.global->mlp, cfg.alpha);
}

template <typename T>
struct Recommendation {
  std::vector<std::uint32_t> items;
  std::vector<T> distances;  // Euclidean
  bool truncated = false;    // fewer than K eligible items
  std::uint64_t version = 0;
};

template <typename T>
Recommendation<T> recommend(const UserState<T>& s, std::size_t k, ExcludePolicy policy) {
  if (!s.u) throw InputError("recommend: no user vector for '" + s.user_id + "' (no interactions yet)");
  const auto snap = s.current();
  const std::vector<std::uint32_t>* ex = nullptr;
  if (policy == ExcludePolicy::Purchased) ex = &s.purchased;
  if (policy == ExcludePolicy::Interacted) ex = &s.interacted;
  std::vector<Neighbor<T>> nn;
  if (ex && !ex->empty()) {
    nn = nearest_k<T>(snap->projection, *s.u, k,
                      [ex](std::uint32_t r) { return detail::sorted_contains(*ex, r); });
  } else {
    nn = nearest_k<T>(snap->projection, *s.u, k);
  }
  Recommendation<T> out;
  out.version = snap->version;
  out.truncated = nn.size() < k;
  for (const auto& n : nn) {
    out.items.push_back(n.index);
    out.distances.push_back(std::sqrt(n.squared_distance));
  }
  return out;
}

// "GUSR" | u16 version | user id | u64 t | u64 adaptations | u64 model version |
// MLP checkpoint (length-prefixed) | u8 has_u, u | pending (id, kind) |
// negatives pool ids | EMA window (id, projection) | residual | purchased | interacted.
// Items are stored by id; the catalog projection is recomputed on load.
inline constexpr std::string_view kUserMagic = "GUSR";

template <typename T>
void save_user(std::ostream& os, const UserState<T>& s, const Catalog<T>& catalog) {
  io::Writer w(os);
  const auto snap = s.current();
  w.bytes(kUserMagic);
  w.u16(1);
  w.string(s.user_id);
  w.u64(s.interactions);
  w.u64(s.adaptations);
  w.u64(snap->version);
  w.string(mlp_to_bytes(snap->mlp));
  auto vec = [&](const std::vector<T>& v) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.array(std::span<const T>(v));
  };
  auto id = [&](std::uint32_t row) { w.string(catalog.features.id(row)); };
  auto ids = [&](const auto& rows) {
    w.u32(static_cast<std::uint32_t>(rows.size()));
    for (auto r : rows) id(r);
  };
  w.u8(s.u ? 1 : 0);
  if (s.u) vec(*s.u);
  w.u32(static_cast<std::uint32_t>(s.pending.size()));
  for (const auto& p : s.pending) {
    id(p.item);
    w.u8(static_cast<std::uint8_t>(p.kind));
  }
  ids(s.negatives_pool);
  w.u32(static_cast<std::uint32_t>(s.ema_window.size()));
  for (const auto& c : s.ema_window) {
    id(c.item);
    vec(c.projection);
  }
  vec(s.ema_residual);
  ids(s.purchased);
  ids(s.interacted);
  w.check();
}

template <typename T>
UserState<T> load_user(std::istream& is, const Catalog<T>& catalog) {
  io::Reader r(is);
  r.expect_magic(kUserMagic);
  if (r.u16() != 1) throw FormatError("user state: unsupported version");
  UserState<T> s;
  s.user_id = r.string();
  s.interactions = r.u64();
  s.adaptations = r.u64();
  const auto version = r.u64();
  auto snap = std::make_shared<ModelSnapshot<T>>();
  snap->mlp = mlp_from_bytes<T>(r.string(1u << 30));
  snap->version = version;
  if (snap->mlp.input_dim() != catalog.features.dim() ||
      snap->mlp.output_dim() != catalog.global->mlp.output_dim()) {
    throw FormatError("user state: model does not match the catalog");
  }
  const std::size_t d = snap->mlp.output_dim();
  auto vec = [&] {
    const auto n = r.u32();
    if (n != d) throw FormatError("user state: vector length mismatch");
    std::vector<T> v(n);
    r.array(std::span<T>(v));
    return v;
  };
  auto id = [&] {
    const auto name = r.string();
    const auto row = catalog.features.find(name);
    if (!row) throw FormatError("user state: unknown item '" + name + "'");
    return *row;
  };
  auto count = [&] {
    const auto n = r.u32();
    if (n > (1u << 24)) throw FormatError("user state: list length out of range");
    return n;
  };
  if (r.u8()) s.u = vec();
  for (auto n = count(); n > 0; --n) {
    const auto item = id();
    const auto kind = r.u8();
    if (kind >= kNumRelations) throw FormatError("user state: bad interaction kind");
    s.pending.push_back({item, static_cast<InteractionType>(kind)});
  }
  for (auto n = count(); n > 0; --n) s.negatives_pool.push_back(id());
  for (auto n = count(); n > 0; --n) {
    const auto item = id();
    s.ema_window.push_back({item, vec()});
  }
  if (s.u) {
    s.ema_residual = vec();
  } else if (r.u32() != 0) {
    throw FormatError("user state: residual without user vector");
  }
  for (auto n = count(); n > 0; --n) s.purchased.push_back(id());
  for (auto n = count(); n > 0; --n) s.interacted.push_back(id());
  std::sort(s.purchased.begin(), s.purchased.end());
  std::sort(s.interacted.begin(), s.interacted.end());
  if (version == 0 && snap->mlp == catalog.global->mlp) {
    s.snapshot = catalog.global;
  } else {
    snap->projection = project_catalog(snap->mlp, catalog.features);
    s.snapshot = std::move(snap);
  }
  return s;
}

}  // namespace grec
