#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "grec/eval/replay.hpp"
#include "grec/personal/user.hpp"

namespace grec {

// Global or personal student with EMA user vectors and exact K-NN. The
// items recommended last are what the user was shown at the next step.
template <typename T>
class PersonalizedRuntime final : public Runtime {
 public:
  PersonalizedRuntime(std::string name, std::shared_ptr<const Catalog<T>> catalog,
                      PersonalizationConfig cfg)
      : name_(std::move(name)), catalog_(std::move(catalog)), cfg_(cfg) {
    cfg_.validate();
  }

  std::string name() const override { return name_; }

  std::unique_ptr<UserSession> start(const UserStream& stream) const override {
    return std::make_unique<Session>(*this, stream.user_id);
  }

 private:
  class Session final : public UserSession {
   public:
    Session(const PersonalizedRuntime& rt, const std::string& user)
        : rt_(rt), state_(init_user(user, *rt.catalog_)) {}
    void observe(const ReplayEvent& e) override {
      grec::observe(state_, *rt_.catalog_, e.item, e.kind, shown_, rt_.cfg_);
    }
    std::vector<std::uint32_t> recommend(std::size_t k) override {
      shown_ = grec::recommend(state_, k, rt_.cfg_.exclude).items;
      return shown_;
    }
    void end_of_day() override { reset_personalization(state_, *rt_.catalog_, rt_.cfg_); }

   private:
    const PersonalizedRuntime& rt_;
    UserState<T> state_;
    std::vector<std::uint32_t> shown_;
  };

  std::string name_;
  std::shared_ptr<const Catalog<T>> catalog_;
  PersonalizationConfig cfg_;
};

// K distinct items drawn uniformly from the eligible catalog.
class RandomRuntime final : public Runtime {
 public:
  RandomRuntime(std::size_t catalog_size, ExcludePolicy exclude, std::uint64_t seed)
      : n_(catalog_size), exclude_(exclude), seed_(seed) {}
  std::string name() const override { return "random"; }

  std::unique_ptr<UserSession> start(const UserStream& stream) const override {
    return std::make_unique<Session>(*this, stream.user_id);
  }

 private:
  class Session final : public UserSession {
   public:
    Session(const RandomRuntime& rt, const std::string& user)
        : rt_(rt), rng_(derive_seed(rt.seed_, {stable_hash(user)})) {}
    void observe(const ReplayEvent& e) override {
      if (rt_.exclude_ == ExcludePolicy::Interacted ||
          (rt_.exclude_ == ExcludePolicy::Purchased && e.kind == InteractionType::Purchase)) {
        excluded_.insert(e.item);
      }
    }
    std::vector<std::uint32_t> recommend(std::size_t k) override {
      const std::size_t eligible = rt_.n_ - excluded_.size();
      std::vector<std::uint32_t> out;
      if (k >= eligible) {
        for (std::uint32_t i = 0; i < rt_.n_; ++i) {
          if (!excluded_.contains(i)) out.push_back(i);
        }
        return out;
      }
      std::unordered_set<std::uint32_t> taken;
      while (out.size() < k) {
        const auto i = static_cast<std::uint32_t>(rng_.below(rt_.n_));
        if (excluded_.contains(i) || !taken.insert(i).second) continue;
        out.push_back(i);
      }
      return out;
    }

   private:
    const RandomRuntime& rt_;
    Rng rng_;
    std::unordered_set<std::uint32_t> excluded_;
  };

  std::size_t n_;
  ExcludePolicy exclude_;
  std::uint64_t seed_;
};

// The K most recent distinct interacted items, most recent first.
inline std::vector<std::uint32_t> baseline_last_k(std::span<const std::uint32_t> history,
                                                  std::size_t k) {
  std::vector<std::uint32_t> out;
  for (auto it = history.rbegin(); it != history.rend() && out.size() < k; ++it) {
    if (std::find(out.begin(), out.end(), *it) == out.end()) out.push_back(*it);
  }
  return out;
}

class LastKRuntime final : public Runtime {
 public:
  std::string name() const override { return "last-k"; }
  std::unique_ptr<UserSession> start(const UserStream&) const override {
    return std::make_unique<Session>();
  }

 private:
  class Session final : public UserSession {
   public:
    void observe(const ReplayEvent& e) override { history_.push_back(e.item); }
    std::vector<std::uint32_t> recommend(std::size_t k) override {
      return baseline_last_k(history_, k);
    }

   private:
    std::vector<std::uint32_t> history_;
  };
};

// Looks ahead in the stream and recommends the actual next purchases.
class OracleRuntime final : public Runtime {
 public:
  explicit OracleRuntime(std::size_t t) : t_(t) {}
  std::string name() const override { return "oracle"; }
  std::unique_ptr<UserSession> start(const UserStream& stream) const override {
    return std::make_unique<Session>(stream, t_);
  }

 private:
  class Session final : public UserSession {
   public:
    Session(const UserStream& s, std::size_t t) : s_(s), t_(t) {}
    void observe(const ReplayEvent&) override { ++seen_; }
    std::vector<std::uint32_t> recommend(std::size_t k) override {
      auto truth = future_purchases(s_.events, seen_ - 1, std::max(k, t_));
      if (truth.size() > k) truth.resize(k);
      return truth;
    }

   private:
    const UserStream& s_;
    std::size_t t_;
    std::size_t seen_ = 0;
  };
  std::size_t t_;
};

}  // namespace grec
