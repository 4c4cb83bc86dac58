#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "grec/personal/user.hpp"

namespace grec {

inline constexpr double kRecommendTargetMs = 1.5;

inline nlohmann::json to_json(const AdaptationReport& r) {
  return {{"interactions", r.interactions},
          {"mean_weight", r.mean_weight},
          {"steps", r.steps},
          {"pre_loss", r.pre_loss},
          {"post_loss", r.post_loss},
          {"pre_positive_distance", r.pre_positive_distance},
          {"post_positive_distance", r.post_positive_distance},
          {"skipped_no_negatives", r.skipped_no_negatives},
          {"rolled_back", r.rolled_back},
          {"ema_approximate", r.ema_approximate},
          {"version", r.version},
          {"wallclock_ms", r.wallclock_ms}};
}

// Nearest-rank percentile of an unsorted sample.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

// Line-protocol request handler. Requests for one user are serialized by
// that user's mutex; different users proceed concurrently.
template <typename T>
class Server {
 public:
  Server(std::shared_ptr<const Catalog<T>> catalog, PersonalizationConfig cfg)
      : catalog_(std::move(catalog)), cfg_(cfg) {
    cfg_.validate();
  }

  std::string handle(std::string_view line) {
    const auto t0 = std::chrono::steady_clock::now();
    nlohmann::json resp;
    std::string op;
    try {
      auto req = nlohmann::json::parse(line);
      if (!req.is_object()) throw InputError("request must be a JSON object");
      if (!req.contains("op") || !req["op"].is_string()) throw InputError("missing string field 'op'");
      op = req["op"].get<std::string>();
      if (op == "observe") {
        resp = observe(req);
      } else if (op == "recommend") {
        resp = recommend(req);
      } else if (op == "reset_user") {
        resp = reset_user(req);
      } else if (op == "stats") {
        resp = stats();
      } else {
        throw InputError("unknown op '" + op + "'");
      }
      resp["ok"] = true;
      resp["op"] = op;
      if (req.contains("id")) resp["id"] = req["id"];
    } catch (const std::exception& e) {
      resp = {{"ok", false}, {"error", e.what()}};
      if (!op.empty()) resp["op"] = op;
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    resp["latency_ms"] = ms;
    {
      std::lock_guard lock(stats_mu_);
      ++requests_;
      if (!resp["ok"].get<bool>()) ++errors_;
      if (op == "recommend" && resp["ok"].get<bool>()) recommend_ms_.push_back(ms);
    }
    return resp.dump();
  }

  std::size_t user_count() const {
    std::lock_guard lock(users_mu_);
    return users_.size();
  }

 private:
  struct Slot {
    std::mutex mu;
    UserState<T> state;
  };

  static std::string field_string(const nlohmann::json& req, const char* key) {
    if (!req.contains(key) || !req[key].is_string()) {
      throw InputError(std::string("missing string field '") + key + "'");
    }
    auto s = req[key].get<std::string>();
    if (s.empty()) throw InputError(std::string("field '") + key + "' is empty");
    return s;
  }

  std::shared_ptr<Slot> slot(const std::string& user, bool create) {
    std::lock_guard lock(users_mu_);
    auto it = users_.find(user);
    if (it != users_.end()) return it->second;
    if (!create) return nullptr;
    auto s = std::make_shared<Slot>();
    s->state = init_user(user, *catalog_);
    users_.emplace(user, s);
    return s;
  }

  nlohmann::json observe(const nlohmann::json& req) {
    const auto user = field_string(req, "user");
    const auto row = catalog_row(*catalog_, field_string(req, "item"));
    const auto kind_name = field_string(req, "kind");
    const auto kind = parse_interaction(kind_name);
    if (!kind) throw InputError("unknown kind '" + kind_name + "'");
    std::vector<std::uint32_t> shown;
    std::size_t ignored = 0;
    if (req.contains("shown")) {
      if (!req["shown"].is_array()) throw InputError("'shown' must be an array of item ids");
      for (const auto& s : req["shown"]) {
        if (!s.is_string()) throw InputError("'shown' must be an array of item ids");
        if (auto r = catalog_->features.find(s.get<std::string>())) {
          shown.push_back(*r);
        } else {
          ++ignored;
        }
      }
    }
    auto s = slot(user, true);
    std::lock_guard lock(s->mu);
    const auto report = grec::observe(s->state, *catalog_, row, *kind, shown, cfg_);
    nlohmann::json resp{{"user", user},
                        {"interactions", s->state.interactions},
                        {"ignored_shown", ignored},
                        {"adaptation", report ? to_json(*report) : nlohmann::json(nullptr)}};
    if (report) adaptations_.fetch_add(1);
    return resp;
  }

  nlohmann::json recommend(const nlohmann::json& req) {
    const auto user = field_string(req, "user");
    std::size_t k = cfg_.k;
    if (req.contains("k")) {
      if (!req["k"].is_number_unsigned() || req["k"].get<std::size_t>() == 0) {
        throw InputError("'k' must be a positive integer");
      }
      k = req["k"].get<std::size_t>();
    }
    auto s = slot(user, false);
    if (!s) throw InputError("unknown user '" + user + "'");
    std::lock_guard lock(s->mu);
    const auto rec = grec::recommend(s->state, k, cfg_.exclude);
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = 0; i < rec.items.size(); ++i) {
      items.push_back({{"item", catalog_->features.id(rec.items[i])},
                       {"distance", static_cast<double>(rec.distances[i])}});
    }
    return {{"user", user}, {"items", items}, {"version", rec.version}, {"truncated", rec.truncated}};
  }

  nlohmann::json reset_user(const nlohmann::json& req) {
    const auto user = field_string(req, "user");
    std::shared_ptr<Slot> s;
    {
      std::lock_guard lock(users_mu_);
      auto it = users_.find(user);
      if (it != users_.end()) {
        s = it->second;
        users_.erase(it);
      }
    }
    if (s) std::lock_guard lock(s->mu);  // waits for any in-flight request
    return {{"user", user}, {"existed", s != nullptr}};
  }

  nlohmann::json stats() {
    std::lock_guard lock(stats_mu_);
    const double p99 = percentile(recommend_ms_, 0.99);
    return {{"users", user_count()},
            {"catalog_items", catalog_->size()},
            {"requests", requests_},
            {"errors", errors_},
            {"adaptations", adaptations_.load()},
            {"recommend",
             {{"count", recommend_ms_.size()},
              {"p50_ms", percentile(recommend_ms_, 0.5)},
              {"p99_ms", p99},
              {"target_ms", kRecommendTargetMs},
              {"within_target", p99 <= kRecommendTargetMs}}}};
  }

  std::shared_ptr<const Catalog<T>> catalog_;
  PersonalizationConfig cfg_;
  mutable std::mutex users_mu_;
  std::unordered_map<std::string, std::shared_ptr<Slot>> users_;
  std::mutex stats_mu_;
  std::size_t requests_ = 0;
  std::size_t errors_ = 0;
  std::atomic<std::size_t> adaptations_{0};
  std::vector<double> recommend_ms_;
};

// One response line per non-empty request line until end of input.
template <typename T>
void serve_stream(Server<T>& server, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out << server.handle(line) << '\n' << std::flush;
  }
}

namespace detail {

inline bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

template <typename T>
void serve_connection(Server<T>& server, int fd) {
  std::string buffer;
  char chunk[4096];
  for (;;) {
    const auto n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t pos;
    while ((pos = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      if (!send_all(fd, server.handle(line) + "\n")) {
        ::close(fd);
        return;
      }
    }
  }
  ::close(fd);
}

}  // namespace detail

// Accepts connections until `stop` is set, one thread per connection.
// `on_listening` receives the bound port (useful when port is 0).
template <typename T>
void serve_tcp(Server<T>& server, const std::string& host, int port, const std::atomic<bool>& stop,
               const std::function<void(int)>& on_listening = {}) {
  const int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (lfd < 0) throw std::runtime_error("serve: socket() failed");
  const int one = 1;
  ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(lfd);
    throw ConfigError("serve: bad IPv4 host '" + host + "'");
  }
  if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(lfd, 64) < 0) {
    ::close(lfd);
    throw std::runtime_error("serve: cannot listen on " + host + ":" + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(lfd, reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_listening) on_listening(ntohs(addr.sin_port));

  // A short receive timeout on the listening socket lets accept() poll `stop`.
  timeval tv{0, 200000};
  ::setsockopt(lfd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  std::vector<std::thread> workers;
  while (!stop.load()) {
    const int fd = ::accept(lfd, nullptr, nullptr);
    if (fd < 0) continue;
    workers.emplace_back([&server, fd] { detail::serve_connection(server, fd); });
  }
  ::close(lfd);
  for (auto& w : workers) w.join();
}

}  // namespace grec
