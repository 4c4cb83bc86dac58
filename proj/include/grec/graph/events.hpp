#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "grec/error.hpp"

namespace grec {

enum class InteractionType : std::uint8_t { Click = 0, Favorite = 1, Cart = 2, Purchase = 3 };

inline constexpr std::size_t kNumInteractionTypes = 4;
inline constexpr std::array<InteractionType, kNumInteractionTypes> kAllInteractionTypes{
    InteractionType::Click, InteractionType::Favorite, InteractionType::Cart,
    InteractionType::Purchase};

// purchase: 4, cart: 3, favorite: 2, click: 1
constexpr int interaction_weight(InteractionType t) noexcept {
  return static_cast<int>(t) + 1;
}

constexpr std::size_t relation_index(InteractionType t) noexcept {
  return static_cast<std::size_t>(t);
}

constexpr std::string_view to_string(InteractionType t) noexcept {
  switch (t) {
    case InteractionType::Click: return "click";
    case InteractionType::Favorite: return "favorite";
    case InteractionType::Cart: return "cart";
    case InteractionType::Purchase: return "purchase";
  }
  return "?";
}

constexpr std::string_view relation_name(InteractionType t) noexcept {
  switch (t) {
    case InteractionType::Click: return "co_click";
    case InteractionType::Favorite: return "co_favorite";
    case InteractionType::Cart: return "co_cart";
    case InteractionType::Purchase: return "co_purchase";
  }
  return "?";
}

inline std::optional<InteractionType> parse_interaction(std::string_view s) noexcept {
  for (auto t : kAllInteractionTypes) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

struct Event {
  std::string user_id;
  std::string item_id;
  InteractionType kind = InteractionType::Click;
  std::int64_t timestamp = 0;  // UTC seconds

  bool operator==(const Event&) const = default;
};

enum class EventFormat { Csv, Jsonl };

struct ParseIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct IngestResult {
  std::vector<Event> events;
  std::vector<ParseIssue> errors;
  std::size_t data_lines = 0;
};

struct IngestOptions {
  // Stream-level failure once strictly more than this fraction of data lines fail.
  double max_error_fraction = 0.10;
};

namespace detail {

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<std::int64_t> parse_int64(std::string_view s) noexcept {
  s = trim(s);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::string validate_fields(const std::string& user, const std::string& item,
                                   std::string_view type, std::optional<std::int64_t> ts,
                                   Event& out) {
  if (user.empty()) return "empty user_id";
  if (item.empty()) return "empty item_id";
  const auto kind = parse_interaction(type);
  if (!kind) return "unknown event type '" + std::string(type) + "'";
  if (!ts) return "non-integer timestamp";
  if (*ts < 0) return "negative timestamp";
  out = Event{user, item, *kind, *ts};
  return {};
}

inline std::string parse_csv_line(std::string_view line, Event& out) {
  std::array<std::string_view, 4> f;
  std::size_t n = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      if (n == 4) return "too many fields";
      f[n++] = trim(line.substr(start, i - start));
      start = i + 1;
    }
  }
  if (n != 4) return "expected 4 fields, got " + std::to_string(n);
  return validate_fields(std::string(f[0]), std::string(f[1]), f[2], parse_int64(f[3]), out);
}

inline std::string parse_json_line(std::string_view line, Event& out) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return "invalid JSON object";
  auto str = [&](const char* key) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
  };
  const auto user = str("user_id");
  const auto item = str("item_id");
  const auto type = str("event_type");
  if (!user || !item || !type) return "missing or non-string key";
  std::optional<std::int64_t> ts;
  if (auto it = j.find("timestamp"); it != j.end()) {
    if (it->is_number_integer()) ts = it->get<std::int64_t>();
    else if (it->is_string()) ts = parse_int64(it->get<std::string>());
  }
  return validate_fields(*user, *item, *type, ts, out);
}

}  // namespace detail

inline constexpr std::string_view kEventsCsvHeader = "user_id,item_id,event_type,timestamp";

// Reads events in file order. Per-line problems are collected; the call
// throws only when the failing fraction exceeds max_error_fraction. A CSV
// header line is optional and skipped when present.
inline IngestResult ingest_events(std::istream& in, EventFormat format,
                                  const IngestOptions& options = {}) {
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    if (format == EventFormat::Csv && result.data_lines == 0 && result.errors.empty() &&
        result.events.empty() && body == kEventsCsvHeader) {
      continue;
    }
    ++result.data_lines;
    Event ev;
    auto err = format == EventFormat::Csv ? detail::parse_csv_line(body, ev)
                                          : detail::parse_json_line(body, ev);
    if (err.empty()) {
      result.events.push_back(std::move(ev));
    } else {
      result.errors.push_back({line_no, std::move(err)});
    }
  }
  if (result.data_lines > 0) {
    const double frac =
        static_cast<double>(result.errors.size()) / static_cast<double>(result.data_lines);
    if (frac > options.max_error_fraction) {
      throw FormatError("ingest_events: " + std::to_string(result.errors.size()) + " of " +
                        std::to_string(result.data_lines) + " lines failed to parse (first: line " +
                        std::to_string(result.errors.front().line) + ": " +
                        result.errors.front().message + ")");
    }
  }
  return result;
}

inline void write_events_csv(std::ostream& out, const std::vector<Event>& events) {
  out << kEventsCsvHeader << '\n';
  for (const auto& e : events) {
    out << e.user_id << ',' << e.item_id << ',' << to_string(e.kind) << ',' << e.timestamp
        << '\n';
  }
}

inline void write_events_jsonl(std::ostream& out, const std::vector<Event>& events) {
  for (const auto& e : events) {
    nlohmann::json j{{"user_id", e.user_id},
                     {"item_id", e.item_id},
                     {"event_type", std::string(to_string(e.kind))},
                     {"timestamp", e.timestamp}};
    out << j.dump() << '\n';
  }
}

inline EventFormat event_format_for_path(std::string_view path) noexcept {
  return path.ends_with(".jsonl") || path.ends_with(".json") ? EventFormat::Jsonl
                                                             : EventFormat::Csv;
}

}  // namespace grec
