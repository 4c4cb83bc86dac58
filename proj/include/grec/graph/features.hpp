#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "grec/error.hpp"
#include "grec/numeric/binary_io.hpp"
#include "grec/numeric/matrix.hpp"

namespace grec {

// Item feature vectors (the precomputed image embeddings), one row per item.
template <typename T>
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(std::size_t dim) : matrix_(0, dim) {}

  std::size_t dim() const noexcept { return matrix_.cols(); }
  std::size_t size() const noexcept { return ids_.size(); }

  std::uint32_t add(std::string id, std::span<const T> values) {
    if (id.empty()) throw InputError("FeatureStore: empty item id");
    if (values.size() != dim()) {
      throw InputError("FeatureStore: item '" + id + "' has " + std::to_string(values.size()) +
                       " values, expected " + std::to_string(dim()));
    }
    if (index_.contains(id)) throw InputError("FeatureStore: duplicate item id '" + id + "'");
    const auto row = static_cast<std::uint32_t>(ids_.size());
    index_.emplace(id, row);
    ids_.push_back(std::move(id));
    matrix_.append_row(values);
    return row;
  }

  std::optional<std::uint32_t> find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const T> row(std::uint32_t r) const noexcept { return matrix_.row(r); }
  const std::string& id(std::uint32_t r) const noexcept { return ids_[r]; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const DenseMatrix<T>& matrix() const noexcept { return matrix_; }

  bool operator==(const FeatureStore& o) const { return ids_ == o.ids_ && matrix_ == o.matrix_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> index_;
  DenseMatrix<T> matrix_;
};

template <typename T>
FeatureStore<T> feature_store_from_rows(const std::vector<std::string>& ids,
                                        const DenseMatrix<T>& rows) {
  if (ids.size() != rows.rows()) throw InputError("feature_store_from_rows: id count mismatch");
  FeatureStore<T> store(rows.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) store.add(ids[i], rows.row(i));
  return store;
}

inline constexpr std::string_view kFeatureMagic = "GFEA";
inline constexpr std::string_view kEmbeddingMagic = "GEMB";

// Binary: magic | u32 count | u32 dim | per item: u32-length-prefixed UTF-8
// id followed by dim little-endian float32 values.
template <typename T>
void save_features_binary(std::ostream& os, const FeatureStore<T>& store,
                          std::string_view magic = kFeatureMagic) {
  io::Writer w(os);
  w.bytes(magic);
  w.u32(static_cast<std::uint32_t>(store.size()));
  w.u32(static_cast<std::uint32_t>(store.dim()));
  for (std::uint32_t r = 0; r < store.size(); ++r) {
    w.string(store.id(r));
    const auto values = convert_values<float>(store.row(r));
    w.array(std::span<const float>(values));
  }
  w.check();
}

template <typename T>
void save_features_text(std::ostream& os, const FeatureStore<T>& store) {
  const auto old_precision = os.precision(9);
  for (std::uint32_t r = 0; r < store.size(); ++r) {
    os << store.id(r);
    for (T v : store.row(r)) os << ' ' << static_cast<float>(v);
    os << '\n';
  }
  os.precision(old_precision);
}

namespace detail {

template <typename T>
FeatureStore<T> load_features_binary(std::istream& is) {
  io::Reader r(is);
  const auto count = r.u32();
  const auto dim = r.u32();
  if (dim == 0) throw FormatError("features: zero dimension");
  FeatureStore<T> store(dim);
  std::vector<float> buf(dim);
  std::vector<T> row(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto id = r.string();
    r.array(std::span<float>(buf));
    for (std::size_t k = 0; k < dim; ++k) row[k] = static_cast<T>(buf[k]);
    store.add(std::move(id), row);
  }
  return store;
}

template <typename T>
FeatureStore<T> load_features_text(std::istream& is) {
  FeatureStore<T> store;
  bool initialized = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string id;
    if (!(ls >> id) || id.starts_with('#')) continue;
    std::vector<T> values;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        values.push_back(static_cast<T>(v));
      } catch (const std::exception&) {
        throw FormatError("features: line " + std::to_string(line_no) + ": bad number '" + tok +
                          "'");
      }
    }
    if (!initialized) {
      if (values.empty()) throw FormatError("features: first row has no values");
      store = FeatureStore<T>(values.size());
      initialized = true;
    }
    if (values.size() != store.dim()) {
      throw InputError("features: line " + std::to_string(line_no) + " has dimension " +
                       std::to_string(values.size()) + ", expected " +
                       std::to_string(store.dim()));
    }
    store.add(std::move(id), values);
  }
  return store;
}

}  // namespace detail

// Accepts the binary "GFEA"/"GEMB" containers or the whitespace text format.
template <typename T>
FeatureStore<T> load_features(std::istream& is) {
  const auto start = is.tellg();
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  const std::string_view m(magic, static_cast<std::size_t>(is.gcount()));
  if (m == kFeatureMagic || m == kEmbeddingMagic) return detail::load_features_binary<T>(is);
  is.clear();
  is.seekg(start);
  if (!is) throw FormatError("features: stream is not seekable for text parsing");
  return detail::load_features_text<T>(is);
}

enum class MissingFeaturePolicy { Error, ZeroWithWarning };

}  // namespace grec
