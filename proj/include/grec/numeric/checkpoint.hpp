#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "grec/numeric/binary_io.hpp"
#include "grec/numeric/mlp.hpp"

namespace grec {

// Checkpoint container:
//   "GREC" | u16 version | u8 precision (4|8) | u8 model kind |
//   kind-specific header | u32 n_dims | u32 dims[n_dims] |
//   raw little-endian parameter blocks in visit_blocks order.
inline constexpr std::string_view kCheckpointMagic = "GREC";
inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class ModelKind : std::uint8_t { Mlp = 0, Hgnn = 1 };

template <typename T>
constexpr std::uint8_t precision_flag() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return sizeof(T);
}

struct CheckpointHeader {
  std::uint16_t version = kCheckpointVersion;
  std::uint8_t precision = 4;
  ModelKind kind = ModelKind::Mlp;
  std::vector<std::uint8_t> extra;  // kind-specific bytes
  std::vector<std::size_t> layer_dims;
};

namespace detail {

inline std::size_t extra_header_size(ModelKind kind) { return kind == ModelKind::Hgnn ? 3 : 0; }

inline void write_header(io::Writer& w, const CheckpointHeader& h) {
  w.bytes(kCheckpointMagic);
  w.u16(h.version);
  w.u8(h.precision);
  w.u8(static_cast<std::uint8_t>(h.kind));
  for (auto b : h.extra) w.u8(b);
  w.u32(static_cast<std::uint32_t>(h.layer_dims.size()));
  for (auto d : h.layer_dims) w.u32(static_cast<std::uint32_t>(d));
}

inline CheckpointHeader read_header(io::Reader& r) {
  r.expect_magic(kCheckpointMagic);
  CheckpointHeader h;
  h.version = r.u16();
  if (h.version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(h.version));
  }
  h.precision = r.u8();
  if (h.precision != 4 && h.precision != 8) throw FormatError("checkpoint: bad precision flag");
  const auto kind = r.u8();
  if (kind > 1) throw FormatError("checkpoint: unknown model kind");
  h.kind = static_cast<ModelKind>(kind);
  for (std::size_t i = 0; i < extra_header_size(h.kind); ++i) h.extra.push_back(r.u8());
  const auto n = r.u32();
  if (n < 2 || n > 64) throw FormatError("checkpoint: layer count out of range");
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto d = r.u32();
    if (d == 0 || d > (1u << 20)) throw FormatError("checkpoint: layer dim out of range");
    h.layer_dims.push_back(d);
  }
  return h;
}

template <typename P>
void write_blocks(io::Writer& w, const P& params) {
  using T = typename P::value_type;
  params.visit_blocks([&](const std::string&, auto block) {
    w.array(std::span<const T>(block.data(), block.size()));
  });
}

template <typename P>
void read_blocks(io::Reader& r, P& params, std::uint8_t stored_precision) {
  using T = typename P::value_type;
  params.visit_blocks([&](const std::string&, auto block) {
    if (stored_precision == sizeof(T)) {
      r.array(block);
    } else if (stored_precision == 4) {
      std::vector<float> tmp(block.size());
      r.array(std::span<float>(tmp));
      for (std::size_t i = 0; i < tmp.size(); ++i) block[i] = static_cast<T>(tmp[i]);
    } else {
      std::vector<double> tmp(block.size());
      r.array(std::span<double>(tmp));
      for (std::size_t i = 0; i < tmp.size(); ++i) block[i] = static_cast<T>(tmp[i]);
    }
  });
}

}  // namespace detail

template <typename T>
void save_mlp(std::ostream& os, const MlpParams<T>& params) {
  io::Writer w(os);
  detail::write_header(w, {kCheckpointVersion, precision_flag<T>(), ModelKind::Mlp, {},
                           params.layer_dims});
  detail::write_blocks(w, params);
  w.check();
}

template <typename T>
MlpParams<T> load_mlp(std::istream& is) {
  io::Reader r(is);
  const auto h = detail::read_header(r);
  if (h.kind != ModelKind::Mlp) throw FormatError("checkpoint: not an MLP checkpoint");
  auto params = MlpParams<T>::zeros(h.layer_dims);
  detail::read_blocks(r, params, h.precision);
  return params;
}

template <typename T>
std::string mlp_to_bytes(const MlpParams<T>& params) {
  std::ostringstream os(std::ios::binary);
  save_mlp(os, params);
  return os.str();
}

template <typename T>
MlpParams<T> mlp_from_bytes(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return load_mlp<T>(is);
}

}  // namespace grec
