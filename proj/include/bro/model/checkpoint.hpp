#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bro/core/errors.hpp"
#include "bro/core/tensor.hpp"
#include "bro/model/model.hpp"

namespace bro {

// Layout: 8-byte magic, u32 version, u32 header length, JSON header
// (layer specs, parameter shapes, seed, metadata), then the parameters as
// little-endian float64 in declaration order.

inline constexpr char kCheckpointMagic[8] = {'B', 'R', 'O', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint: truncated header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("checkpoint: truncated parameter blob");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const Model& m, const nlohmann::json& metadata = nlohmann::json::object()) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : m.specs)
    layers.push_back({{"kind", layer_kind_name(s.kind)},
                      {"in", s.in},
                      {"out", s.out},
                      {"rank", s.rank},
                      {"kernel", s.kernel},
                      {"patch", s.patch}});
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& p : m.params) shapes.push_back(p.shape());
  const nlohmann::json header = {{"input_shape", m.input_shape}, {"layers", layers}, {"shapes", shapes},
                                 {"seed", m.seed},               {"metadata", metadata}};
  const std::string text = header.dump();
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : m.params)
    for (double v : p.data()) detail::put_f64(os, v);
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

struct LoadedCheckpoint {
  Model model;
  nlohmann::json metadata;
};

inline LoadedCheckpoint load_checkpoint_with_metadata(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = detail::get_u32(is);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: version " + std::to_string(version) + " not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t len = detail::get_u32(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw FormatError("checkpoint: truncated header");

  LoadedCheckpoint out;
  Model& m = out.model;
  try {
    const auto h = nlohmann::json::parse(text);
    m.input_shape = h.at("input_shape").get<Shape>();
    m.seed = h.at("seed").get<std::uint64_t>();
    for (const auto& l : h.at("layers"))
      m.specs.push_back({parse_layer_kind(l.at("kind").get<std::string>()), l.at("in"), l.at("out"), l.at("rank"),
                         l.at("kernel"), l.at("patch")});
    for (const auto& s : h.at("shapes")) m.params.emplace_back(s.get<Shape>());
    out.metadata = h.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  for (auto& p : m.params)
    for (auto& v : p.data()) v = detail::get_f64(is);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes after blob");

  // Parameter shapes must match what the specs imply.
  const std::vector<Tensor> loaded = m.params;
  Model fresh = build_model(m.input_shape, m.specs, 0);
  if (fresh.params.size() != loaded.size()) throw FormatError("checkpoint: parameter count does not match layers");
  for (std::size_t i = 0; i < loaded.size(); ++i)
    if (fresh.params[i].shape() != loaded[i].shape())
      throw FormatError("checkpoint: parameter " + std::to_string(i) + " has shape " +
                        shape_string(loaded[i].shape()) + ", layers imply " + shape_string(fresh.params[i].shape()));
  relayout_model(m);
  return out;
}

inline Model load_checkpoint(std::istream& is) { return load_checkpoint_with_metadata(is).model; }

inline void save_checkpoint(const std::string& path, const Model& m,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  save_checkpoint(os, m, metadata);
}

inline LoadedCheckpoint load_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  return load_checkpoint_with_metadata(is);
}

}  // namespace bro
