#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "itsgw/model/encoder.hpp"

namespace itsgw::model {

// Checkpoint layout:
//   "ITSM1\n"
//   key=value lines: the encoder config, then "meta.<key>=<value>" entries
//   "params=<count>\n"
//   <count> little-endian f64 values in EncoderModel::parameters() order
inline constexpr std::string_view kCheckpointMagic = "ITSM1";

struct Checkpoint {
  EncoderModel model;
  std::map<std::string, std::string> meta;
};

namespace detail {

inline std::map<std::string, std::string> config_to_kv(const EncoderConfig& c) {
  return {{"layers", std::to_string(c.layers)},         {"heads", std::to_string(c.heads)},
          {"d_model", std::to_string(c.d_model)},       {"d_ff", std::to_string(c.d_ff)},
          {"max_len", std::to_string(c.max_len)},       {"mode", std::string(to_string(c.mode))},
          {"vocab_size", std::to_string(c.vocab_size)}, {"feature_dim", std::to_string(c.feature_dim)},
          {"n_classes", std::to_string(c.n_classes)},   {"seed", std::to_string(c.seed)}};
}

inline std::uint64_t parse_u64(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) fail(errc::invalid_config, "checkpoint lacks '" + key + "'");
  try {
    std::size_t used = 0;
    const auto v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    fail(errc::invalid_config, "checkpoint key '" + key + "' is not an unsigned integer");
  }
}

inline EncoderConfig config_from_kv(const std::map<std::string, std::string>& kv) {
  EncoderConfig c;
  c.layers = parse_u64(kv, "layers");
  c.heads = parse_u64(kv, "heads");
  c.d_model = parse_u64(kv, "d_model");
  c.d_ff = parse_u64(kv, "d_ff");
  c.max_len = parse_u64(kv, "max_len");
  auto mode = kv.find("mode");
  if (mode == kv.end() || (mode->second != "token" && mode->second != "feature")) fail(errc::invalid_config, "checkpoint mode must be token or feature");
  c.mode = mode->second == "token" ? InputMode::token_input : InputMode::feature_input;
  c.vocab_size = parse_u64(kv, "vocab_size");
  c.feature_dim = parse_u64(kv, "feature_dim");
  c.n_classes = parse_u64(kv, "n_classes");
  c.seed = parse_u64(kv, "seed");
  return c;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const EncoderModel& model, const std::map<std::string, std::string>& meta = {}) {
  static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");
  std::string header(kCheckpointMagic);
  header += '\n';
  for (const auto& [k, v] : detail::config_to_kv(model.config())) header += k + "=" + v + "\n";
  for (const auto& [k, v] : meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      fail(errc::invalid_argument, "metadata key/value must be single-line and keys must not contain '='");
    header += "meta." + k + "=" + v + "\n";
  }
  // parameters() hands out mutable refs; only reads happen here
  const auto params = const_cast<EncoderModel&>(model).parameters();
  const std::size_t count = nn::count_parameters(params);
  header += "params=" + std::to_string(count) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (const auto& p : params) {
    const auto& data = p.value->data();
    const std::size_t at = out.size();
    out.resize(at + data.size() * sizeof(double));
    std::memcpy(out.data() + at, data.data(), data.size() * sizeof(double));
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto* begin = bytes.data() + pos;
    const auto* nl = static_cast<const std::uint8_t*>(std::memchr(begin, '\n', bytes.size() - pos));
    if (nl == nullptr) fail(errc::malformed_header, "checkpoint header is truncated");
    std::string line(reinterpret_cast<const char*>(begin), static_cast<std::size_t>(nl - begin));
    pos += line.size() + 1;
    return line;
  };
  if (next_line() != kCheckpointMagic) fail(errc::malformed_header, "not an ITSM1 checkpoint");
  std::map<std::string, std::string> kv, meta;
  std::size_t count = 0;
  for (;;) {
    const std::string line = next_line();
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(errc::malformed_header, "checkpoint header line without '='");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "params") {
      count = static_cast<std::size_t>(detail::parse_u64({{key, value}}, key));
      break;
    }
    if (key.starts_with("meta."))
      meta[key.substr(5)] = value;
    else
      kv[key] = value;
  }
  Checkpoint ck{EncoderModel(detail::config_from_kv(kv)), std::move(meta)};
  const auto params = ck.model.parameters();
  if (count != nn::count_parameters(params)) fail(errc::malformed_header, "parameter count does not match the config");
  if (bytes.size() - pos != count * sizeof(double)) fail(errc::malformed_header, "parameter blob has the wrong size");
  for (const auto& p : params) {
    auto& data = p.value->data();
    std::memcpy(data.data(), bytes.data() + pos, data.size() * sizeof(double));
    pos += data.size() * sizeof(double);
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const EncoderModel& model, const std::map<std::string, std::string>& meta = {}) {
  const auto bytes = encode_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_error, "cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(errc::io_error, "write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot read checkpoint " + path);
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace itsgw::model
