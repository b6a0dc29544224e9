#pragma once

// Turning request bodies into ModalityInput values, and digesting them.
//
//   time_series: {"record": [["speed_kph", 42], ["road", "wet"]]}
//                or {"b64"|"path": CSV text with a header and one data row}
//   audio:       {"b64"|"path": WAV bytes}
//   video:       {"path": directory of .pgm frames} or {"frames_b64": [PGM, ...]}

#include <openssl/evp.h>

#include "itsgw/core/base64.hpp"
#include "itsgw/core/json_io.hpp"
#include "itsgw/gateway/classifier.hpp"
#include "itsgw/visual/pgm.hpp"

namespace itsgw::gateway {

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) fail(errc::io_error, "SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

/// Canonical bytes of a payload, tagged by modality so equal bytes in
/// different modalities never collide.
inline std::vector<std::uint8_t> canonical_bytes(const ModalityInput& input) {
  std::vector<std::uint8_t> out;
  auto put = [&](std::string_view s) { out.insert(out.end(), s.begin(), s.end()); };
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, SensorRecord>) {
          json fields = json::array();
          for (std::size_t i = 0; i < v.fields.size(); ++i)
            fields.push_back({v.fields[i].name, std::visit([](const auto& x) { return json(x); }, v.values.at(i))});
          put("time_series\n");
          put(fields.dump());
        } else if constexpr (std::is_same_v<T, AudioClip>) {
          put("audio\n");
          const auto wav = audio::encode_wav(v.samples, v.sample_rate_hz);
          out.insert(out.end(), wav.begin(), wav.end());
        } else {
          put("video\n");
          for (const auto& f : v.frames) {
            const auto pgm = visual::encode_pgm(f);
            out.insert(out.end(), pgm.begin(), pgm.end());
          }
        }
      },
      input);
  return out;
}

inline std::string payload_digest(const ModalityInput& input) { return "sha256:" + sha256_hex(canonical_bytes(input)); }

namespace detail {

inline std::vector<std::uint8_t> payload_bytes(const json& p) {
  if (p.contains("b64")) return base64_decode(p.at("b64").get<std::string>());
  if (p.contains("path")) return audio::read_file_bytes(p.at("path").get<std::string>());
  fail(errc::validation_failed, "payload needs \"b64\" or \"path\"");
}

inline SensorRecord record_from_pairs(const json& pairs) {
  SensorRecord rec;
  for (const auto& kv : pairs) {
    if (!kv.is_array() || kv.size() != 2 || !kv[0].is_string())
      fail(errc::validation_failed, "record entries must be [name, value] pairs");
    const auto name = kv[0].get<std::string>();
    if (kv[1].is_number()) {
      rec.fields.push_back({name, FieldKind::numeric});
      rec.values.emplace_back(kv[1].get<double>());
    } else if (kv[1].is_string()) {
      rec.fields.push_back({name, FieldKind::categorical});
      rec.values.emplace_back(kv[1].get<std::string>());
    } else {
      fail(errc::validation_failed, "field '" + name + "' must be a number or a string");
    }
  }
  return rec;
}

}  // namespace detail

/// Decodes the "payload" object of a job request. Decoding failures surface
/// as ValidationFailed.
inline ModalityInput parse_payload(Modality m, const json& p, const LabelSchema& labels = LabelSchema::demo()) {
  try {
    if (!p.is_object()) fail(errc::validation_failed, "payload must be an object");
    switch (m) {
      case Modality::time_series: {
        if (p.contains("record")) return detail::record_from_pairs(p.at("record"));
        const auto bytes = detail::payload_bytes(p);
        auto ds = text::parse_tabular_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), labels);
        if (ds.records.size() != 1) fail(errc::validation_failed, "CSV payload must hold exactly one data row");
        return std::move(ds.records.front());
      }
      case Modality::audio:
        return audio::load_wav(detail::payload_bytes(p));
      case Modality::video: {
        if (p.contains("path")) return visual::load_frame_dir(p.at("path").get<std::string>());
        if (!p.contains("frames_b64")) fail(errc::validation_failed, "video payload needs \"path\" or \"frames_b64\"");
        FrameSequence seq;
        seq.source_id = "inline";
        for (const auto& f : p.at("frames_b64")) seq.frames.push_back(visual::decode_pgm(base64_decode(f.get<std::string>())));
        visual::check_frames(seq);
        return seq;
      }
    }
  } catch (const json::exception& e) {
    fail(errc::validation_failed, std::string("bad payload: ") + e.what());
  } catch (const error& e) {
    if (e.code() == errc::validation_failed) throw;
    fail(errc::validation_failed, std::string(to_string(e.code())) + ": " + e.message());
  }
  fail(errc::validation_failed, "unknown modality");
}

}  // namespace itsgw::gateway
