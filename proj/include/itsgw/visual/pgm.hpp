#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "itsgw/audio/wav.hpp"
#include "itsgw/core/types.hpp"

namespace itsgw::visual {

inline constexpr std::size_t kMinImageSide = 8;

/// Binary P5 greymap with maxval 255.
inline GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space_and_comments();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && digits < 9) {
      v = v * 10 + (bytes[pos++] - '0');
      ++digits;
    }
    if (digits == 0) fail(errc::malformed_header, std::string("PGM: bad ") + what);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail(errc::malformed_header, "PGM: expected P5 magic");
  pos = 2;
  GrayImage img;
  img.width = read_uint("width");
  img.height = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (maxval != 255) fail(errc::malformed_header, "PGM: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail(errc::malformed_header, "PGM: missing separator before raster");
  ++pos;
  const std::size_t n = img.width * img.height;
  if (img.width == 0 || img.height == 0 || bytes.size() - pos < n) fail(errc::malformed_header, "PGM: raster shorter than width x height");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

inline std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
  const auto bytes = encode_pgm(img);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(errc::io_error, "cannot write " + path);
}

/// Checks that a sequence's frames share dimensions.
inline void check_frames(const FrameSequence& seq) {
  for (const auto& f : seq.frames) {
    if (f.pixels.size() != f.width * f.height) fail(errc::shape_mismatch, "frame raster does not match its dimensions");
    if (f.width != seq.frames.front().width || f.height != seq.frames.front().height)
      fail(errc::shape_mismatch, "frames in one sequence must share dimensions");
  }
}

/// Loads every *.pgm in a directory; lexicographic file order is temporal order.
inline FrameSequence load_frame_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(errc::io_error, "not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  FrameSequence seq;
  seq.source_id = fs::path(dir).filename().string();
  for (const auto& f : files) seq.frames.push_back(decode_pgm(audio::read_file_bytes(f.string())));
  check_frames(seq);
  return seq;
}

inline void save_frame_dir(const std::string& dir, const FrameSequence& seq) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    std::snprintf(name, sizeof name, "%06zu.pgm", i);
    write_pgm((std::filesystem::path(dir) / name).string(), seq.frames[i]);
  }
}

}  // namespace itsgw::visual
