#pragma once

#include <boost/beast/core/detail/base64.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "itsgw/core/error.hpp"

namespace itsgw {

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  // decoded_size rounds down for ragged input, but decode still writes the partial quad
  std::vector<std::uint8_t> out(b64::decoded_size(text.size()) + 3);
  const auto [written, consumed] = b64::decode(out.data(), text.data(), text.size());
  // beast stops at the first '=', so padding is checked here
  const auto tail = text.substr(consumed);
  if (text.size() % 4 != 0 || tail.size() > 2 || tail.find_first_not_of('=') != std::string_view::npos)
    fail(errc::validation_failed, "invalid base64 payload");
  out.resize(written);
  return out;
}

}  // namespace itsgw
