#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace itsgw {

enum class errc {
  schema_mismatch,
  non_finite_value,
  label_out_of_range,
  illegal_transition,
  shape_mismatch,
  invalid_argument,
  empty_schema,
  empty_corpus,
  unknown_id,
  malformed_header,
  unsupported_channels,
  unsupported_rate,
  unsupported_bit_depth,
  not_power_of_two,
  clip_too_short,
  empty_sequence,
  image_too_small,
  empty_caption_list,
  backend_timeout,
  backend_protocol_error,
  invalid_config,
  empty_dataset,
  all_zero_weights,
  queue_full,
  validation_failed,
  not_found,
  corrupt_log,
  io_error,
  interrupted,
};

constexpr std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::schema_mismatch: return "SchemaMismatch";
    case errc::non_finite_value: return "NonFiniteValue";
    case errc::label_out_of_range: return "LabelOutOfRange";
    case errc::illegal_transition: return "IllegalTransition";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::empty_schema: return "EmptySchema";
    case errc::empty_corpus: return "EmptyCorpus";
    case errc::unknown_id: return "UnknownId";
    case errc::malformed_header: return "MalformedHeader";
    case errc::unsupported_channels: return "UnsupportedChannels";
    case errc::unsupported_rate: return "UnsupportedRate";
    case errc::unsupported_bit_depth: return "UnsupportedBitDepth";
    case errc::not_power_of_two: return "NotPowerOfTwo";
    case errc::clip_too_short: return "ClipTooShort";
    case errc::empty_sequence: return "EmptySequence";
    case errc::image_too_small: return "ImageTooSmall";
    case errc::empty_caption_list: return "EmptyCaptionList";
    case errc::backend_timeout: return "BackendTimeout";
    case errc::backend_protocol_error: return "BackendProtocolError";
    case errc::invalid_config: return "InvalidConfig";
    case errc::empty_dataset: return "EmptyDataset";
    case errc::all_zero_weights: return "AllZeroWeights";
    case errc::queue_full: return "QueueFull";
    case errc::validation_failed: return "ValidationFailed";
    case errc::not_found: return "NotFound";
    case errc::corrupt_log: return "CorruptLog";
    case errc::io_error: return "IoError";
    case errc::interrupted: return "interrupted";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an `error` carrying a
/// machine-readable code; the message is for humans.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  errc code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  errc code_;
  std::string message_;
};

[[noreturn]] inline void fail(errc code, const std::string& message) { throw error(code, message); }

}  // namespace itsgw
