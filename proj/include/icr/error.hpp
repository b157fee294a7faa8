#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace icr {

// Machine-readable failure categories. The CLI maps these onto exit codes.
enum class ErrorKind {
  invalid_argument = 2,
  sequence_too_long = 3,
  token_out_of_range = 4,
  shape_mismatch = 5,
  non_finite = 6,
  no_recorded_forward = 7,
  vocabulary_mismatch = 8,
  unknown_language = 9,
  undecodable_prompt = 10,
  empty_input = 11,
  malformed_record = 12,
  version_mismatch = 13,
  io = 14,
  stage_order = 15,
  config_mismatch = 16,
  missing_artifact = 17,
  prompt_overlap = 18,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::sequence_too_long: return "sequence-too-long";
    case ErrorKind::token_out_of_range: return "token-out-of-range";
    case ErrorKind::shape_mismatch: return "shape-mismatch";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::no_recorded_forward: return "no-recorded-forward";
    case ErrorKind::vocabulary_mismatch: return "vocabulary-mismatch";
    case ErrorKind::unknown_language: return "unknown-language";
    case ErrorKind::undecodable_prompt: return "undecodable-prompt";
    case ErrorKind::empty_input: return "empty-input";
    case ErrorKind::malformed_record: return "malformed-record";
    case ErrorKind::version_mismatch: return "version-mismatch";
    case ErrorKind::io: return "io";
    case ErrorKind::stage_order: return "stage-order";
    case ErrorKind::config_mismatch: return "config-mismatch";
    case ErrorKind::missing_artifact: return "missing-artifact";
    case ErrorKind::prompt_overlap: return "prompt-overlap";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace icr
