#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edct {

enum class Errc {
  precondition,
  // model_gateway
  retryable_exhausted,
  provider_refusal,
  replay_miss,
  undecodable_image,
  // prompt_templates
  missing_binding,
  unknown_binding,
  malformed_instruction,
  // pipeline
  empty_answer,
  // judge
  unparseable_verdict,
  empty_verdict_set,
  // scoring_stats
  empty_concept_list,
  empty_dataset,
  // audit_store
  directory_not_empty,
  io_failure,
  dangling_digest,
  // dataset
  parse_error,
  duplicate_id,
  missing_image,
  out_of_range,
  // cli / config
  config_error,
  verification_failed,
};

/// Stable kebab-case name, used in machine-readable error records.
std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

inline void require(bool condition, std::string_view what) {
  if (!condition) throw Error(Errc::precondition, std::string(what));
}

}  // namespace edct
