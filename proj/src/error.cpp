#include "edct/error.hpp"

namespace edct {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::precondition: return "precondition";
    case Errc::retryable_exhausted: return "retryable-exhausted";
    case Errc::provider_refusal: return "provider-refusal";
    case Errc::replay_miss: return "replay-miss";
    case Errc::undecodable_image: return "undecodable-image";
    case Errc::missing_binding: return "missing-binding";
    case Errc::unknown_binding: return "unknown-binding";
    case Errc::malformed_instruction: return "malformed-instruction";
    case Errc::empty_answer: return "empty-answer";
    case Errc::unparseable_verdict: return "unparseable-verdict";
    case Errc::empty_verdict_set: return "empty-verdict-set";
    case Errc::empty_concept_list: return "empty-concept-list";
    case Errc::empty_dataset: return "empty-dataset";
    case Errc::directory_not_empty: return "directory-not-empty";
    case Errc::io_failure: return "io-failure";
    case Errc::dangling_digest: return "dangling-digest";
    case Errc::parse_error: return "parse-error";
    case Errc::duplicate_id: return "duplicate-id";
    case Errc::missing_image: return "missing-image";
    case Errc::out_of_range: return "out-of-range";
    case Errc::config_error: return "config-error";
    case Errc::verification_failed: return "verification-failed";
  }
  return "unknown";
}

}  // namespace edct
