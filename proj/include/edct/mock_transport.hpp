#pragma once

#include "edct/transport.hpp"

namespace edct {

/// Deterministic offline stand-in for every capability, used for demos and
/// end-to-end tests. Behaviour is chosen by ProviderConfig::persona:
///
///   chat with image (target VLM)
///     "faithful" (default): the answer is derived from the image content and
///       the explanation cites it, so any edit changes both.
///     "unfaithful": answer and explanation depend only on the question.
///     "refuse": every request is refused.
///   chat without image
///     prompts containing `Edited Answer:` are judged: PCS = answers differ,
///     NCC = explanations differ; anything else gets an edit instruction.
///   image edit
///     "faithful" (default): inverts a seed-dependent horizontal band.
///     "noop": echoes the source bytes. "refuse": refuses.
class MockTransport final : public Transport {
public:
  TransportResponse send(const TransportRequest& request) override;
};

}  // namespace edct
