#pragma once

#include "edct/audit_store.hpp"
#include "edct/dataset.hpp"
#include "edct/gateway.hpp"
#include "edct/judge.hpp"
#include "edct/prompts.hpp"
#include "edct/stats.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace edct {

struct PipelineConfig {
  ProviderConfig vlm;
  ProviderConfig extractor;
  std::vector<ProviderConfig> judges;
  ProviderConfig editor;
  std::size_t k_max = 1;
  std::uint64_t run_seed = 0;
};

struct PipelineDeps {
  Gateway& gateway;
  const PipelineConfig& config;
  const PromptSet& prompts;
  /// Optional; without it nothing is persisted.
  AuditStore* store = nullptr;
};

/// A stage failed in a way that excludes the example. `reason` is one of
/// vlm-failure, extractor-failure, extractor-parse-failure, editor-failure,
/// judge-failure, judge-parse-failure, input-image-changed. code() is the
/// underlying error.
class StageFailure : public Error {
public:
  StageFailure(Errc code, std::string reason, const std::string& message)
      : Error(code, message), reason_(std::move(reason)) {}
  [[nodiscard]] const std::string& reason() const noexcept { return reason_; }

private:
  std::string reason_;
};

/// Errors that abort a whole run instead of excluding one example.
bool is_infrastructure_error(Errc code) noexcept;

/// Collects one example's artifact digests between events.
class ExampleAudit {
public:
  ExampleAudit(AuditStore* store, std::string example_id)
      : store_(store), example_id_(std::move(example_id)) {}

  Digest put(const std::string& label, ArtifactKind kind, std::string_view bytes,
             std::string_view media_type = "text/plain; charset=utf-8");
  /// Appends an event carrying every digest put since the last emit.
  void emit(Stage stage, nlohmann::json detail = nlohmann::json::object());

  [[nodiscard]] const std::vector<Stage>& emitted() const noexcept { return emitted_; }

private:
  AuditStore* store_;
  std::string example_id_;
  std::map<std::string, Digest> pending_;
  std::vector<Stage> emitted_;
};

struct BaselineResponse {
  std::string answer;
  std::string explanation;
  ChatSession session;
};

struct GeneratedCounterfactual {
  int concept_index = 1;
  std::uint64_t seed = 0;
  ImageAttachment image;
  Digest image_digest;
  double changed_fraction = 0.0;
  std::vector<std::string> warnings;
};

struct CounterfactualTrial {
  int concept_index = 1;
  ConceptEdit edit;
  Digest edited_image;
  std::uint64_t seed = 0;
  std::string edited_answer;
  std::string edited_explanation;
  std::vector<Verdict> verdicts;
  AggregatedScore score;
  std::vector<std::string> warnings;
};

enum class ExampleStatus { completed, excluded };

struct ExampleResult {
  std::string example_id;
  ExampleStatus status = ExampleStatus::completed;
  std::string exclusion_reason;
  std::string exclusion_message;
  std::optional<BaselineResponse> baseline;
  std::vector<CounterfactualTrial> trials;
  Rational example_pcs;
  Rational example_ncc;
  Rational example_ccs;
};

/// Stable per-trial seed from (run seed, example id, concept index).
std::uint64_t trial_seed(std::uint64_t run_seed, std::string_view example_id, int concept_index);

/// Two turns in one session: (image, question) -> answer, then the
/// vqa-explanation prompt -> explanation. Errors: gateway errors,
/// Error(empty_answer) when the answer is blank.
BaselineResponse acquire_baseline(Gateway& gateway, const ProviderConfig& vlm, const PromptSet& prompts,
                                  const ExampleRecord& record, const ImageAttachment& image,
                                  ExampleAudit* audit = nullptr);

/// Renders the extraction template, asks the extractor and parses at most
/// `k_max` concepts. Error(malformed_instruction) when none parse.
std::vector<ConceptEdit> extract_concepts(Gateway& gateway, const ProviderConfig& extractor,
                                          const PromptSet& prompts, const ExampleRecord& record,
                                          const BaselineResponse& baseline, std::size_t k_max,
                                          ExampleAudit* audit = nullptr);

/// Edits the source image with the concept's prompts and records a pixel
/// diff. An output identical to the source adds a `no-visible-edit` warning.
GeneratedCounterfactual generate_counterfactual(Gateway& gateway, const ProviderConfig& editor,
                                                const ImageAttachment& source, const ConceptEdit& edit,
                                                std::uint64_t seed, ExampleAudit* audit = nullptr);

/// Re-asks the VLM in a fresh session with the edited image and the original
/// question, then collects one verdict per judge. Throws StageFailure with
/// vlm-failure, judge-parse-failure or judge-failure.
CounterfactualTrial test_consistency(Gateway& gateway, const ProviderConfig& vlm,
                                     const std::vector<ProviderConfig>& judges, const PromptSet& prompts,
                                     const ExampleRecord& record, const BaselineResponse& baseline,
                                     const ConceptEdit& edit, const GeneratedCounterfactual& counterfactual,
                                     ExampleAudit* audit = nullptr);

/// All four stages. Stage failures exclude the example; infrastructure
/// errors (replay miss, I/O) propagate.
ExampleResult run_example(const PipelineDeps& deps, const ExampleRecord& record);

/// Runs every record on up to `workers` threads. Results are sorted by id.
/// The first infrastructure error stops the remaining work and is rethrown.
std::vector<ExampleResult> run_examples(const PipelineDeps& deps, const std::vector<ExampleRecord>& records,
                                        std::size_t workers);

/// One JSON object per example, sorted by id: status, exclusion reason,
/// per-concept bits and exact example-level pcs/ncc/ccs.
std::string results_jsonl(const std::vector<ExampleResult>& results);

struct ScoreFile {
  std::vector<ExampleScores> completed;
  std::size_t excluded = 0;
};

/// Reads results_jsonl output (or a synthetic file of the same shape:
/// `example_id`, `status`, `pcs`, `ncc`, `ccs`). Throws Error(parse_error).
ScoreFile parse_results_jsonl(std::string_view text);

}  // namespace edct
