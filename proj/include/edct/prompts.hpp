#pragma once

#include "edct/digest.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace edct {

enum class TemplateKind { vqa_explanation, concept_extraction, llm_analysis };

/// "vqa-explanation", "concept-extraction-edit-instruction", "llm-analysis".
std::string_view template_name(TemplateKind kind) noexcept;

using Bindings = std::map<std::string, std::string, std::less<>>;

class PromptTemplate {
public:
  /// Throws Error(config_error) if `body` uses a `{placeholder}` that is not
  /// in `placeholders`, or declares one the body never uses.
  PromptTemplate(TemplateKind kind, std::string body, std::set<std::string> placeholders);

  [[nodiscard]] TemplateKind kind() const noexcept { return kind_; }
  [[nodiscard]] std::string_view name() const noexcept { return template_name(kind_); }
  [[nodiscard]] const std::string& body() const noexcept { return body_; }
  [[nodiscard]] const std::set<std::string>& placeholders() const noexcept { return placeholders_; }
  [[nodiscard]] Digest digest() const { return sha256(body_); }

private:
  TemplateKind kind_;
  std::string body_;
  std::set<std::string> placeholders_;
};

/// The shipped template for `kind`, verbatim.
const PromptTemplate& builtin_template(TemplateKind kind);

/// Substitutes every `{name}` once. Values are inserted as-is and never
/// rescanned. Throws Error(missing_binding) / Error(unknown_binding).
std::string render(const PromptTemplate& tmpl, const Bindings& bindings);

/// The three templates a run uses.
class PromptSet {
public:
  static PromptSet builtin();
  /// Builtins, replaced by `<dir>/<name>.txt` where such a file exists.
  /// One trailing newline in an override file is dropped.
  static PromptSet with_overrides(const std::filesystem::path& dir);

  [[nodiscard]] const PromptTemplate& get(TemplateKind kind) const;
  void set(PromptTemplate tmpl);

  /// name -> body digest, for the run manifest.
  [[nodiscard]] std::map<std::string, std::string> digests() const;

private:
  std::vector<PromptTemplate> templates_;
};

/// One extracted concept with its editor conditioning.
struct ConceptEdit {
  int index = 1;
  std::string positive;
  std::string negative;
  std::vector<std::string> warnings;
};

/// First Positive/Negative marker pair. Throws Error(malformed_instruction)
/// when there is no positive marker or its text is empty.
ConceptEdit parse_edit_instruction(std::string_view llm_output);

/// Every marker pair in order, indices 1..n. A negative marker binds to the
/// closest preceding positive marker.
std::vector<ConceptEdit> parse_edit_instructions(std::string_view llm_output);

/// `Positive Prompt: "<p>"\nNegative Prompt: "<n>"`, the form the judge sees
/// as the edit instruction.
std::string canonical_edit_instruction(const ConceptEdit& edit);

}  // namespace edct
