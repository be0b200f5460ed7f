#include "edct/prompts.hpp"

#include "builtin_prompts.inc"
#include "edct/error.hpp"
#include "edct/file_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>

namespace edct {

namespace {

constexpr std::array kAllKinds{TemplateKind::vqa_explanation, TemplateKind::concept_extraction,
                               TemplateKind::llm_analysis};

bool is_name_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; }

struct Slot {
  std::size_t begin;  // position of '{'
  std::size_t end;    // one past '}'
  std::string name;
};

std::vector<Slot> find_slots(std::string_view body) {
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < body.size() && is_name_char(body[j])) ++j;
    if (j > i + 1 && j < body.size() && body[j] == '}') {
      slots.push_back({i, j + 1, std::string(body.substr(i + 1, j - i - 1))});
      i = j;
    }
  }
  return slots;
}

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

bool iequals_prefix(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  }
  return true;
}

enum class Marker { positive, negative };

struct MarkerLine {
  Marker marker;
  std::string_view rest;
};

// Recognizes `Positive Prompt:` / `Negative Prompt:` at the start of a line,
// tolerating markdown decoration such as `**Positive Prompt:**` or `- `.
std::optional<MarkerLine> match_marker(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (std::isspace(static_cast<unsigned char>(line[i])) ||
                             std::string_view("*#->_`").find(line[i]) != std::string_view::npos)) {
    ++i;
  }
  line.remove_prefix(i);
  Marker m;
  if (iequals_prefix(line, "positive prompt")) m = Marker::positive;
  else if (iequals_prefix(line, "negative prompt")) m = Marker::negative;
  else return std::nullopt;
  line.remove_prefix(std::string_view("positive prompt").size());
  i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '*' || line[i] == '_' || line[i] == '`')) ++i;
  if (i >= line.size() || line[i] != ':') return std::nullopt;
  line.remove_prefix(i + 1);
  i = 0;
  while (i < line.size() && (line[i] == '*' || line[i] == '_')) ++i;
  return MarkerLine{m, line.substr(i)};
}

std::string clean_value(std::string_view raw) {
  std::string_view v = trim(raw);
  while (!v.empty() && (v.front() == '*' || v.front() == '_')) v.remove_prefix(1);
  while (!v.empty() && (v.back() == '*' || v.back() == '_')) v.remove_suffix(1);
  v = trim(v);
  static constexpr std::array<std::pair<std::string_view, std::string_view>, 4> kQuotes{{
      {"\"", "\""}, {"'", "'"}, {"`", "`"}, {"\xe2\x80\x9c", "\xe2\x80\x9d"}}};
  for (const auto& [open, close] : kQuotes) {
    if (v.size() >= open.size() + close.size() && v.starts_with(open) && v.ends_with(close)) {
      v = v.substr(open.size(), v.size() - open.size() - close.size());
      break;
    }
  }
  return std::string(v);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

}  // namespace

std::string_view template_name(TemplateKind kind) noexcept {
  switch (kind) {
    case TemplateKind::vqa_explanation: return "vqa-explanation";
    case TemplateKind::concept_extraction: return "concept-extraction-edit-instruction";
    case TemplateKind::llm_analysis: return "llm-analysis";
  }
  return "unknown";
}

PromptTemplate::PromptTemplate(TemplateKind kind, std::string body, std::set<std::string> placeholders)
    : kind_(kind), body_(std::move(body)), placeholders_(std::move(placeholders)) {
  std::set<std::string> used;
  for (const auto& slot : find_slots(body_)) used.insert(slot.name);
  if (used != placeholders_) {
    throw Error(Errc::config_error,
                "template " + std::string(name()) + ": placeholders in body do not match declared set");
  }
}

const PromptTemplate& builtin_template(TemplateKind kind) {
  static const std::array<PromptTemplate, 3> kBuiltins{
      PromptTemplate(TemplateKind::vqa_explanation, detail::kVqaExplanationBody, {}),
      PromptTemplate(TemplateKind::concept_extraction, detail::kConceptExtractionBody,
                     {"question", "original_answer", "original_explanation"}),
      PromptTemplate(TemplateKind::llm_analysis, detail::kLlmAnalysisBody,
                     {"original_answer", "original_explanation", "edit_instruction", "edited_answer",
                      "edited_explanation"}),
  };
  return kBuiltins[static_cast<std::size_t>(kind)];
}

std::string render(const PromptTemplate& tmpl, const Bindings& bindings) {
  for (const auto& name : tmpl.placeholders()) {
    if (bindings.find(name) == bindings.end()) {
      throw Error(Errc::missing_binding,
                  "template " + std::string(tmpl.name()) + " needs binding '" + name + "'");
    }
  }
  for (const auto& [name, _] : bindings) {
    if (!tmpl.placeholders().contains(name)) {
      throw Error(Errc::unknown_binding,
                  "template " + std::string(tmpl.name()) + " has no placeholder '" + name + "'");
    }
  }
  const std::string& body = tmpl.body();
  std::string out;
  out.reserve(body.size());
  std::size_t pos = 0;
  for (const auto& slot : find_slots(body)) {
    out.append(body, pos, slot.begin - pos);
    out.append(bindings.find(slot.name)->second);
    pos = slot.end;
  }
  out.append(body, pos);
  return out;
}

PromptSet PromptSet::builtin() {
  PromptSet set;
  for (auto kind : kAllKinds) set.templates_.push_back(builtin_template(kind));
  return set;
}

PromptSet PromptSet::with_overrides(const std::filesystem::path& dir) {
  PromptSet set = builtin();
  for (auto kind : kAllKinds) {
    const auto file = dir / (std::string(template_name(kind)) + ".txt");
    if (!std::filesystem::exists(file)) continue;
    std::string body = read_file(file);
    if (body.ends_with('\n')) body.pop_back();
    set.set(PromptTemplate(kind, std::move(body), builtin_template(kind).placeholders()));
  }
  return set;
}

const PromptTemplate& PromptSet::get(TemplateKind kind) const {
  for (const auto& t : templates_) {
    if (t.kind() == kind) return t;
  }
  return builtin_template(kind);
}

void PromptSet::set(PromptTemplate tmpl) {
  for (auto& t : templates_) {
    if (t.kind() == tmpl.kind()) {
      t = std::move(tmpl);
      return;
    }
  }
  templates_.push_back(std::move(tmpl));
}

std::map<std::string, std::string> PromptSet::digests() const {
  std::map<std::string, std::string> out;
  for (auto kind : kAllKinds) out.emplace(std::string(template_name(kind)), get(kind).digest().hex());
  return out;
}

std::vector<ConceptEdit> parse_edit_instructions(std::string_view llm_output) {
  struct Pending {
    std::string positive_raw;
    std::optional<std::string> negative_raw;
  };
  std::vector<Pending> pairs;
  std::string* current = nullptr;  // value currently accepting continuation lines

  for (auto line : split_lines(llm_output)) {
    if (auto m = match_marker(line)) {
      if (m->marker == Marker::positive) {
        pairs.push_back({std::string(m->rest), std::nullopt});
        current = &pairs.back().positive_raw;
      } else if (!pairs.empty() && !pairs.back().negative_raw) {
        pairs.back().negative_raw = std::string(m->rest);
        current = &*pairs.back().negative_raw;
      } else {
        current = nullptr;  // stray negative marker with no positive to attach to
      }
      continue;
    }
    if (current == nullptr) continue;
    if (trim(line).empty()) {
      // A blank line ends a value that already has text.
      if (!trim(*current).empty()) current = nullptr;
      continue;
    }
    if (!trim(*current).empty()) current->push_back('\n');
    current->append(line);
  }

  std::vector<ConceptEdit> edits;
  for (auto& p : pairs) {
    ConceptEdit edit;
    edit.index = static_cast<int>(edits.size()) + 1;
    edit.positive = clean_value(p.positive_raw);
    if (edit.positive.empty()) continue;
    if (!p.negative_raw) {
      edit.warnings.emplace_back("negative-prompt-missing");
    } else {
      edit.negative = clean_value(*p.negative_raw);
      if (edit.negative.empty()) edit.warnings.emplace_back("negative-prompt-empty");
    }
    edits.push_back(std::move(edit));
  }
  return edits;
}

ConceptEdit parse_edit_instruction(std::string_view llm_output) {
  auto edits = parse_edit_instructions(llm_output);
  if (edits.empty()) {
    throw Error(Errc::malformed_instruction, "no non-empty 'Positive Prompt:' marker in extractor output");
  }
  return std::move(edits.front());
}

std::string canonical_edit_instruction(const ConceptEdit& edit) {
  return "Positive Prompt: \"" + edit.positive + "\"\nNegative Prompt: \"" + edit.negative + "\"";
}

}  // namespace edct
