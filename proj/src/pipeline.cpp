#include "edct/pipeline.hpp"

#include "edct/file_io.hpp"
#include "edct/image.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace edct {

namespace {

constexpr std::string_view kText = "text/plain; charset=utf-8";

std::string trimmed(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(ws) - b + 1));
}

// Runs `f`, turning non-infrastructure errors into a StageFailure with `reason`.
template <typename F>
auto guarded(const std::string& reason, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageFailure&) {
    throw;
  } catch (const Error& e) {
    if (is_infrastructure_error(e.code())) throw;
    throw StageFailure(e.code(), reason, e.what());
  }
}

nlohmann::json verdict_json(const Verdict& v) {
  return {{"judge", v.judge_id}, {"pcs", v.pcs}, {"ncc", v.ncc}, {"ccs", v.ccs}, {"warnings", v.warnings}};
}

nlohmann::json score_json(const AggregatedScore& s) {
  return {{"pcs", s.pcs}, {"ncc", s.ncc}, {"ccs", s.ccs}, {"verdicts", s.verdict_count}, {"method", s.method}};
}

}  // namespace

bool is_infrastructure_error(Errc code) noexcept {
  return code == Errc::replay_miss || code == Errc::io_failure || code == Errc::config_error ||
         code == Errc::dangling_digest;
}

Digest ExampleAudit::put(const std::string& label, ArtifactKind kind, std::string_view bytes,
                         std::string_view media_type) {
  if (store_ == nullptr || bytes.empty()) {
    const Digest d = sha256(bytes);
    return d;
  }
  const Digest d = store_->put_artifact(kind, bytes, media_type);
  pending_[label] = d;
  return d;
}

void ExampleAudit::emit(Stage stage, nlohmann::json detail) {
  emitted_.push_back(stage);
  if (store_ == nullptr) return;
  AuditEvent ev;
  ev.example_id = example_id_;
  ev.stage = stage;
  ev.payload = std::move(pending_);
  ev.detail = std::move(detail);
  pending_.clear();
  store_->append_event(std::move(ev));
}

std::uint64_t trial_seed(std::uint64_t run_seed, std::string_view example_id, int concept_index) {
  Sha256Builder b;
  b.field("edct-trial-seed").field(run_seed).field(example_id).field(static_cast<std::uint64_t>(concept_index));
  const std::string hex = b.finish().hex().substr(0, 16);
  return std::stoull(hex, nullptr, 16);
}

BaselineResponse acquire_baseline(Gateway& gateway, const ProviderConfig& vlm, const PromptSet& prompts,
                                  const ExampleRecord& record, const ImageAttachment& image, ExampleAudit* audit) {
  require(!record.question.empty(), "example question must be non-empty");
  if (audit) {
    audit->put("original_image", ArtifactKind::original_image, image.bytes, image.media_type);
    audit->put("question", ArtifactKind::baseline_prompt, record.question, kText);
  }
  ChatResult first;
  try {
    first = gateway.chat_complete(vlm, ChatSession(record.id + "/baseline"), record.question, image);
  } catch (const EmptyReplyError& e) {
    throw Error(Errc::empty_answer, e.what());
  }
  BaselineResponse out;
  out.answer = trimmed(first.reply);
  if (out.answer.empty()) throw Error(Errc::empty_answer, "VLM answer is blank");
  if (audit) audit->put("answer", ArtifactKind::baseline_reply, first.reply, kText);

  const std::string explain_prompt = render(prompts.get(TemplateKind::vqa_explanation), {});
  if (audit) audit->put("explanation_prompt", ArtifactKind::baseline_prompt, explain_prompt, kText);
  auto second = gateway.chat_complete(vlm, first.session, explain_prompt);
  out.explanation = trimmed(second.reply);
  if (audit) audit->put("explanation", ArtifactKind::baseline_reply, second.reply, kText);
  out.session = std::move(second.session);
  return out;
}

std::vector<ConceptEdit> extract_concepts(Gateway& gateway, const ProviderConfig& extractor,
                                          const PromptSet& prompts, const ExampleRecord& record,
                                          const BaselineResponse& baseline, std::size_t k_max, ExampleAudit* audit) {
  require(k_max >= 1, "k_max must be at least 1");
  require(!baseline.answer.empty() && !baseline.explanation.empty(), "baseline must carry answer and explanation");
  const std::string prompt = render(prompts.get(TemplateKind::concept_extraction),
                                    {{"question", record.question},
                                     {"original_answer", baseline.answer},
                                     {"original_explanation", baseline.explanation}});
  if (audit) audit->put("extractor_prompt", ArtifactKind::extractor_prompt, prompt, kText);
  const auto reply = gateway.chat_complete(extractor, ChatSession(record.id + "/extract"), prompt);
  if (audit) audit->put("extractor_output", ArtifactKind::extractor_output, reply.reply, kText);

  auto edits = parse_edit_instructions(reply.reply);
  if (edits.empty()) {
    throw Error(Errc::malformed_instruction, "extractor output has no usable 'Positive Prompt:' marker");
  }
  if (edits.size() > k_max) edits.resize(k_max);
  if (audit) {
    for (const auto& e : edits) {
      audit->put("edit_instruction." + std::to_string(e.index), ArtifactKind::edit_instruction,
                 canonical_edit_instruction(e), kText);
    }
  }
  return edits;
}

GeneratedCounterfactual generate_counterfactual(Gateway& gateway, const ProviderConfig& editor,
                                                const ImageAttachment& source, const ConceptEdit& edit,
                                                std::uint64_t seed, ExampleAudit* audit) {
  require(!edit.positive.empty(), "concept edit needs a positive prompt");
  ImageEditRequest req{source, edit.positive, edit.negative, seed};
  const auto result = gateway.edit_image(editor, req);

  GeneratedCounterfactual out;
  out.concept_index = edit.index;
  out.seed = seed;
  out.image = {result.bytes, result.media_type};
  out.image_digest = sha256(result.bytes);
  const std::string suffix = "." + std::to_string(edit.index);
  if (audit) audit->put("edited_image" + suffix, ArtifactKind::edited_image, result.bytes, result.media_type);

  if (out.image_digest == source.digest()) out.warnings.emplace_back("no-visible-edit");
  const auto diff = pixel_diff(decode_image(source.bytes), decode_image(result.bytes));
  out.changed_fraction = diff.changed_fraction;
  if (audit) audit->put("pixel_diff" + suffix, ArtifactKind::pixel_diff, diff.diff_png, "image/png");
  return out;
}

CounterfactualTrial test_consistency(Gateway& gateway, const ProviderConfig& vlm,
                                     const std::vector<ProviderConfig>& judges, const PromptSet& prompts,
                                     const ExampleRecord& record, const BaselineResponse& baseline,
                                     const ConceptEdit& edit, const GeneratedCounterfactual& counterfactual,
                                     ExampleAudit* audit) {
  require(!counterfactual.image.bytes.empty(), "edited image must be available");
  require(!judges.empty(), "at least one judge is required");
  const std::string suffix = "." + std::to_string(edit.index);

  CounterfactualTrial trial;
  trial.concept_index = edit.index;
  trial.edit = edit;
  trial.edited_image = counterfactual.image_digest;
  trial.seed = counterfactual.seed;
  trial.warnings = counterfactual.warnings;

  guarded("vlm-failure", [&] {
    const std::string session_id = record.id + "/counterfactual" + suffix;
    // Same question bytes as the baseline; only the image differs.
    if (audit) audit->put("question" + suffix, ArtifactKind::consistency_prompt, record.question, kText);
    ChatResult first;
    try {
      first = gateway.chat_complete(vlm, ChatSession(session_id), record.question, counterfactual.image);
    } catch (const EmptyReplyError& e) {
      throw Error(Errc::empty_answer, e.what());
    }
    trial.edited_answer = trimmed(first.reply);
    if (trial.edited_answer.empty()) throw Error(Errc::empty_answer, "VLM answer on edited image is blank");
    if (audit) audit->put("edited_answer" + suffix, ArtifactKind::consistency_reply, first.reply, kText);
    const std::string explain_prompt = render(prompts.get(TemplateKind::vqa_explanation), {});
    if (audit) audit->put("explanation_prompt" + suffix, ArtifactKind::consistency_prompt, explain_prompt, kText);
    const auto second = gateway.chat_complete(vlm, first.session, explain_prompt);
    trial.edited_explanation = trimmed(second.reply);
    if (audit) audit->put("edited_explanation" + suffix, ArtifactKind::consistency_reply, second.reply, kText);
    return 0;
  });

  const std::string judge_prompt = render(prompts.get(TemplateKind::llm_analysis),
                                          {{"original_answer", baseline.answer},
                                           {"original_explanation", baseline.explanation},
                                           {"edit_instruction", canonical_edit_instruction(edit)},
                                           {"edited_answer", trial.edited_answer},
                                           {"edited_explanation", trial.edited_explanation}});
  if (audit) audit->put("judge_prompt" + suffix, ArtifactKind::judge_prompt, judge_prompt, kText);

  std::size_t parse_failures = 0;
  std::string last_error;
  for (const auto& judge : judges) {
    try {
      const auto reply = gateway.chat_complete(judge, ChatSession(record.id + "/judge/" + judge.name + suffix),
                                               judge_prompt);
      if (audit) {
        audit->put("judge_transcript" + suffix + "." + judge.name, ArtifactKind::judge_transcript, reply.reply,
                   kText);
      }
      trial.verdicts.push_back(validate_verdict(parse_verdict(reply.reply, judge.name)));
    } catch (const Error& e) {
      if (is_infrastructure_error(e.code())) throw;
      if (e.code() == Errc::unparseable_verdict) ++parse_failures;
      last_error = e.what();
      trial.warnings.push_back("judge '" + judge.name + "' failed: " + e.what());
    }
  }
  if (trial.verdicts.empty()) {
    if (parse_failures > 0) throw StageFailure(Errc::unparseable_verdict, "judge-parse-failure", last_error);
    throw StageFailure(Errc::provider_refusal, "judge-failure", last_error);
  }
  trial.score = aggregate(trial.verdicts);
  return trial;
}

ExampleResult run_example(const PipelineDeps& deps, const ExampleRecord& record) {
  ExampleResult result;
  result.example_id = record.id;
  ExampleAudit audit(deps.store, record.id);
  const auto& cfg = deps.config;

  try {
    ImageAttachment image;
    image.bytes = read_file(record.image_path);
    if (sha256(image.bytes) != record.image_digest) {
      throw StageFailure(Errc::precondition, "input-image-changed",
                         "image for '" + record.id + "' no longer matches its manifest digest");
    }
    image.media_type = detect_media_type(image.bytes).value_or("application/octet-stream");

    // Stage 1
    result.baseline = guarded("vlm-failure", [&] {
      return acquire_baseline(deps.gateway, cfg.vlm, deps.prompts, record, image, &audit);
    });
    audit.emit(Stage::baseline);

    // Stage 2
    std::vector<ConceptEdit> edits;
    try {
      edits = extract_concepts(deps.gateway, cfg.extractor, deps.prompts, record, *result.baseline, cfg.k_max,
                               &audit);
    } catch (const Error& e) {
      if (is_infrastructure_error(e.code())) throw;
      throw StageFailure(e.code(),
                         e.code() == Errc::malformed_instruction ? "extractor-parse-failure" : "extractor-failure",
                         e.what());
    }
    nlohmann::json extraction{{"k", edits.size()}};
    for (const auto& e : edits) {
      if (!e.warnings.empty()) extraction["warnings"][std::to_string(e.index)] = e.warnings;
    }
    audit.emit(Stage::extraction, std::move(extraction));

    // Stage 3: every edit before any consistency test keeps the per-example
    // event order monotone.
    std::vector<GeneratedCounterfactual> generated;
    for (const auto& e : edits) {
      const auto seed = trial_seed(cfg.run_seed, record.id, e.index);
      auto cf = guarded("editor-failure", [&] {
        return generate_counterfactual(deps.gateway, cfg.editor, image, e, seed, &audit);
      });
      audit.emit(Stage::edit, {{"concept_index", e.index},
                               {"seed", seed},
                               {"changed_fraction", cf.changed_fraction},
                               {"warnings", cf.warnings}});
      generated.push_back(std::move(cf));
    }

    // Stage 4
    for (std::size_t i = 0; i < edits.size(); ++i) {
      auto trial = test_consistency(deps.gateway, cfg.vlm, cfg.judges, deps.prompts, record, *result.baseline,
                                    edits[i], generated[i], &audit);
      nlohmann::json verdicts = nlohmann::json::array();
      for (const auto& v : trial.verdicts) verdicts.push_back(verdict_json(v));
      audit.emit(Stage::consistency, {{"concept_index", trial.concept_index},
                                      {"verdicts", std::move(verdicts)},
                                      {"aggregate", score_json(trial.score)},
                                      {"warnings", trial.warnings}});
      result.trials.push_back(std::move(trial));
    }

    std::vector<int> ccs_bits;
    Rational pcs_sum = 0;
    Rational ncc_sum = 0;
    for (const auto& t : result.trials) {
      ccs_bits.push_back(ccs(t.score.pcs, t.score.ncc));
      pcs_sum += t.score.pcs;
      ncc_sum += t.score.ncc;
    }
    const auto k = static_cast<long long>(result.trials.size());
    result.example_ccs = example_ccs(ccs_bits, result.trials.size());
    result.example_pcs = pcs_sum / k;
    result.example_ncc = ncc_sum / k;
    result.status = ExampleStatus::completed;

    nlohmann::ordered_json scores;
    scores["example_id"] = record.id;
    scores["concepts"] = nlohmann::json::array();
    for (const auto& t : result.trials) {
      scores["concepts"].push_back({{"index", t.concept_index}, {"pcs", t.score.pcs}, {"ncc", t.score.ncc},
                                    {"ccs", t.score.ccs}});
    }
    scores["pcs"] = format_rational(result.example_pcs);
    scores["ncc"] = format_rational(result.example_ncc);
    scores["ccs"] = format_rational(result.example_ccs);
    audit.put("scores", ArtifactKind::scores, scores.dump(), "application/json");
    audit.emit(Stage::score, {{"example_ccs", format_rational(result.example_ccs)}});
  } catch (const StageFailure& f) {
    result.status = ExampleStatus::excluded;
    result.exclusion_reason = f.reason();
    result.exclusion_message = f.what();
    result.trials.clear();
    audit.put("failure_note", ArtifactKind::failure_note, f.what(), kText);
    audit.emit(Stage::exclusion, {{"reason", f.reason()}, {"code", errc_name(f.code())}});
  }
  return result;
}

std::vector<ExampleResult> run_examples(const PipelineDeps& deps, const std::vector<ExampleRecord>& records,
                                        std::size_t workers) {
  std::vector<ExampleResult> results(records.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= records.size()) return;
      try {
        results[i] = run_example(deps, records[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        stop.store(true);
        return;
      }
    }
  };

  const std::size_t n = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, records.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);
  std::sort(results.begin(), results.end(),
            [](const ExampleResult& a, const ExampleResult& b) { return a.example_id < b.example_id; });
  return results;
}

std::string results_jsonl(const std::vector<ExampleResult>& results) {
  std::vector<const ExampleResult*> sorted;
  for (const auto& r : results) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->example_id < b->example_id; });
  std::string out;
  for (const auto* r : sorted) {
    nlohmann::ordered_json j;
    j["example_id"] = r->example_id;
    if (r->status == ExampleStatus::excluded) {
      j["status"] = "excluded";
      j["reason"] = r->exclusion_reason;
    } else {
      j["status"] = "completed";
      j["concepts"] = nlohmann::json::array();
      for (const auto& t : r->trials) {
        j["concepts"].push_back({{"index", t.concept_index},
                                 {"pcs", t.score.pcs},
                                 {"ncc", t.score.ncc},
                                 {"ccs", t.score.ccs},
                                 {"verdicts", t.score.verdict_count}});
      }
      j["pcs"] = format_rational(r->example_pcs);
      j["ncc"] = format_rational(r->example_ncc);
      j["ccs"] = format_rational(r->example_ccs);
    }
    out += j.dump() + "\n";
  }
  return out;
}

ScoreFile parse_results_jsonl(std::string_view text) {
  ScoreFile out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    auto fail = [&](const std::string& why) {
      return Error(Errc::parse_error, "scores line " + std::to_string(line_no) + ": " + why);
    };
    if (j.is_discarded() || !j.is_object()) throw fail("not a JSON object");
    const std::string status = j.value("status", "completed");
    if (status == "excluded") {
      ++out.excluded;
      continue;
    }
    if (status != "completed") throw fail("unknown status '" + status + "'");
    auto rational = [&](const char* key) {
      if (!j.contains(key)) throw fail(std::string("missing '") + key + "'");
      const auto& v = j[key];
      Rational r;
      if (v.is_string()) r = parse_rational(v.get<std::string>());
      else if (v.is_number_integer()) r = Rational(v.get<long long>());
      else throw fail(std::string("'") + key + "' must be a rational string or integer");
      if (r < 0 || r > 1) throw fail(std::string("'") + key + "' outside [0, 1]");
      return r;
    };
    ExampleScores s;
    s.example_id = j.value("example_id", "line-" + std::to_string(line_no));
    s.pcs = rational("pcs");
    s.ncc = rational("ncc");
    s.ccs = rational("ccs");
    out.completed.push_back(std::move(s));
  }
  return out;
}

}  // namespace edct
