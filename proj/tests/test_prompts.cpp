#include "edct/error.hpp"
#include "edct/file_io.hpp"
#include "edct/prompts.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace edct;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::precondition;
}

}  // namespace

// Digests of the template bodies as published, computed outside this code base.
TEST(BuiltinTemplates, ChecksumPinned) {
  EXPECT_EQ(builtin_template(TemplateKind::vqa_explanation).digest().hex(),
            "733fd8ecb1df88faadd1402d093e38e7b7cab118d1723f4f7fd83cf008eee080");
  EXPECT_EQ(builtin_template(TemplateKind::concept_extraction).digest().hex(),
            "d00ebfbf6859514acb562f140c96a93a334c74856cb3212a39ca89eee7eb2cb1");
  EXPECT_EQ(builtin_template(TemplateKind::llm_analysis).digest().hex(),
            "c48301450ea01632855970b67ca1777ae4bfb911d9500b3fd475ff300b2db920");
  EXPECT_EQ(builtin_template(TemplateKind::vqa_explanation).body().size(), 148u);
  EXPECT_EQ(builtin_template(TemplateKind::concept_extraction).body().size(), 3965u);
  EXPECT_EQ(builtin_template(TemplateKind::llm_analysis).body().size(), 2882u);
}

TEST(BuiltinTemplates, Placeholders) {
  EXPECT_TRUE(builtin_template(TemplateKind::vqa_explanation).placeholders().empty());
  EXPECT_EQ(builtin_template(TemplateKind::concept_extraction).placeholders(),
            (std::set<std::string>{"question", "original_answer", "original_explanation"}));
  EXPECT_EQ(builtin_template(TemplateKind::llm_analysis).placeholders(),
            (std::set<std::string>{"original_answer", "original_explanation", "edit_instruction", "edited_answer",
                                   "edited_explanation"}));
}

TEST(Render, VqaExplanationWithEmptyBindingsIsVerbatim) {
  const auto& t = builtin_template(TemplateKind::vqa_explanation);
  EXPECT_EQ(render(t, {}),
            "what is the reason for your answer, explain in 5-6 sentences using the most important visual feature or "
            "element in the image that led to the answer.");
}

TEST(Render, ConceptExtractionFillsTrailingSlots) {
  const auto out = render(builtin_template(TemplateKind::concept_extraction),
                          {{"question", "Q1"}, {"original_answer", "A1"}, {"original_explanation", "E1"}});
  EXPECT_TRUE(out.ends_with("Question: \"Q1\"\nOriginal Answer: \"A1\"\nOriginal Explanation: \"E1\""));
  EXPECT_EQ(sha256(out).hex(), "25c73cf945f7ac062ceb761293c77017635d348e4e4613dddac9ee099b0bd2a7");
}

TEST(Render, LlmAnalysisOracle) {
  const auto out = render(builtin_template(TemplateKind::llm_analysis), {{"original_answer", "A"},
                                                                         {"original_explanation", "E"},
                                                                         {"edit_instruction", "I"},
                                                                         {"edited_answer", "EA"},
                                                                         {"edited_explanation", "EE"}});
  EXPECT_EQ(sha256(out).hex(), "b7ef89ac898476e4fa31b559623afc136cb640ccab53bc1c40b11643dbf7e3fe");
}

TEST(Render, MissingAndUnknownBindings) {
  const auto& t = builtin_template(TemplateKind::concept_extraction);
  EXPECT_EQ(code_of([&] { render(t, {{"question", "q"}, {"original_answer", "a"}}); }), Errc::missing_binding);
  EXPECT_EQ(code_of([&] {
              render(t, {{"question", "q"}, {"original_answer", "a"}, {"original_explanation", "e"}, {"x", "1"}});
            }),
            Errc::unknown_binding);
  EXPECT_EQ(code_of([&] { render(builtin_template(TemplateKind::vqa_explanation), {{"x", "1"}}); }),
            Errc::unknown_binding);
}

TEST(Render, ValuesAreNotRescanned) {
  PromptTemplate t(TemplateKind::vqa_explanation, "<{a}|{b}>", {"a", "b"});
  EXPECT_EQ(render(t, {{"a", "{b}"}, {"b", "x"}}), "<{b}|x>");
}

TEST(Render, DeterministicAcrossCalls) {
  const auto& t = builtin_template(TemplateKind::llm_analysis);
  Bindings b{{"original_answer", "a"}, {"original_explanation", "b"}, {"edit_instruction", "c"},
             {"edited_answer", "d"}, {"edited_explanation", "e"}};
  EXPECT_EQ(render(t, b), render(t, b));
}

TEST(PromptTemplateType, RejectsUndeclaredPlaceholders) {
  EXPECT_EQ(code_of([] { PromptTemplate(TemplateKind::vqa_explanation, "hi {name}", {}); }), Errc::config_error);
  EXPECT_EQ(code_of([] { PromptTemplate(TemplateKind::vqa_explanation, "hi", {"name"}); }), Errc::config_error);
}

TEST(PromptSetOverrides, ReplacesAndHashes) {
  tst::TempDir dir;
  write_file_atomic(dir / "vqa-explanation.txt", "Why? Answer briefly.\n");
  const auto set = PromptSet::with_overrides(dir.path());
  EXPECT_EQ(set.get(TemplateKind::vqa_explanation).body(), "Why? Answer briefly.");
  EXPECT_EQ(set.digests().at("vqa-explanation"), sha256("Why? Answer briefly.").hex());
  EXPECT_EQ(set.get(TemplateKind::llm_analysis).digest(), builtin_template(TemplateKind::llm_analysis).digest());

  write_file_atomic(dir / "llm-analysis.txt", "{original_answer} only");
  EXPECT_EQ(code_of([&] { PromptSet::with_overrides(dir.path()); }), Errc::config_error);
}

TEST(ParseEditInstruction, FewShotExampleTwo) {
  const auto e = parse_edit_instruction(
      "Positive Prompt: \"Replace the stethoscope around the man's neck with a pair of large, red studio "
      "headphones.\"\nNegative Prompt: \"Stethoscope, doctor, medical equipment, hospital, clinic.\"");
  EXPECT_EQ(e.positive, "Replace the stethoscope around the man's neck with a pair of large, red studio headphones.");
  EXPECT_EQ(e.negative, "Stethoscope, doctor, medical equipment, hospital, clinic.");
  EXPECT_TRUE(e.warnings.empty());
}

TEST(ParseEditInstruction, PreambleAndMarkdown) {
  const auto e = parse_edit_instruction(
      "Sure! Here is the editing command you asked for.\n\n**Positive Prompt:** \"Make the sky purple.\"\n"
      "**Negative Prompt:** 'blue sky'\n\nLet me know if you need more.");
  EXPECT_EQ(e.positive, "Make the sky purple.");
  EXPECT_EQ(e.negative, "blue sky");
}

TEST(ParseEditInstruction, CaseInsensitiveLabels) {
  const auto e = parse_edit_instruction("positive prompt: turn the cat into a dog\nNEGATIVE PROMPT: cat");
  EXPECT_EQ(e.positive, "turn the cat into a dog");
  EXPECT_EQ(e.negative, "cat");
}

TEST(ParseEditInstruction, PositiveOnlyWarns) {
  const auto e = parse_edit_instruction("Positive Prompt: \"Paint the car green.\"");
  EXPECT_EQ(e.positive, "Paint the car green.");
  EXPECT_TRUE(e.negative.empty());
  ASSERT_EQ(e.warnings.size(), 1u);
  EXPECT_EQ(e.warnings[0], "negative-prompt-missing");
}

TEST(ParseEditInstruction, NoMarkersIsMalformed) {
  EXPECT_EQ(code_of([] { parse_edit_instruction("I cannot help with that."); }), Errc::malformed_instruction);
  EXPECT_EQ(code_of([] { parse_edit_instruction("Negative Prompt: cats"); }), Errc::malformed_instruction);
  EXPECT_EQ(code_of([] { parse_edit_instruction("Positive Prompt: \"\"\nNegative Prompt: x"); }),
            Errc::malformed_instruction);
}

TEST(ParseEditInstructions, MultiplePairsInOrder) {
  const auto edits = parse_edit_instructions(
      "Positive Prompt: one\nNegative Prompt: not one\n\nPositive Prompt: two\nNegative Prompt: not two\n");
  ASSERT_EQ(edits.size(), 2u);
  EXPECT_EQ(edits[0].index, 1);
  EXPECT_EQ(edits[1].index, 2);
  EXPECT_EQ(edits[1].positive, "two");
  EXPECT_EQ(edits[1].negative, "not two");
}

TEST(ParseEditInstruction, CanonicalRoundTripProperty) {
  std::mt19937 rng(11);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz ,.'-ABCXYZ0123456789";
  auto word = [&](std::size_t min_len) {
    std::string s;
    const std::size_t n = min_len + rng() % 40;
    for (std::size_t i = 0; i < n; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
    // Canonical values carry no surrounding whitespace.
    const auto b = s.find_first_not_of(' ');
    if (b == std::string::npos) return std::string("x");
    return s.substr(b, s.find_last_not_of(' ') - b + 1);
  };
  for (int i = 0; i < 500; ++i) {
    ConceptEdit in;
    in.positive = word(1);
    in.negative = (i % 5 == 0) ? "" : word(1);
    const auto out = parse_edit_instruction(canonical_edit_instruction(in));
    EXPECT_EQ(out.positive, in.positive);
    EXPECT_EQ(out.negative, in.negative);
  }
}
