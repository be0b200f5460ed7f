#include "edct/judge.hpp"

#include "edct/error.hpp"

#include <optional>
#include <regex>

namespace edct {

namespace {

// label, markdown/bracket noise, ':' then noise, then a lone 0/1 (not 0.5, not 10,
// not the template's own "[0 or 1]").
const std::regex& score_regex() {
  static const std::regex re(
      R"((?:^|[^A-Za-z0-9])(PCS|NCC|CCS)[\s*_`\]\)]*:[\s*_`\[\(]*([01])(?![0-9]|\.[0-9]*[1-9]|\s*(?:or|/)\s*[01]))",
      std::regex::ECMAScript | std::regex::icase);
  return re;
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string extract_analysis(std::string_view transcript) {
  const std::string low = lower(transcript);
  const auto start = low.rfind("analysis:");
  if (start == std::string::npos) return std::string(trim(transcript));
  const auto body = start + std::string_view("analysis:").size();
  auto end = low.find("final scores", body);
  if (end == std::string::npos) end = low.size();
  return std::string(trim(transcript.substr(body, end - body)));
}

}  // namespace

Verdict parse_verdict(std::string_view transcript, std::string judge_id) {
  std::optional<int> pcs, ncc, ccs;
  const std::string text(transcript);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), score_regex()); it != std::sregex_iterator();
       ++it) {
    const std::string label = upper((*it)[1].str());
    const int value = (*it)[2].str() == "1" ? 1 : 0;
    if (label == "PCS") pcs = value;
    else if (label == "NCC") ncc = value;
    else ccs = value;
  }
  if (!pcs || !ncc) {
    throw Error(Errc::unparseable_verdict,
                "judge " + judge_id + ": transcript lacks a 0/1 " + (!pcs ? "PCS" : "NCC") + " score");
  }
  Verdict v;
  v.judge_id = std::move(judge_id);
  v.pcs = *pcs;
  v.ncc = *ncc;
  if (ccs) {
    v.ccs = *ccs;
  } else {
    v.ccs = v.pcs * v.ncc;
    v.warnings.emplace_back(kWarnCcsReconstructed);
  }
  v.analysis = extract_analysis(transcript);
  return v;
}

Verdict validate_verdict(Verdict v) {
  require((v.pcs == 0 || v.pcs == 1) && (v.ncc == 0 || v.ncc == 1) && (v.ccs == 0 || v.ccs == 1),
          "verdict scores must be 0 or 1");
  const int product = v.pcs * v.ncc;
  if (v.ccs != product) {
    v.ccs = product;
    v.warnings.emplace_back(kWarnArithmeticCorrected);
  }
  return v;
}

AggregatedScore aggregate(std::span<const Verdict> verdicts) {
  if (verdicts.empty()) throw Error(Errc::empty_verdict_set, "aggregate needs at least one verdict");
  std::size_t pcs_votes = 0;
  std::size_t ncc_votes = 0;
  for (const auto& v : verdicts) {
    pcs_votes += static_cast<std::size_t>(v.pcs);
    ncc_votes += static_cast<std::size_t>(v.ncc);
  }
  AggregatedScore s;
  s.verdict_count = verdicts.size();
  // Strict majority; ties fall to 0.
  s.pcs = 2 * pcs_votes > verdicts.size() ? 1 : 0;
  s.ncc = 2 * ncc_votes > verdicts.size() ? 1 : 0;
  s.ccs = s.pcs * s.ncc;
  s.method = verdicts.size() == 1 ? "single" : "majority-vote";
  return s;
}

}  // namespace edct
