#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace edct {

/// One judge's scores for one counterfactual trial.
struct Verdict {
  std::string judge_id;
  int pcs = 0;
  int ncc = 0;
  int ccs = 0;
  std::string analysis;
  std::vector<std::string> warnings;
};

struct AggregatedScore {
  int pcs = 0;
  int ncc = 0;
  int ccs = 0;
  std::size_t verdict_count = 0;
  std::string method;  // "single" or "majority-vote"
};

inline constexpr std::string_view kWarnCcsReconstructed = "ccs-missing-reconstructed";
inline constexpr std::string_view kWarnArithmeticCorrected = "judge-arithmetic-corrected";

/// Takes the last `PCS:` / `NCC:` / `CCS:` label carrying a 0/1 value.
/// Labels are case-insensitive and may be wrapped in markdown or brackets,
/// e.g. `**PCS:** [1]`. The rationale is the last `Analysis:` block (up to
/// `Final Scores:`), or the whole transcript when there is none.
/// Throws Error(unparseable_verdict) when PCS or NCC is absent; a missing
/// CCS is reconstructed as pcs*ncc with a warning.
Verdict parse_verdict(std::string_view transcript, std::string judge_id);

/// Enforces ccs == pcs * ncc, attaching kWarnArithmeticCorrected on change.
Verdict validate_verdict(Verdict v);

/// Independent majority votes on pcs and on ncc; an even split counts as 0.
/// Throws Error(empty_verdict_set).
AggregatedScore aggregate(std::span<const Verdict> verdicts);

}  // namespace edct
