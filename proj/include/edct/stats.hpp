#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace edct {

/// Exact arbitrary-precision rational; scores are accumulated in it so the
/// result does not depend on the order workers finish in.
using Rational = boost::multiprecision::cpp_rational;

double to_double(const Rational& r);
/// "num/den" (den omitted when 1).
std::string format_rational(const Rational& r);
/// Accepts "n", "n/d", or a plain decimal like "0.674". Throws Error(parse_error).
Rational parse_rational(std::string_view text);

/// CCS for one concept: pcs * ncc, both bits.
int ccs(int pcs, int ncc);

/// Mean of the per-concept CCS bits. Requires values.size() == k.
/// Throws Error(empty_concept_list) on an empty list.
Rational example_ccs(std::span<const int> per_concept_ccs, std::size_t k);

/// Throws Error(empty_dataset).
Rational dataset_mean(std::span<const Rational> values);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

enum class CiMethod { percentile_bootstrap, normal_approximation };

std::string_view ci_method_name(CiMethod m) noexcept;
/// "bootstrap" or "normal". Throws Error(config_error).
CiMethod parse_ci_method(std::string_view name);

struct CiOptions {
  CiMethod method = CiMethod::percentile_bootstrap;
  double level = 0.95;
  std::size_t resamples = 10000;
  std::uint64_t seed = 0;
};

/// Linear interpolation between order statistics; `sorted` must be sorted.
double quantile_sorted(std::span<const double> sorted, double p);

/// Percentile bootstrap of the mean: `resamples` with-replacement resamples
/// of size n drawn from a seeded mt19937_64.
Interval bootstrap_ci(std::span<const double> values, double level = 0.95, std::size_t resamples = 10000,
                      std::uint64_t seed = 0);

/// mean ± z * s / sqrt(n) with the sample standard deviation.
Interval normal_ci(std::span<const double> values, double level = 0.95);

struct MetricSummary {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;

  [[nodiscard]] double half_width() const noexcept { return (upper - lower) / 2.0; }
};

struct ScoreTriple {
  MetricSummary pcs;
  MetricSummary ncc;
  MetricSummary ccs;
  CiOptions ci;
};

/// Per-example scores; pcs/ncc are the means of the per-concept bits.
struct ExampleScores {
  std::string example_id;
  Rational pcs;
  Rational ncc;
  Rational ccs;
};

/// Mean and interval of one metric, endpoints widened to contain the mean
/// and clamped to [0, 1].
MetricSummary summarize_metric(std::span<const Rational> values, const CiOptions& ci);

struct AblationCell {
  std::string extractor_judge;
  std::string editor;
};

struct ReportRow {
  std::string label;
  std::optional<AblationCell> ablation;
  ScoreTriple scores;
  std::size_t completed = 0;
  std::size_t excluded = 0;
};

/// Builds a row from completed examples. Examples are sorted by id first.
/// Throws Error(empty_dataset) when `completed` is empty.
ReportRow summarize(std::vector<ExampleScores> completed, std::size_t excluded, std::string label,
                    const CiOptions& ci);

enum class ReportFormat { table, csv, records };

/// "table", "csv", "records". Throws Error(config_error).
ReportFormat parse_report_format(std::string_view name);
std::string_view report_extension(ReportFormat f) noexcept;

/// `mean±half-width`, three decimals.
std::string format_cell(const MetricSummary& m);

/// Model | PCS | NCC | CCS rows; when every row carries an ablation cell the
/// extractor/judge × editor grid is rendered with the CCS column only.
std::string build_report(std::span<const ReportRow> rows, ReportFormat format);

}  // namespace edct
