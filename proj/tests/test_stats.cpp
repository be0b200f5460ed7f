#include "edct/error.hpp"
#include "edct/file_io.hpp"
#include "edct/pipeline.hpp"
#include "edct/stats.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace edct;

namespace {

std::vector<Rational> rationals(std::initializer_list<const char*> xs) {
  std::vector<Rational> out;
  for (const auto* x : xs) out.push_back(parse_rational(x));
  return out;
}

// Exact bootstrap distribution of the mean for tiny n: every one of the n^n
// index tuples is one equally likely resample.
std::vector<double> exhaustive_means(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= n;
  std::vector<double> means;
  for (std::size_t code = 0; code < total; ++code) {
    double sum = 0;
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i) {
      sum += xs[c % n];
      c /= n;
    }
    means.push_back(sum / static_cast<double>(n));
  }
  std::sort(means.begin(), means.end());
  return means;
}

double inverse_cdf(const std::vector<double>& sorted, double p) {
  const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
  return sorted[k == 0 ? 0 : k - 1];
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

ReportRow row_of(const std::string& label, std::vector<int> ccs_bits, CiOptions ci = {}) {
  std::vector<ExampleScores> ex;
  for (std::size_t i = 0; i < ccs_bits.size(); ++i) {
    ex.push_back({"e" + std::to_string(100 + i), ccs_bits[i], ccs_bits[i], ccs_bits[i]});
  }
  ci.resamples = 2000;
  return summarize(ex, 0, label, ci);
}

}  // namespace

TEST(Ccs, ProductOverAllPairs) {
  for (int p = 0; p < 2; ++p)
    for (int n = 0; n < 2; ++n) EXPECT_EQ(ccs(p, n), p * n);
  EXPECT_THROW(ccs(2, 1), Error);
}

TEST(ExampleCcs, Examples) {
  const int one[] = {1};
  EXPECT_EQ(example_ccs(one, 1), Rational(1));
  const int three[] = {1, 0, 1};
  EXPECT_EQ(example_ccs(three, 3), Rational(2, 3));
  const int two[] = {1, 0};
  EXPECT_EQ(example_ccs(two, 2), Rational(1, 2));
  try {
    example_ccs(std::span<const int>{}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_concept_list);
  }
  EXPECT_THROW(example_ccs(three, 2), Error);
}

TEST(DatasetMean, Examples) {
  EXPECT_EQ(dataset_mean(rationals({"1", "1", "0", "0"})), Rational(1, 2));
  EXPECT_EQ(dataset_mean(rationals({"0.674"})), Rational(674, 1000));
  try {
    dataset_mean(std::vector<Rational>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_dataset);
  }
}

TEST(DatasetMean, SummationOracleOnRandomVectors) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 200;
    std::vector<Rational> values;
    long double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const long long den = 1 + static_cast<long long>(rng() % 12);
      const long long num = static_cast<long long>(rng() % static_cast<std::uint64_t>(den + 1));
      values.emplace_back(num, den);
      sum += static_cast<long double>(num) / static_cast<long double>(den);
    }
    const double oracle = static_cast<double>(sum / static_cast<long double>(n));
    ASSERT_NEAR(to_double(dataset_mean(values)), oracle, 1e-12);
  }
}

TEST(DatasetMean, MeanOfExampleMeansEqualsGrandMeanForConstantK) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng() % 4;
    const std::size_t n = 1 + rng() % 30;
    std::vector<Rational> example_means;
    std::vector<Rational> all_bits;
    for (std::size_t e = 0; e < n; ++e) {
      std::vector<int> bits;
      for (std::size_t i = 0; i < k; ++i) {
        bits.push_back(static_cast<int>(rng() % 2));
        all_bits.emplace_back(bits.back());
      }
      example_means.push_back(example_ccs(bits, k));
    }
    ASSERT_EQ(dataset_mean(example_means), dataset_mean(all_bits));
  }
}

TEST(Rationals, ParseAndFormat) {
  EXPECT_EQ(format_rational(Rational(2, 4)), "1/2");
  EXPECT_EQ(format_rational(Rational(3)), "3");
  EXPECT_EQ(parse_rational("2/3"), Rational(2, 3));
  EXPECT_EQ(parse_rational("0.674"), Rational(337, 500));
  EXPECT_EQ(parse_rational("1"), Rational(1));
  EXPECT_THROW(parse_rational("1/0"), Error);
  EXPECT_THROW(parse_rational("abc"), Error);
  EXPECT_THROW(parse_rational("1."), Error);
}

TEST(Quantile, LinearInterpolation) {
  const double xs[] = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_sorted(xs, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(xs, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(xs, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted(xs, 0.25), 1.75);
}

TEST(Bootstrap, ConstantDataIsDegenerate) {
  const double xs[] = {0.5, 0.5, 0.5};
  const auto iv = bootstrap_ci(xs, 0.95, 1000, 1);
  EXPECT_EQ(iv.lower, 0.5);
  EXPECT_EQ(iv.upper, 0.5);
}

TEST(Bootstrap, BitDeterministicUnderSeed) {
  const double xs[] = {0, 1, 1};
  const auto a = bootstrap_ci(xs, 0.95, 50, 42);
  const auto b = bootstrap_ci(xs, 0.95, 50, 42);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
  const double ys[] = {0.1, 0.4, 0.35, 0.9, 0.6, 0.75};
  const auto c = bootstrap_ci(ys, 0.9, 500, 7);
  const auto d = bootstrap_ci(ys, 0.9, 500, 7);
  EXPECT_EQ(c.lower, d.lower);
  EXPECT_EQ(c.upper, d.upper);
}

TEST(Bootstrap, ConvergesToExhaustiveOracle) {
  for (const auto& xs : {std::vector<double>{0, 1, 1}, std::vector<double>{0.2, 0.5, 0.9}}) {
    const auto oracle = exhaustive_means(xs);
    ASSERT_EQ(oracle.size(), 27u);
    for (double level : {0.8, 0.95}) {
      const double alpha = 1 - level;
      const auto iv = bootstrap_ci(xs, level, 100000, 9);
      EXPECT_NEAR(iv.lower, inverse_cdf(oracle, alpha / 2), 0.02) << level;
      EXPECT_NEAR(iv.upper, inverse_cdf(oracle, 1 - alpha / 2), 0.02) << level;
    }
  }
}

TEST(Bootstrap, Errors) {
  try {
    bootstrap_ci(std::span<const double>{}, 0.95, 10, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_dataset);
  }
  const double xs[] = {1};
  EXPECT_THROW(bootstrap_ci(xs, 1.0, 10, 0), Error);
  EXPECT_THROW(bootstrap_ci(xs, 0.95, 0, 0), Error);
}

TEST(Bootstrap, MedianWidthShrinksWithN) {
  std::mt19937_64 rng(77);
  std::bernoulli_distribution coin(0.6);
  double previous = 1e9;
  for (std::size_t n : {10u, 40u, 160u}) {
    std::vector<double> widths;
    for (int rep = 0; rep < 25; ++rep) {
      std::vector<double> xs(n);
      for (auto& x : xs) x = coin(rng) ? 1.0 : 0.0;
      const auto iv = bootstrap_ci(xs, 0.95, 1000, static_cast<std::uint64_t>(rep));
      widths.push_back(iv.upper - iv.lower);
    }
    std::nth_element(widths.begin(), widths.begin() + 12, widths.end());
    EXPECT_LT(widths[12], previous) << n;
    previous = widths[12];
  }
}

TEST(NormalCi, KnownValue) {
  const double xs[] = {0, 1};
  const auto iv = normal_ci(xs, 0.95);
  // mean 0.5, sd sqrt(0.5), z = 1.959964
  EXPECT_NEAR(iv.upper - 0.5, 1.959963984540054 * std::sqrt(0.5) / std::sqrt(2.0), 1e-12);
}

TEST(Summarize, BoundsAndClamping) {
  std::mt19937 rng(8);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> bits(5 + rng() % 20);
    for (auto& b : bits) b = static_cast<int>(rng() % 2);
    for (auto method : {CiMethod::percentile_bootstrap, CiMethod::normal_approximation}) {
      CiOptions ci;
      ci.method = method;
      const auto row = row_of("m", bits, ci);
      for (const auto* m : {&row.scores.pcs, &row.scores.ncc, &row.scores.ccs}) {
        EXPECT_LE(0.0, m->lower);
        EXPECT_LE(m->lower, m->mean);
        EXPECT_LE(m->mean, m->upper);
        EXPECT_LE(m->upper, 1.0);
      }
    }
  }
}

TEST(Summarize, OrderInsensitive) {
  std::vector<ExampleScores> ex;
  for (int i = 0; i < 30; ++i) ex.push_back({"id" + std::to_string(i), i % 3 == 0, i % 2 == 0, i % 6 == 0});
  auto shuffled = ex;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937(1));
  CiOptions ci;
  ci.resamples = 500;
  const auto a = summarize(ex, 2, "m", ci);
  const auto b = summarize(shuffled, 2, "m", ci);
  EXPECT_EQ(build_report(std::span(&a, 1), ReportFormat::table), build_report(std::span(&b, 1), ReportFormat::table));
  EXPECT_THROW(summarize({}, 0, "m", ci), Error);
}

TEST(FormatCell, ReferenceCellAndDegenerate) {
  EXPECT_EQ(format_cell({0.674, 0.632, 0.716}), "0.674±0.042");
  EXPECT_EQ(format_cell({1.0, 1.0, 1.0}), "1.000±0.000");
}

TEST(BuildReport, TableColumns) {
  const auto row = row_of("Gemini 2.5 Flash", {1, 1, 1, 1});
  const auto text = build_report(std::span(&row, 1), ReportFormat::table);
  std::istringstream in(text);
  std::string header, rule, body;
  std::getline(in, header);
  std::getline(in, rule);
  std::getline(in, body);
  EXPECT_EQ(header, "| Model            | PCS         | NCC         | CCS         |");
  EXPECT_EQ(body, "| Gemini 2.5 Flash | 1.000±0.000 | 1.000±0.000 | 1.000±0.000 |");
  EXPECT_NE(text.find("4 completed, 0 excluded; 95% CI, percentile bootstrap"), std::string::npos);
}

TEST(BuildReport, AblationGridShowsCcsOnly) {
  std::vector<ReportRow> rows;
  for (const auto& [llm, editor] : std::vector<std::pair<std::string, std::string>>{
           {"GPT-4o", "Flux-Kontext"}, {"GPT-4o", "Gemini Flash Image"},
           {"Gemini 2.5 Pro", "Flux-Kontext"}, {"Gemini 2.5 Pro", "Gemini Flash Image"}}) {
    auto r = row_of(llm + "/" + editor, {1, 0, 1});
    r.ablation = AblationCell{llm, editor};
    rows.push_back(r);
  }
  const auto text = build_report(rows, ReportFormat::table);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "| Concept extraction & judge LLM | Image Editor       | CCS         |");
  EXPECT_EQ(text.find("PCS"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2 + 4 + 1 + 4);
}

TEST(BuildReport, CsvRoundTrips) {
  std::vector<ReportRow> rows{row_of("Model, \"A\"", {1, 0, 1, 1}), row_of("B", {0, 0, 1})};
  const auto csv = build_report(rows, ReportFormat::csv);
  std::istringstream in(csv);
  std::string line;
  std::vector<std::vector<std::string>> table;
  while (std::getline(in, line)) table.push_back(split_csv_line(line));
  ASSERT_EQ(table.size(), 3u);
  EXPECT_EQ(table[0][0], "model");
  EXPECT_EQ(table[1][0], "Model, \"A\"");
  EXPECT_EQ(table[2][0], "B");
  for (const auto& r : table) EXPECT_EQ(r.size(), table[0].size());
  EXPECT_DOUBLE_EQ(std::stod(table[1][7]), 0.75);
  EXPECT_EQ(table[2][10], "3");
}

TEST(BuildReport, RecordsAreJsonLines) {
  const auto row = row_of("m", {1, 0});
  const auto text = build_report(std::span(&row, 1), ReportFormat::records);
  const auto j = nlohmann::json::parse(text.substr(0, text.find('\n')));
  EXPECT_EQ(j["model"], "m");
  EXPECT_DOUBLE_EQ(j["ccs"]["mean"].get<double>(), 0.5);
  EXPECT_EQ(j["completed"], 2);
}

TEST(BuildReport, Deterministic) {
  const auto a = row_of("m", {1, 0, 1, 1, 0});
  const auto b = row_of("m", {1, 0, 1, 1, 0});
  EXPECT_EQ(build_report(std::span(&a, 1), ReportFormat::table), build_report(std::span(&b, 1), ReportFormat::table));
}

TEST(ScoreFixture, ReferenceCellFromSyntheticScores) {
  const auto file = parse_results_jsonl(read_file(tst::source_dir() / "tests/fixtures/scores/flash_cell.jsonl"));
  ASSERT_EQ(file.completed.size(), 120u);
  EXPECT_EQ(file.excluded, 1u);
  CiOptions ci;
  ci.method = CiMethod::normal_approximation;
  const auto row = summarize(file.completed, file.excluded, "Gemini 2.5 Flash", ci);
  EXPECT_EQ(format_cell(row.scores.ccs), "0.674±0.042");
}

TEST(ScoreFile, RejectsBadLines) {
  EXPECT_THROW(parse_results_jsonl("not json\n"), Error);
  EXPECT_THROW(parse_results_jsonl(R"({"example_id":"a","pcs":"1","ncc":"1"})"), Error);
  EXPECT_THROW(parse_results_jsonl(R"({"example_id":"a","pcs":"3/2","ncc":"1","ccs":"1"})"), Error);
  EXPECT_THROW(parse_results_jsonl(R"({"example_id":"a","status":"odd"})"), Error);
  const auto ok = parse_results_jsonl("\n{\"example_id\":\"a\",\"pcs\":1,\"ncc\":\"1/2\",\"ccs\":\"0\"}\n");
  ASSERT_EQ(ok.completed.size(), 1u);
  EXPECT_EQ(ok.completed[0].ncc, Rational(1, 2));
}
