#include "edct/stats.hpp"

#include "edct/error.hpp"

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace edct {

namespace {

// Uniform index in [0, bound) without modulo bias.
std::uint64_t draw_index(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t x = rng();
    if (x >= threshold) return x % bound;
  }
}

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(Errc::precondition, "confidence level must lie in (0, 1)");
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  return out + "\"";
}

std::size_t display_width(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string pad(std::string_view s, std::size_t width) {
  std::string out(s);
  const auto w = display_width(s);
  if (w < width) out.append(width - w, ' ');
  return out;
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& body) {
  std::vector<std::size_t> widths(header.size(), 3);
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = std::max(widths[c], display_width(header[c]));
    for (const auto& row : body) widths[c] = std::max(widths[c], display_width(row[c]));
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out = "|";
    for (std::size_t c = 0; c < cells.size(); ++c) out += " " + pad(cells[c], widths[c]) + " |";
    return out + "\n";
  };
  std::string out = line(header);
  out += "|";
  for (auto w : widths) out += std::string(w + 2, '-') + "|";
  out += "\n";
  for (const auto& row : body) out += line(row);
  return out;
}

std::string ci_description(const CiOptions& ci) {
  const auto pct = fmt::format("{:g}%", ci.level * 100.0);
  if (ci.method == CiMethod::percentile_bootstrap) {
    return fmt::format("{} CI, percentile bootstrap ({} resamples, seed {})", pct, ci.resamples, ci.seed);
  }
  return fmt::format("{} CI, normal approximation", pct);
}

nlohmann::json metric_json(const MetricSummary& m) {
  return {{"mean", m.mean}, {"lower", m.lower}, {"upper", m.upper}, {"half_width", m.half_width()}};
}

nlohmann::json ci_json(const CiOptions& ci) {
  nlohmann::json j{{"method", ci_method_name(ci.method)}, {"level", ci.level}};
  if (ci.method == CiMethod::percentile_bootstrap) {
    j["resamples"] = ci.resamples;
    j["seed"] = ci.seed;
  }
  return j;
}

}  // namespace

double to_double(const Rational& r) { return r.convert_to<double>(); }

std::string format_rational(const Rational& r) {
  const auto num = boost::multiprecision::numerator(r);
  const auto den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

Rational parse_rational(std::string_view text) {
  using boost::multiprecision::cpp_int;
  auto bad = [&] { return Error(Errc::parse_error, "not a rational: '" + std::string(text) + "'"); };
  auto parse_int = [&](std::string_view s) {
    if (s.empty()) throw bad();
    std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (i == s.size()) throw bad();
    for (std::size_t j = i; j < s.size(); ++j) {
      if (s[j] < '0' || s[j] > '9') throw bad();
    }
    return cpp_int(std::string(s));
  };
  if (const auto slash = text.find('/'); slash != std::string_view::npos) {
    const cpp_int den = parse_int(text.substr(slash + 1));
    if (den == 0) throw bad();
    return Rational(parse_int(text.substr(0, slash)), den);
  }
  if (const auto dot = text.find('.'); dot != std::string_view::npos) {
    const auto frac = text.substr(dot + 1);
    const auto whole = text.substr(0, dot);
    if (frac.empty() || frac[0] == '-' || frac[0] == '+') throw bad();
    cpp_int scale = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
    const bool negative = !whole.empty() && whole[0] == '-';
    const cpp_int w = (whole.empty() || whole == "-" || whole == "+") ? cpp_int(0) : parse_int(whole);
    const cpp_int f = parse_int(frac);
    cpp_int magnitude = (w < 0 ? cpp_int(-w) : w) * scale + f;
    return Rational(negative ? cpp_int(-magnitude) : magnitude, scale);
  }
  return Rational(parse_int(text));
}

int ccs(int pcs, int ncc) {
  require((pcs == 0 || pcs == 1) && (ncc == 0 || ncc == 1), "pcs and ncc must be 0 or 1");
  return pcs * ncc;
}

Rational example_ccs(std::span<const int> per_concept_ccs, std::size_t k) {
  if (per_concept_ccs.empty()) throw Error(Errc::empty_concept_list, "example has no concept scores");
  require(per_concept_ccs.size() == k, "number of concept scores must equal k");
  Rational sum = 0;
  for (int v : per_concept_ccs) {
    require(v == 0 || v == 1, "concept CCS must be 0 or 1");
    sum += v;
  }
  return sum / static_cast<long long>(k);
}

Rational dataset_mean(std::span<const Rational> values) {
  if (values.empty()) throw Error(Errc::empty_dataset, "no completed examples to average");
  Rational sum = 0;
  for (const auto& v : values) sum += v;
  return sum / static_cast<long long>(values.size());
}

std::string_view ci_method_name(CiMethod m) noexcept {
  return m == CiMethod::percentile_bootstrap ? "bootstrap" : "normal";
}

CiMethod parse_ci_method(std::string_view name) {
  if (name == "bootstrap") return CiMethod::percentile_bootstrap;
  if (name == "normal") return CiMethod::normal_approximation;
  throw Error(Errc::config_error, "unknown CI method '" + std::string(name) + "'");
}

double quantile_sorted(std::span<const double> sorted, double p) {
  require(!sorted.empty(), "quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

Interval bootstrap_ci(std::span<const double> values, double level, std::size_t resamples, std::uint64_t seed) {
  if (values.empty()) throw Error(Errc::empty_dataset, "bootstrap over empty data");
  check_level(level);
  require(resamples >= 1, "resamples must be >= 1");
  std::mt19937_64 rng(seed);
  const auto n = static_cast<std::uint64_t>(values.size());
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double sum = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) sum += values[draw_index(rng, n)];
    m = sum / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = 1.0 - level;
  return {quantile_sorted(means, alpha / 2.0), quantile_sorted(means, 1.0 - alpha / 2.0)};
}

Interval normal_ci(std::span<const double> values, double level) {
  if (values.empty()) throw Error(Errc::empty_dataset, "normal CI over empty data");
  check_level(level);
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const double z = boost::math::quantile(boost::math::normal(), 1.0 - (1.0 - level) / 2.0);
  const double hw = z * sd / std::sqrt(n);
  return {mean - hw, mean + hw};
}

MetricSummary summarize_metric(std::span<const Rational> values, const CiOptions& ci) {
  const double mean = to_double(dataset_mean(values));
  std::vector<double> xs;
  xs.reserve(values.size());
  for (const auto& v : values) xs.push_back(to_double(v));
  const Interval iv = ci.method == CiMethod::percentile_bootstrap
                          ? bootstrap_ci(xs, ci.level, ci.resamples, ci.seed)
                          : normal_ci(xs, ci.level);
  MetricSummary m;
  m.mean = clamp01(mean);
  m.lower = clamp01(std::min(iv.lower, mean));
  m.upper = clamp01(std::max(iv.upper, mean));
  return m;
}

ReportRow summarize(std::vector<ExampleScores> completed, std::size_t excluded, std::string label,
                    const CiOptions& ci) {
  if (completed.empty()) throw Error(Errc::empty_dataset, "no completed examples for '" + label + "'");
  std::sort(completed.begin(), completed.end(),
            [](const ExampleScores& a, const ExampleScores& b) { return a.example_id < b.example_id; });
  std::vector<Rational> pcs, ncc, ccs_values;
  for (const auto& e : completed) {
    pcs.push_back(e.pcs);
    ncc.push_back(e.ncc);
    ccs_values.push_back(e.ccs);
  }
  ReportRow row;
  row.label = std::move(label);
  row.scores.pcs = summarize_metric(pcs, ci);
  row.scores.ncc = summarize_metric(ncc, ci);
  row.scores.ccs = summarize_metric(ccs_values, ci);
  row.scores.ci = ci;
  row.completed = completed.size();
  row.excluded = excluded;
  return row;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "table") return ReportFormat::table;
  if (name == "csv") return ReportFormat::csv;
  if (name == "records") return ReportFormat::records;
  throw Error(Errc::config_error, "unknown report format '" + std::string(name) + "'");
}

std::string_view report_extension(ReportFormat f) noexcept {
  switch (f) {
    case ReportFormat::table: return "txt";
    case ReportFormat::csv: return "csv";
    case ReportFormat::records: return "jsonl";
  }
  return "txt";
}

std::string format_cell(const MetricSummary& m) {
  return fmt::format("{:.3f}±{:.3f}", m.mean, m.half_width());
}

std::string build_report(std::span<const ReportRow> rows, ReportFormat format) {
  require(!rows.empty(), "report needs at least one row");
  const bool ablation =
      std::all_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.ablation.has_value(); });

  if (format == ReportFormat::table) {
    std::vector<std::vector<std::string>> body;
    std::vector<std::string> header;
    if (ablation) {
      header = {"Concept extraction & judge LLM", "Image Editor", "CCS"};
      for (const auto& r : rows) {
        body.push_back({r.ablation->extractor_judge, r.ablation->editor, format_cell(r.scores.ccs)});
      }
    } else {
      header = {"Model", "PCS", "NCC", "CCS"};
      for (const auto& r : rows) {
        body.push_back({r.label, format_cell(r.scores.pcs), format_cell(r.scores.ncc), format_cell(r.scores.ccs)});
      }
    }
    std::string out = render_table(header, body);
    out += "\n";
    for (const auto& r : rows) {
      const std::string name =
          ablation ? r.ablation->extractor_judge + " / " + r.ablation->editor : r.label;
      out += fmt::format("{}: {} completed, {} excluded; {}\n", name, r.completed, r.excluded,
                         ci_description(r.scores.ci));
    }
    return out;
  }

  if (format == ReportFormat::csv) {
    std::string out;
    auto num = [](double v) { return fmt::format("{}", v); };
    auto metric = [&](const MetricSummary& m) {
      return num(m.mean) + "," + num(m.lower) + "," + num(m.upper);
    };
    auto tail = [&](const ReportRow& r) {
      return fmt::format("{},{},{},{}", r.completed, r.excluded, ci_method_name(r.scores.ci.method),
                         num(r.scores.ci.level));
    };
    if (ablation) {
      out += "extractor_judge,editor,ccs_mean,ccs_lower,ccs_upper,completed,excluded,ci_method,ci_level\n";
      for (const auto& r : rows) {
        out += csv_field(r.ablation->extractor_judge) + "," + csv_field(r.ablation->editor) + "," +
               metric(r.scores.ccs) + "," + tail(r) + "\n";
      }
    } else {
      out += "model,pcs_mean,pcs_lower,pcs_upper,ncc_mean,ncc_lower,ncc_upper,ccs_mean,ccs_lower,ccs_upper,"
             "completed,excluded,ci_method,ci_level\n";
      for (const auto& r : rows) {
        out += csv_field(r.label) + "," + metric(r.scores.pcs) + "," + metric(r.scores.ncc) + "," +
               metric(r.scores.ccs) + "," + tail(r) + "\n";
      }
    }
    return out;
  }

  std::string out;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["model"] = r.label;
    if (r.ablation) {
      j["extractor_judge"] = r.ablation->extractor_judge;
      j["editor"] = r.ablation->editor;
    }
    j["pcs"] = metric_json(r.scores.pcs);
    j["ncc"] = metric_json(r.scores.ncc);
    j["ccs"] = metric_json(r.scores.ccs);
    j["completed"] = r.completed;
    j["excluded"] = r.excluded;
    j["ci"] = ci_json(r.scores.ci);
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace edct
