#include "cwe/bucketing.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>

#include "cwe/errors.hpp"

namespace cwe {

std::size_t BucketKey::index() const {
  return (lemma_band == LemmaBand::kHigh ? 2u : 0u) + (sense_band == SenseBand::kCommon ? 1u : 0u);
}

BucketKey BucketKey::from_index(std::size_t i) {
  return {i >= 2 ? LemmaBand::kHigh : LemmaBand::kLow, i % 2 == 1 ? SenseBand::kCommon : SenseBand::kRare};
}

std::string_view to_string(LemmaBand band) { return band == LemmaBand::kLow ? "low" : "high"; }
std::string_view to_string(SenseBand band) { return band == SenseBand::kRare ? "rare" : "common"; }

std::string bucket_name(BucketKey key) {
  return fmt::format("{}-{}", to_string(key.lemma_band), to_string(key.sense_band));
}

BucketKey assign_bucket(std::size_t lemma_freq, double proportional_freq, std::size_t lemma_threshold,
                        double sense_threshold) {
  if (lemma_freq < 1) throw DomainError("assign_bucket: lemma frequency must be >= 1");
  if (!(proportional_freq > 0.0) || proportional_freq > 1.0) {
    throw DomainError("assign_bucket: proportional frequency must lie in (0, 1]");
  }
  return {lemma_freq < lemma_threshold ? LemmaBand::kLow : LemmaBand::kHigh,
          proportional_freq < sense_threshold ? SenseBand::kRare : SenseBand::kCommon};
}

std::size_t BucketReport::total_queries() const {
  std::size_t n = 0;
  for (const auto& b : buckets) n += b.query_count;
  return n;
}

BucketReport aggregate(std::span<const QueryEvaluation> evals, std::span<const BucketKey> keys, std::size_t depth) {
  if (evals.size() != keys.size()) throw DomainError("aggregate: evaluations and keys differ in length");

  struct Sums {
    double ap = 0, recall = 0, oracle = 0, baseline = 0;
    std::vector<double> p_at_k;
    std::vector<std::size_t> n_at_k;
  };
  std::array<Sums, 4> sums;
  for (auto& s : sums) {
    s.p_at_k.assign(depth, 0.0);
    s.n_at_k.assign(depth, 0);
  }

  BucketReport report;
  report.depth = depth;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const auto& ev = evals[i];
    const auto b = keys[i].index();
    auto& s = sums[b];
    ++report.buckets[b].query_count;
    s.ap += ev.ap_50;
    s.recall += ev.recall_50;
    s.oracle += ev.oracle_ap_50;
    s.baseline += ev.baseline_ap_50;
    const auto k_max = std::min(depth, ev.p_at_k.size());
    for (std::size_t k = 0; k < k_max; ++k) {
      s.p_at_k[k] += ev.p_at_k[k];
      ++s.n_at_k[k];
    }
  }

  for (std::size_t b = 0; b < 4; ++b) {
    auto& out = report.buckets[b];
    const auto& s = sums[b];
    out.queries_at_k = s.n_at_k;
    out.mean_p_at_k.assign(depth, std::nullopt);
    for (std::size_t k = 0; k < depth; ++k) {
      if (s.n_at_k[k] > 0) out.mean_p_at_k[k] = s.p_at_k[k] / static_cast<double>(s.n_at_k[k]);
    }
    if (out.query_count == 0) continue;
    const double n = static_cast<double>(out.query_count);
    out.mean_ap_50 = s.ap / n;
    out.mean_recall_50 = s.recall / n;
    out.mean_oracle_ap_50 = s.oracle / n;
    out.mean_baseline_ap_50 = s.baseline / n;
  }
  return report;
}

std::optional<ReportFormat> parse_report_format(std::string_view text) {
  if (text == "table") return ReportFormat::kTable;
  if (text == "csv") return ReportFormat::kCsv;
  if (text == "curves") return ReportFormat::kCurves;
  return std::nullopt;
}

namespace {

constexpr std::string_view kCsvHeader =
    "corpus,model,ft_instances,lemma_band,sense_band,query_count,map_50,recall_50,baseline_map,oracle_map\n";

std::string full(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

std::string percent(const std::optional<double>& v) {
  return v ? fmt::format("{:.2f}", 100.0 * *v) : std::string("-");
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void csv_rows(const BucketReport& r, std::ostream& out) {
  for (std::size_t b = 0; b < 4; ++b) {
    const auto key = BucketKey::from_index(b);
    const auto& s = r.buckets[b];
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.corpus_label), csv_field(r.model_label),
                       r.ft_instances, to_string(key.lemma_band), to_string(key.sense_band), s.query_count,
                       full(s.mean_ap_50), full(s.mean_recall_50), full(s.mean_baseline_ap_50),
                       full(s.mean_oracle_ap_50));
  }
}

void emit_table(const BucketReport& r, std::ostream& out) {
  const std::string l_lo = fmt::format("l<{}", r.lemma_threshold);
  const std::string l_hi = fmt::format("l>={}", r.lemma_threshold);
  const std::string r_lo = fmt::format("r<{}", r.sense_threshold);
  const std::string r_hi = fmt::format("r>={}", r.sense_threshold);
  out << fmt::format("corpus: {}  model: {}  ft_instances: {}\n", r.corpus_label, r.model_label, r.ft_instances);
  out << fmt::format("{:<24}{:>10}{:>10}{:>10}{:>10}\n", "", l_lo, l_lo, l_hi, l_hi);
  out << fmt::format("{:<24}{:>10}{:>10}{:>10}{:>10}\n", "", r_lo, r_hi, r_lo, r_hi);
  auto row = [&](std::string_view label, auto&& cell) {
    out << fmt::format("{:<24}", label);
    for (const auto& b : r.buckets) out << fmt::format("{:>10}", cell(b));
    out << '\n';
  };
  row("Queries", [](const BucketStats& b) { return std::to_string(b.query_count); });
  row("Baseline", [](const BucketStats& b) { return percent(b.mean_baseline_ap_50); });
  row("Oracle", [](const BucketStats& b) { return percent(b.mean_oracle_ap_50); });
  row(r.model_label, [](const BucketStats& b) { return percent(b.mean_ap_50); });
  row("Recall@" + std::to_string(r.depth), [](const BucketStats& b) { return percent(b.mean_recall_50); });
}

void emit_curves(const BucketReport& r, std::ostream& out) {
  out << "bucket,k,mean_p_at_k,n_queries_at_k\n";
  for (std::size_t b = 0; b < 4; ++b) {
    const auto name = bucket_name(BucketKey::from_index(b));
    const auto& s = r.buckets[b];
    for (std::size_t k = 0; k < r.depth; ++k) {
      out << fmt::format("{},{},{},{}\n", name, k + 1, full(s.mean_p_at_k[k]), s.queries_at_k[k]);
    }
  }
}

}  // namespace

void emit_csv(std::span<const BucketReport> reports, std::ostream& out) {
  out << kCsvHeader;
  for (const auto& r : reports) csv_rows(r, out);
}

void emit_report(const BucketReport& report, ReportFormat format, std::ostream& out) {
  switch (format) {
    case ReportFormat::kTable: emit_table(report, out); break;
    case ReportFormat::kCsv: emit_csv(std::span(&report, 1), out); break;
    case ReportFormat::kCurves: emit_curves(report, out); break;
  }
}

void emit_report(const BucketReport& report, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  emit_report(report, format, out);
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace cwe
