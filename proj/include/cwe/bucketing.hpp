#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cwe/metrics.hpp"

namespace cwe {

inline constexpr std::size_t kDefaultLemmaThreshold = 500;
inline constexpr double kDefaultSenseThreshold = 0.25;

enum class LemmaBand : std::uint8_t { kLow, kHigh };
enum class SenseBand : std::uint8_t { kRare, kCommon };

struct BucketKey {
  LemmaBand lemma_band;
  SenseBand sense_band;

  /// 0..3 in table column order: low/rare, low/common, high/rare, high/common.
  std::size_t index() const;
  static BucketKey from_index(std::size_t i);
  bool operator==(const BucketKey&) const = default;
};

std::string_view to_string(LemmaBand band);
std::string_view to_string(SenseBand band);
/// "low-rare", "high-common", ...
std::string bucket_name(BucketKey key);

/// low iff ell < lemma_threshold; rare iff r < sense_threshold.
/// Throws DomainError unless ell >= 1 and 0 < r <= 1.
BucketKey assign_bucket(std::size_t lemma_freq, double proportional_freq,
                        std::size_t lemma_threshold = kDefaultLemmaThreshold,
                        double sense_threshold = kDefaultSenseThreshold);

struct BucketStats {
  std::size_t query_count = 0;
  // Empty when query_count == 0.
  std::optional<double> mean_ap_50;
  std::optional<double> mean_recall_50;
  std::optional<double> mean_oracle_ap_50;
  std::optional<double> mean_baseline_ap_50;
  /// Pointwise mean P@k for k = 1..depth; entry k-1 averages the
  /// queries_at_k[k-1] queries whose K_eff >= k.
  std::vector<std::optional<double>> mean_p_at_k;
  std::vector<std::size_t> queries_at_k;
};

struct BucketReport {
  std::string corpus_label;
  std::string model_label;
  std::size_t ft_instances = 0;
  std::size_t depth = kEvalDepth;
  std::size_t lemma_threshold = kDefaultLemmaThreshold;
  double sense_threshold = kDefaultSenseThreshold;
  std::array<BucketStats, 4> buckets;

  std::size_t total_queries() const;
  const BucketStats& at(BucketKey key) const { return buckets[key.index()]; }
};

/// Per-bucket arithmetic means, accumulated in input order.
/// Throws DomainError when evals and keys differ in length.
BucketReport aggregate(std::span<const QueryEvaluation> evals, std::span<const BucketKey> keys,
                       std::size_t depth = kEvalDepth);

enum class ReportFormat : std::uint8_t { kTable, kCsv, kCurves };

std::optional<ReportFormat> parse_report_format(std::string_view text);

/// table: bucket grid in percent with two decimals.
/// csv:   corpus,model,ft_instances,lemma_band,sense_band,query_count,
///        map_50,recall_50,baseline_map,oracle_map at full precision.
/// curves: bucket,k,mean_p_at_k,n_queries_at_k for k = 1..depth.
void emit_report(const BucketReport& report, ReportFormat format, std::ostream& out);
/// Throws IoError when the path cannot be written.
void emit_report(const BucketReport& report, ReportFormat format, const std::filesystem::path& path);

/// CSV for several reports (e.g. one per model) under a single header.
void emit_csv(std::span<const BucketReport> reports, std::ostream& out);

}  // namespace cwe
