#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "cwe/bucketing.hpp"
#include "cwe/corpus.hpp"

namespace cwe {

std::string_view tool_version();

/// Everything a batch run depends on. Serialized verbatim into the run
/// manifest, so a manifest's "config" block can be fed back as a config file.
struct RunConfig {
  std::filesystem::path corpus_path;
  std::filesystem::path store_d;
  std::filesystem::path store_q;
  FilterConfig filter;
  std::size_t lemma_threshold = kDefaultLemmaThreshold;
  double sense_threshold = kDefaultSenseThreshold;
  std::size_t top_k = kDefaultTopK;
  std::filesystem::path out_dir = ".";
  std::string corpus_label;  // defaults to the corpus file stem
  std::string model_label = "model";
  std::size_t ft_instances = 0;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  std::size_t mc_samples = 0;  // Monte Carlo baseline check per query; 0 disables

  /// Throws ConfigError on top_k == 0, workers == 0 or bad thresholds.
  void validate() const;
  std::string effective_corpus_label() const;
};

/// Reads a JSON config file. Keys mirror the RunConfig field names; unknown
/// keys are rejected. Throws ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);
void apply_config_json(RunConfig& config, const std::string& json_text);
std::string config_to_json(const RunConfig& config);

struct IngestSummary {
  std::size_t database_size = 0;
  std::size_t query_size = 0;
  std::map<std::string, std::size_t> discarded;  // by reason
  std::array<std::size_t, 4> bucket_query_counts{};
  std::size_t unbucketed_queries = 0;
};

/// Filters the corpus and writes D.jsonl, Q.jsonl and stats.json to out_dir.
IngestSummary cmd_ingest(const RunConfig& config);

struct SkippedQuery {
  std::string query_id;
  std::string reason;
};

struct EvaluateSummary {
  BucketReport report;
  std::vector<QueryEvaluation> evaluations;
  std::vector<SkippedQuery> skipped;
};

/// Full evaluation run. Writes evaluations.jsonl, report.csv, curves.csv,
/// table.txt and manifest.json to out_dir. Throws ValidationError listing the
/// ids when a D or Q instance has no embedding in its store.
EvaluateSummary cmd_evaluate(const RunConfig& config, std::ostream& log);

/// Prints one query's ranking with gold marks and sense labels.
/// Throws ValidationError when the id is not a query instance.
void cmd_query(const std::string& instance_id, const RunConfig& config, std::ostream& out);

/// Re-buckets a saved evaluations.jsonl under config's thresholds and writes
/// the requested formats to out_dir (or to `out` when out_dir is empty).
BucketReport cmd_report(const std::filesystem::path& evaluations_path, const RunConfig& config,
                        const std::vector<ReportFormat>& formats, std::ostream& out);

std::vector<QueryEvaluation> load_evaluations(const std::filesystem::path& path);

/// 1 usage/config, 2 data, 3 internal.
int exit_code_for(const std::exception& e);

}  // namespace cwe
