#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cwe/corpus.hpp"
#include "cwe/embedding_store.hpp"

namespace cwe {

inline constexpr std::size_t kDefaultTopK = 50;

struct GoldLabel {
  std::string lemma;
  std::string sense;
};

/// Database sense labels resolved against a store's record ordinals.
///
/// Store records without a label are not part of D and never become
/// candidates. Labels whose id is absent from the store are collected in
/// missing_ids() for the caller to report.
class GoldLabels {
 public:
  /// Throws ValidationError when a label's lemma disagrees with the lemma the
  /// store recorded for the same instance.
  GoldLabels(const EmbeddingStore& store, const std::unordered_map<std::string, GoldLabel>& labels);
  static GoldLabels from_database(const EmbeddingStore& store, const std::vector<SenseInstance>& database);

  static constexpr std::int32_t kUnlabeled = -1;

  /// Interned (lemma, sense) code of a record, or kUnlabeled.
  std::int32_t code(std::size_t ordinal) const { return codes_[ordinal]; }
  /// Code of a (lemma, sense) pair, or kUnlabeled when no record carries it.
  std::int32_t code_for(std::string_view lemma, std::string_view sense) const;
  std::string_view sense(std::size_t ordinal) const;

  const std::vector<std::string>& missing_ids() const { return missing_; }

 private:
  std::vector<std::int32_t> codes_;
  std::vector<GoldLabel> pairs_;
  std::unordered_map<std::string, std::int32_t> pair_code_;
  std::vector<std::string> missing_;
};

struct RankedEntry {
  std::string instance_id;
  std::uint64_t ordinal;
  double similarity;
  bool is_gold;

  bool operator==(const RankedEntry&) const = default;
};

/// Top of one query's ranking. candidate_count (N) and gold_count (g) always
/// describe the full same-lemma candidate set, not just the kept entries.
struct RankedResult {
  std::string query_id;
  std::vector<RankedEntry> entries;
  std::size_t candidate_count = 0;
  std::size_t gold_count = 0;

  std::vector<std::uint8_t> gold_flags() const;
  bool operator==(const RankedResult&) const = default;
};

struct QueryInput {
  std::string_view instance_id;
  std::string_view lemma;
  std::string_view sense;
  std::span<const float> embedding;
};

/// Ranks every labelled same-lemma record by cosine similarity to the query,
/// descending, ties broken by ascending instance id, and keeps the first
/// min(top_k, N).
///
/// Throws NoCandidatesError when the lemma has no labelled candidate or no
/// candidate shares the query's sense, and DomainError on a dimension
/// mismatch, a zero-norm query or top_k == 0.
RankedResult run_query(const QueryInput& query, const EmbeddingStore& store, const GoldLabels& labels,
                       std::size_t top_k = kDefaultTopK);

struct QueryOutcome {
  std::optional<RankedResult> result;
  std::string skip_reason;  // set iff result is empty
};

/// run_query over many queries. Output order matches input order and is
/// identical for any worker count; skipped queries leave a gap with a reason.
std::vector<QueryOutcome> batch_evaluate(std::span<const QueryInput> queries, const EmbeddingStore& store,
                                         const GoldLabels& labels, std::size_t top_k = kDefaultTopK,
                                         std::size_t workers = 1);

}  // namespace cwe
