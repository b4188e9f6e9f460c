#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cwe {

enum class Split : std::uint8_t { kTrain, kDev, kTest };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view text);

/// One sense-annotated target token in its sentence.
///
/// The target occupies tokens[target_index, target_end). Single-token targets
/// have target_end == target_index + 1.
struct SenseInstance {
  std::string instance_id;
  std::string sentence_id;
  std::vector<std::string> tokens;
  std::size_t target_index = 0;
  std::size_t target_end = 1;
  std::string lemma;
  std::string sense;
  Split split = Split::kTrain;

  bool is_single_word() const;
  bool operator==(const SenseInstance&) const = default;
};

/// Reads a line-delimited interchange file (one JSON object per line).
/// Blank lines are skipped. Throws ParseError with the 1-based line number on
/// malformed input and ValidationError on a duplicate instance_id.
std::vector<SenseInstance> load_interchange(const std::filesystem::path& path);
std::vector<SenseInstance> parse_interchange(std::string_view text);

void write_interchange(std::ostream& out, const std::vector<SenseInstance>& instances);
void write_interchange(const std::filesystem::path& path,
                       const std::vector<SenseInstance>& instances);

struct FilterConfig {
  std::size_t min_sense_count_in_D = 5;
  /// Glob patterns (fnmatch syntax) matched against the sense label.
  std::vector<std::string> discard_sense_patterns;
  std::optional<std::vector<std::string>> lemma_allowlist;
  bool single_word_targets_only = true;

  void validate() const;
};

/// Lemma and (lemma, sense) frequencies over the database set D.
class CorpusStats {
 public:
  using SenseKey = std::pair<std::string, std::string>;

  CorpusStats() = default;
  explicit CorpusStats(const std::vector<SenseInstance>& database);

  /// ell: occurrences of the lemma in D (0 when absent).
  std::size_t lemma_freq(std::string_view lemma) const;
  std::size_t sense_freq(std::string_view lemma, std::string_view sense) const;
  /// r = sense_freq / lemma_freq. Zero when the lemma is absent.
  double proportional_freq(std::string_view lemma, std::string_view sense) const;

  const std::map<std::string, std::size_t, std::less<>>& lemma_freqs() const { return lemma_freq_; }
  const std::map<SenseKey, std::size_t>& sense_freqs() const { return sense_freq_; }

  bool operator==(const CorpusStats&) const = default;

 private:
  std::map<std::string, std::size_t, std::less<>> lemma_freq_;
  std::map<SenseKey, std::size_t> sense_freq_;
};

enum class DiscardReason : std::uint8_t {
  kDiscardedSense,
  kNotAllowlisted,
  kMultiWordTarget,
  kRareSenseInDatabase,
};

std::string_view to_string(DiscardReason reason);

struct Discarded {
  SenseInstance instance;
  DiscardReason reason;
};

struct Splits {
  std::vector<SenseInstance> database;  // D
  std::vector<SenseInstance> queries;   // Q
  std::vector<Discarded> discarded;
  CorpusStats stats;
};

/// Train instances become D, dev and test instances become Q. Instances whose
/// sense matches a discard pattern, whose lemma is outside the allowlist, or
/// whose target spans several tokens are dropped from both sides. Q instances
/// whose (lemma, sense) occurs fewer than min_sense_count_in_D times in D are
/// dropped. Input order is preserved. Throws ConfigError when D ends up empty.
Splits build_splits(const std::vector<SenseInstance>& instances, const FilterConfig& config);

struct LemmaStats {
  std::size_t lemma_freq;     // ell
  double proportional_freq;   // r
};

/// (ell, r) for a query. nullopt means the query must be skipped: its lemma
/// or its sense never occurs in D.
std::optional<LemmaStats> lemma_stats_for_query(const SenseInstance& query, const CorpusStats& stats);

}  // namespace cwe
