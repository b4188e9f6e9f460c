#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cwe/ranking.hpp"

namespace cwe {

/// Ranking depth of the evaluation.
inline constexpr std::size_t kEvalDepth = 50;

/// Gold flags of a ranking, rank 1 first. Nonzero means gold.
using GoldFlags = std::span<const std::uint8_t>;

/// K_eff = min(depth, N).
std::size_t effective_depth(std::size_t candidate_count, std::size_t depth = kEvalDepth);

/// Gold count among the first k flags, divided by k. Requires 1 <= k <= len.
double precision_at_k(GoldFlags hits, std::size_t k);

/// P@1 .. P@K_eff.
std::vector<double> precision_curve(GoldFlags hits, std::size_t candidate_count, std::size_t depth = kEvalDepth);

/// Mean of P@k over every k = 1..K_eff, gold or not.
///
/// This is not the textbook IR average precision, which averages only at the
/// ranks holding a gold item; see standard_average_precision for that one.
/// Requires N >= 1 and len(hits) >= K_eff.
double average_precision_50(GoldFlags hits, std::size_t candidate_count, std::size_t depth = kEvalDepth);

/// average_precision_50 of the perfect ranking: (1/K) sum_k min(g, k) / k.
double oracle_ap_50(std::size_t gold_count, std::size_t candidate_count, std::size_t depth = kEvalDepth);

/// Expected average_precision_50 under a uniformly random ranking.
/// Every rank holds a gold item with probability g/N, so E[P@k] = g/N for
/// every k and the expectation is exactly g/N.
double expected_random_ap_50(std::size_t gold_count, std::size_t candidate_count);

/// Gold among the first min(depth, len) flags, divided by g. Requires g >= 1.
double recall_at_50(GoldFlags hits, std::size_t gold_count, std::size_t depth = kEvalDepth);

/// Truncated IR average precision: sum of P@k at gold ranks k <= depth,
/// divided by g. Secondary output only.
double standard_average_precision(GoldFlags hits, std::size_t gold_count, std::size_t depth = kEvalDepth);

struct MonteCarloEstimate {
  double mean;
  double standard_error;
  std::size_t samples;
};

/// Samples random rankings of g gold among N candidates and averages their
/// average_precision_50. Validation aid for expected_random_ap_50.
MonteCarloEstimate monte_carlo_random_ap_50(std::size_t gold_count, std::size_t candidate_count,
                                            std::size_t samples, std::mt19937_64& rng,
                                            std::size_t depth = kEvalDepth);

struct QueryEvaluation {
  std::string query_id;
  std::vector<double> p_at_k;  // k = 1..k_eff
  double ap_50 = 0.0;
  double recall_50 = 0.0;
  double oracle_ap_50 = 0.0;
  double baseline_ap_50 = 0.0;
  double ir_ap_50 = 0.0;
  std::size_t gold_count = 0;
  std::size_t candidate_count = 0;
  std::size_t k_eff = 0;
  std::size_t lemma_freq = 0;    // ell
  double proportional_freq = 0;  // r

  bool operator==(const QueryEvaluation&) const = default;
};

/// Throws DomainError when the result holds fewer than K_eff entries.
QueryEvaluation evaluate_query(const RankedResult& result, std::size_t lemma_freq, double proportional_freq,
                               std::size_t depth = kEvalDepth);

}  // namespace cwe
