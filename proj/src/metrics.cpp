#include "cwe/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cwe/errors.hpp"

namespace cwe {
namespace {

void check_counts(std::size_t g, std::size_t n) {
  if (n == 0) throw DomainError("candidate count N must be >= 1");
  if (g == 0) throw DomainError("gold count g must be >= 1");
  if (g > n) throw DomainError("gold count g exceeds candidate count N");
}

}  // namespace

std::size_t effective_depth(std::size_t candidate_count, std::size_t depth) {
  return std::min(depth, candidate_count);
}

double precision_at_k(GoldFlags hits, std::size_t k) {
  if (k < 1 || k > hits.size()) throw DomainError("precision_at_k: k out of range");
  const auto gold = std::count_if(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k),
                                  [](std::uint8_t h) { return h != 0; });
  return static_cast<double>(gold) / static_cast<double>(k);
}

std::vector<double> precision_curve(GoldFlags hits, std::size_t candidate_count, std::size_t depth) {
  if (candidate_count == 0) throw DomainError("candidate count N must be >= 1");
  const auto k_eff = effective_depth(candidate_count, depth);
  if (hits.size() < k_eff) throw DomainError("ranking shorter than K_eff");
  std::vector<double> curve(k_eff);
  std::size_t gold = 0;
  for (std::size_t k = 1; k <= k_eff; ++k) {
    gold += hits[k - 1] != 0;
    curve[k - 1] = static_cast<double>(gold) / static_cast<double>(k);
  }
  return curve;
}

double average_precision_50(GoldFlags hits, std::size_t candidate_count, std::size_t depth) {
  const auto curve = precision_curve(hits, candidate_count, depth);
  double sum = 0.0;
  for (double p : curve) sum += p;
  return sum / static_cast<double>(curve.size());
}

double oracle_ap_50(std::size_t gold_count, std::size_t candidate_count, std::size_t depth) {
  check_counts(gold_count, candidate_count);
  const auto k_eff = effective_depth(candidate_count, depth);
  double sum = 0.0;
  for (std::size_t k = 1; k <= k_eff; ++k) {
    sum += static_cast<double>(std::min(gold_count, k)) / static_cast<double>(k);
  }
  return sum / static_cast<double>(k_eff);
}

double expected_random_ap_50(std::size_t gold_count, std::size_t candidate_count) {
  check_counts(gold_count, candidate_count);
  return static_cast<double>(gold_count) / static_cast<double>(candidate_count);
}

double recall_at_50(GoldFlags hits, std::size_t gold_count, std::size_t depth) {
  if (gold_count == 0) throw DomainError("recall_at_50: gold count must be >= 1");
  const auto k = std::min(depth, hits.size());
  const auto gold = std::count_if(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k),
                                  [](std::uint8_t h) { return h != 0; });
  return static_cast<double>(gold) / static_cast<double>(gold_count);
}

double standard_average_precision(GoldFlags hits, std::size_t gold_count, std::size_t depth) {
  if (gold_count == 0) throw DomainError("standard_average_precision: gold count must be >= 1");
  const auto k_max = std::min(depth, hits.size());
  double sum = 0.0;
  std::size_t gold = 0;
  for (std::size_t k = 1; k <= k_max; ++k) {
    if (hits[k - 1] == 0) continue;
    ++gold;
    sum += static_cast<double>(gold) / static_cast<double>(k);
  }
  return sum / static_cast<double>(gold_count);
}

MonteCarloEstimate monte_carlo_random_ap_50(std::size_t gold_count, std::size_t candidate_count,
                                            std::size_t samples, std::mt19937_64& rng, std::size_t depth) {
  check_counts(gold_count, candidate_count);
  if (samples < 2) throw DomainError("monte carlo needs at least 2 samples");
  const auto k_eff = effective_depth(candidate_count, depth);
  std::vector<std::uint8_t> pool(candidate_count, 0);
  std::fill(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(gold_count), 1);

  // Only the first K_eff ranks matter, so a partial Fisher-Yates shuffle
  // draws them from a uniform permutation.
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t gold = 0;
    double ap = 0.0;
    for (std::size_t k = 0; k < k_eff; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, candidate_count - 1);
      std::swap(pool[k], pool[pick(rng)]);
      gold += pool[k];
      ap += static_cast<double>(gold) / static_cast<double>(k + 1);
    }
    ap /= static_cast<double>(k_eff);
    sum += ap;
    sum_sq += ap * ap;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), samples};
}

QueryEvaluation evaluate_query(const RankedResult& result, std::size_t lemma_freq, double proportional_freq,
                               std::size_t depth) {
  const auto flags = result.gold_flags();
  QueryEvaluation ev;
  ev.query_id = result.query_id;
  ev.gold_count = result.gold_count;
  ev.candidate_count = result.candidate_count;
  ev.k_eff = effective_depth(result.candidate_count, depth);
  ev.p_at_k = precision_curve(flags, result.candidate_count, depth);
  ev.ap_50 = average_precision_50(flags, result.candidate_count, depth);
  ev.recall_50 = recall_at_50(std::span(flags).first(ev.k_eff), result.gold_count, depth);
  ev.oracle_ap_50 = oracle_ap_50(result.gold_count, result.candidate_count, depth);
  ev.baseline_ap_50 = expected_random_ap_50(result.gold_count, result.candidate_count);
  ev.ir_ap_50 = standard_average_precision(flags, result.gold_count, depth);
  ev.lemma_freq = lemma_freq;
  ev.proportional_freq = proportional_freq;
  return ev;
}

}  // namespace cwe
