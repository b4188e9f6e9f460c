#include "cwe/ranking.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "cwe/errors.hpp"

namespace cwe {
namespace {

std::string pair_key(std::string_view lemma, std::string_view sense) {
  std::string key;
  key.reserve(lemma.size() + sense.size() + 1);
  key.append(lemma).push_back('\0');
  key.append(sense);
  return key;
}

/// Labelled same-lemma candidates, in index order (ascending instance id).
struct CandidateSet {
  std::vector<IndexEntry> entries;
  std::vector<std::int32_t> codes;
};

CandidateSet collect_candidates(std::string_view lemma, const EmbeddingStore& store, const GoldLabels& labels) {
  CandidateSet set;
  for (const auto& e : store.candidates_for_lemma(lemma)) {
    const auto code = labels.code(e.ordinal);
    if (code == GoldLabels::kUnlabeled) continue;
    set.entries.push_back(e);
    set.codes.push_back(code);
  }
  return set;
}

struct PreparedQuery {
  VectorMapF vector;
  double norm;
  std::int32_t gold_code;
};

PreparedQuery prepare(const QueryInput& query, const EmbeddingStore& store, const GoldLabels& labels,
                      const CandidateSet& candidates) {
  if (query.embedding.size() != store.dimension()) {
    throw DomainError("query '" + std::string(query.instance_id) + "': embedding dimension " +
                      std::to_string(query.embedding.size()) + " != store dimension " +
                      std::to_string(store.dimension()));
  }
  const VectorMapF q(query.embedding.data(), static_cast<Eigen::Index>(query.embedding.size()));
  const double norm = norm64(q);
  if (!(norm > 0.0)) throw DomainError("query '" + std::string(query.instance_id) + "': zero-norm embedding");
  if (candidates.entries.empty()) {
    throw NoCandidatesError("no candidates for lemma '" + std::string(query.lemma) + "'");
  }
  const auto gold = labels.code_for(query.lemma, query.sense);
  if (gold == GoldLabels::kUnlabeled) {
    throw NoCandidatesError("no gold candidates for sense '" + std::string(query.sense) + "' of lemma '" +
                            std::string(query.lemma) + "'");
  }
  return {q, norm, gold};
}

double similarity(const PreparedQuery& q, const EmbeddingStore& store, const IndexEntry& e) {
  return cosine_from_dot(dot64(q.vector, store.vector(e.ordinal)), q.norm, e.norm);
}

RankedResult rank(const QueryInput& query, const PreparedQuery& q, const EmbeddingStore& store,
                  const CandidateSet& candidates, std::span<const double> sims, std::size_t top_k) {
  const std::size_t n = candidates.entries.size();
  RankedResult result;
  result.query_id = std::string(query.instance_id);
  result.candidate_count = n;
  result.gold_count = static_cast<std::size_t>(
      std::count(candidates.codes.begin(), candidates.codes.end(), q.gold_code));

  // Candidate position doubles as the id tie-break: the index is id-sorted.
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  const std::size_t keep = std::min(top_k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (sims[a] != sims[b]) return sims[a] > sims[b];
                      return a < b;
                    });
  result.entries.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    const auto c = order[i];
    const auto ordinal = candidates.entries[c].ordinal;
    result.entries.push_back(
        {std::string(store.instance_id(ordinal)), ordinal, sims[c], candidates.codes[c] == q.gold_code});
  }
  return result;
}

}  // namespace

GoldLabels::GoldLabels(const EmbeddingStore& store, const std::unordered_map<std::string, GoldLabel>& labels)
    : codes_(store.size(), kUnlabeled) {
  // Walk labels in id order so codes and missing_ids are deterministic.
  std::vector<const std::pair<const std::string, GoldLabel>*> sorted;
  sorted.reserve(labels.size());
  for (const auto& kv : labels) sorted.push_back(&kv);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });

  for (const auto* kv : sorted) {
    const auto& [id, label] = *kv;
    const auto ordinal = store.find(id);
    if (!ordinal) {
      missing_.push_back(id);
      continue;
    }
    if (store.lemma(*ordinal) != label.lemma) {
      throw ValidationError("instance '" + id + "': lemma '" + label.lemma + "' disagrees with store lemma '" +
                            std::string(store.lemma(*ordinal)) + "'");
    }
    auto [it, inserted] = pair_code_.try_emplace(pair_key(label.lemma, label.sense),
                                                 static_cast<std::int32_t>(pairs_.size()));
    if (inserted) pairs_.push_back(label);
    codes_[*ordinal] = it->second;
  }
}

GoldLabels GoldLabels::from_database(const EmbeddingStore& store, const std::vector<SenseInstance>& database) {
  std::unordered_map<std::string, GoldLabel> labels;
  labels.reserve(database.size());
  for (const auto& inst : database) labels.emplace(inst.instance_id, GoldLabel{inst.lemma, inst.sense});
  return GoldLabels(store, labels);
}

std::int32_t GoldLabels::code_for(std::string_view lemma, std::string_view sense) const {
  auto it = pair_code_.find(pair_key(lemma, sense));
  return it == pair_code_.end() ? kUnlabeled : it->second;
}

std::string_view GoldLabels::sense(std::size_t ordinal) const {
  const auto c = codes_.at(ordinal);
  return c == kUnlabeled ? std::string_view{} : std::string_view(pairs_[static_cast<std::size_t>(c)].sense);
}

std::vector<std::uint8_t> RankedResult::gold_flags() const {
  std::vector<std::uint8_t> flags;
  flags.reserve(entries.size());
  for (const auto& e : entries) flags.push_back(e.is_gold ? 1 : 0);
  return flags;
}

RankedResult run_query(const QueryInput& query, const EmbeddingStore& store, const GoldLabels& labels,
                       std::size_t top_k) {
  if (top_k == 0) throw DomainError("top_k must be >= 1");
  const auto candidates = collect_candidates(query.lemma, store, labels);
  const auto q = prepare(query, store, labels, candidates);
  std::vector<double> sims(candidates.entries.size());
  for (std::size_t i = 0; i < sims.size(); ++i) sims[i] = similarity(q, store, candidates.entries[i]);
  return rank(query, q, store, candidates, sims, top_k);
}

std::vector<QueryOutcome> batch_evaluate(std::span<const QueryInput> queries, const EmbeddingStore& store,
                                         const GoldLabels& labels, std::size_t top_k, std::size_t workers) {
  if (top_k == 0) throw DomainError("top_k must be >= 1");
  workers = std::max<std::size_t>(1, workers);

  // Work units are runs of same-lemma queries so a candidate tile is reused
  // across several queries while it is cache-resident.
  constexpr std::size_t kQueriesPerUnit = 16;
  constexpr std::size_t kTile = 64;
  std::map<std::string_view, std::vector<std::size_t>> by_lemma;
  for (std::size_t i = 0; i < queries.size(); ++i) by_lemma[queries[i].lemma].push_back(i);

  struct Unit {
    std::string_view lemma;
    std::span<const std::size_t> members;
  };
  std::vector<Unit> units;
  for (const auto& [lemma, members] : by_lemma) {
    for (std::size_t off = 0; off < members.size(); off += kQueriesPerUnit) {
      const auto n = std::min(kQueriesPerUnit, members.size() - off);
      units.push_back({lemma, std::span<const std::size_t>(members).subspan(off, n)});
    }
  }

  std::vector<QueryOutcome> out(queries.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto process = [&](const Unit& unit) {
    const auto candidates = collect_candidates(unit.lemma, store, labels);
    std::vector<std::size_t> live;
    std::vector<PreparedQuery> prepared;
    for (auto qi : unit.members) {
      try {
        prepared.push_back(prepare(queries[qi], store, labels, candidates));
        live.push_back(qi);
      } catch (const NoCandidatesError& e) {
        out[qi].skip_reason = e.what();
      }
    }
    const std::size_t n = candidates.entries.size();
    std::vector<std::vector<double>> sims(live.size(), std::vector<double>(n));
    for (std::size_t t0 = 0; t0 < n; t0 += kTile) {
      const std::size_t t1 = std::min(n, t0 + kTile);
      for (std::size_t j = 0; j < live.size(); ++j) {
        for (std::size_t c = t0; c < t1; ++c) sims[j][c] = similarity(prepared[j], store, candidates.entries[c]);
      }
    }
    for (std::size_t j = 0; j < live.size(); ++j) {
      out[live[j]].result = rank(queries[live[j]], prepared[j], store, candidates, sims[j], top_k);
    }
  };

  auto worker = [&] {
    for (;;) {
      const auto u = next.fetch_add(1);
      if (u >= units.size()) return;
      try {
        process(units[u]);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(units.size());
        return;
      }
    }
  };

  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace cwe
