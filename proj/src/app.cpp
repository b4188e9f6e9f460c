#include "cwe/app.hpp"

#include <fmt/format.h>

#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "cwe/checksum.hpp"
#include "cwe/embedding_store.hpp"
#include "cwe/errors.hpp"
#include "cwe/ranking.hpp"
#include <nlohmann/json.hpp>

namespace cwe {

using nlohmann::ordered_json;

std::string_view tool_version() { return CWE_VERSION; }

void RunConfig::validate() const {
  filter.validate();
  if (top_k == 0) throw ConfigError("top_k must be >= 1");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  if (lemma_threshold == 0) throw ConfigError("lemma threshold must be >= 1");
  if (!(sense_threshold > 0.0) || sense_threshold > 1.0) throw ConfigError("sense threshold must lie in (0, 1]");
  if (mc_samples == 1) throw ConfigError("mc_samples must be 0 or >= 2");
}

std::string RunConfig::effective_corpus_label() const {
  return corpus_label.empty() ? corpus_path.stem().string() : corpus_label;
}

// ---------------------------------------------------------------------------
// Config file

void apply_config_json(RunConfig& c, const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "corpus") c.corpus_path = v.get<std::string>();
      else if (key == "store_d") c.store_d = v.get<std::string>();
      else if (key == "store_q") c.store_q = v.get<std::string>();
      else if (key == "min_sense_count") c.filter.min_sense_count_in_D = v.get<std::size_t>();
      else if (key == "discard_sense_patterns") c.filter.discard_sense_patterns = v.get<std::vector<std::string>>();
      else if (key == "lemma_allowlist") {
        if (v.is_null()) c.filter.lemma_allowlist.reset();
        else c.filter.lemma_allowlist = v.get<std::vector<std::string>>();
      }
      else if (key == "single_word_targets_only") c.filter.single_word_targets_only = v.get<bool>();
      else if (key == "l_threshold") c.lemma_threshold = v.get<std::size_t>();
      else if (key == "r_threshold") c.sense_threshold = v.get<double>();
      else if (key == "top_k") c.top_k = v.get<std::size_t>();
      else if (key == "out") c.out_dir = v.get<std::string>();
      else if (key == "corpus_label") c.corpus_label = v.get<std::string>();
      else if (key == "model") c.model_label = v.get<std::string>();
      else if (key == "ft_instances") c.ft_instances = v.get<std::size_t>();
      else if (key == "workers") c.workers = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "mc_samples") c.mc_samples = v.get<std::size_t>();
      else throw ConfigError("config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  RunConfig c;
  apply_config_json(c, buf.str());
  return c;
}

namespace {

ordered_json config_json(const RunConfig& c) {
  ordered_json j;
  j["corpus"] = c.corpus_path.string();
  j["store_d"] = c.store_d.string();
  j["store_q"] = c.store_q.string();
  j["min_sense_count"] = c.filter.min_sense_count_in_D;
  j["discard_sense_patterns"] = c.filter.discard_sense_patterns;
  j["lemma_allowlist"] = c.filter.lemma_allowlist ? ordered_json(*c.filter.lemma_allowlist) : ordered_json(nullptr);
  j["single_word_targets_only"] = c.filter.single_word_targets_only;
  j["l_threshold"] = c.lemma_threshold;
  j["r_threshold"] = c.sense_threshold;
  j["top_k"] = c.top_k;
  j["out"] = c.out_dir.string();
  j["corpus_label"] = c.effective_corpus_label();
  j["model"] = c.model_label;
  j["ft_instances"] = c.ft_instances;
  j["workers"] = c.workers;
  j["seed"] = c.seed;
  j["mc_samples"] = c.mc_samples;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string id_list(const std::vector<std::string>& ids, std::size_t limit = 20) {
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < limit; ++i) out += (i ? ", " : "") + ids[i];
  if (ids.size() > limit) out += fmt::format(", ... ({} total)", ids.size());
  return out;
}

std::string marked_sentence(const SenseInstance& inst) {
  std::string out;
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    if (i) out += ' ';
    if (i == inst.target_index) out += '[';
    out += inst.tokens[i];
    if (i + 1 == inst.target_end) out += ']';
  }
  return out;
}

struct LoadedRun {
  Splits splits;
  EmbeddingStore store_d;
  EmbeddingStore store_q;
  GoldLabels labels;
};

LoadedRun load_run(const RunConfig& config) {
  if (config.corpus_path.empty()) throw ConfigError("--corpus is required");
  if (config.store_d.empty()) throw ConfigError("--store-d is required");
  if (config.store_q.empty()) throw ConfigError("--store-q is required");
  auto splits = build_splits(load_interchange(config.corpus_path), config.filter);
  auto store_d = EmbeddingStore::open(config.store_d);
  auto store_q = EmbeddingStore::open(config.store_q);
  if (store_d.dimension() != store_q.dimension()) {
    throw ValidationError(fmt::format("store dimensions differ: D has {}, Q has {}", store_d.dimension(),
                                      store_q.dimension()));
  }
  auto labels = GoldLabels::from_database(store_d, splits.database);
  if (!labels.missing_ids().empty()) {
    throw ValidationError("D instances missing from " + config.store_d.string() + ": " +
                          id_list(labels.missing_ids()));
  }
  return {std::move(splits), std::move(store_d), std::move(store_q), std::move(labels)};
}

ordered_json evaluation_json(const QueryEvaluation& ev, const SenseInstance& q, BucketKey key) {
  ordered_json j;
  j["query_id"] = ev.query_id;
  j["lemma"] = q.lemma;
  j["sense"] = q.sense;
  j["bucket"] = bucket_name(key);
  j["ell"] = ev.lemma_freq;
  j["r"] = ev.proportional_freq;
  j["g"] = ev.gold_count;
  j["N"] = ev.candidate_count;
  j["k_eff"] = ev.k_eff;
  j["ap_50"] = ev.ap_50;
  j["recall_50"] = ev.recall_50;
  j["oracle_ap_50"] = ev.oracle_ap_50;
  j["baseline_ap_50"] = ev.baseline_ap_50;
  j["ir_ap_50"] = ev.ir_ap_50;
  j["p_at_k"] = ev.p_at_k;
  return j;
}

}  // namespace

std::string config_to_json(const RunConfig& config) { return config_json(config).dump(2); }

// ---------------------------------------------------------------------------
// ingest

IngestSummary cmd_ingest(const RunConfig& config) {
  config.validate();
  if (config.corpus_path.empty()) throw ConfigError("--corpus is required");
  const auto splits = build_splits(load_interchange(config.corpus_path), config.filter);

  IngestSummary summary;
  summary.database_size = splits.database.size();
  summary.query_size = splits.queries.size();
  for (const auto& d : splits.discarded) ++summary.discarded[std::string(to_string(d.reason))];
  for (const auto& q : splits.queries) {
    const auto st = lemma_stats_for_query(q, splits.stats);
    if (!st) {
      ++summary.unbucketed_queries;
      continue;
    }
    ++summary.bucket_query_counts[assign_bucket(st->lemma_freq, st->proportional_freq, config.lemma_threshold,
                                                config.sense_threshold)
                                      .index()];
  }

  ensure_dir(config.out_dir);
  write_interchange(config.out_dir / "D.jsonl", splits.database);
  write_interchange(config.out_dir / "Q.jsonl", splits.queries);

  ordered_json stats;
  stats["D"] = summary.database_size;
  stats["Q"] = summary.query_size;
  stats["discarded"] = summary.discarded;
  ordered_json buckets;
  for (std::size_t b = 0; b < 4; ++b) buckets[bucket_name(BucketKey::from_index(b))] = summary.bucket_query_counts[b];
  stats["bucket_query_counts"] = buckets;
  stats["l_threshold"] = config.lemma_threshold;
  stats["r_threshold"] = config.sense_threshold;
  stats["lemmas_in_D"] = splits.stats.lemma_freqs().size();
  write_text(config.out_dir / "stats.json", stats.dump(2) + "\n");
  return summary;
}

// ---------------------------------------------------------------------------
// evaluate

EvaluateSummary cmd_evaluate(const RunConfig& config, std::ostream& log) {
  config.validate();
  auto run = load_run(config);
  const auto& queries = run.splits.queries;

  std::vector<std::string> missing;
  std::vector<std::size_t> q_ordinal(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto ord = run.store_q.find(queries[i].instance_id);
    if (!ord) missing.push_back(queries[i].instance_id);
    else q_ordinal[i] = *ord;
  }
  if (!missing.empty()) {
    throw ValidationError("Q instances missing from " + config.store_q.string() + ": " + id_list(missing));
  }

  EvaluateSummary summary;
  std::vector<QueryInput> inputs;
  std::vector<std::size_t> input_of;  // index into queries
  std::vector<LemmaStats> input_stats;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    const auto st = lemma_stats_for_query(q, run.splits.stats);
    if (!st) {
      summary.skipped.push_back({q.instance_id, "lemma or sense absent from D"});
      continue;
    }
    inputs.push_back({q.instance_id, q.lemma, q.sense, run.store_q.raw(q_ordinal[i])});
    input_of.push_back(i);
    input_stats.push_back(*st);
  }
  log << fmt::format("evaluating {} queries against {} database instances ({} workers)\n", inputs.size(),
                     run.splits.database.size(), config.workers);

  const auto outcomes = batch_evaluate(inputs, run.store_d, run.labels, config.top_k, config.workers);

  std::vector<BucketKey> keys;
  std::vector<std::size_t> evaluated_of;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].result) {
      summary.skipped.push_back({std::string(inputs[i].instance_id), outcomes[i].skip_reason});
      continue;
    }
    summary.evaluations.push_back(evaluate_query(*outcomes[i].result, input_stats[i].lemma_freq,
                                                 input_stats[i].proportional_freq, config.top_k));
    keys.push_back(assign_bucket(input_stats[i].lemma_freq, input_stats[i].proportional_freq,
                                 config.lemma_threshold, config.sense_threshold));
    evaluated_of.push_back(input_of[i]);
  }
  // Skips were recorded in two passes; report them in corpus order.
  std::unordered_map<std::string_view, std::size_t> position;
  for (std::size_t i = 0; i < queries.size(); ++i) position.emplace(queries[i].instance_id, i);
  std::stable_sort(summary.skipped.begin(), summary.skipped.end(),
                   [&](const auto& a, const auto& b) { return position[a.query_id] < position[b.query_id]; });

  summary.report = aggregate(summary.evaluations, keys, config.top_k);
  summary.report.corpus_label = config.effective_corpus_label();
  summary.report.model_label = config.model_label;
  summary.report.ft_instances = config.ft_instances;
  summary.report.lemma_threshold = config.lemma_threshold;
  summary.report.sense_threshold = config.sense_threshold;

  ensure_dir(config.out_dir);
  {
    std::ofstream out(config.out_dir / "evaluations.jsonl", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (config.out_dir / "evaluations.jsonl").string());
    for (std::size_t i = 0; i < summary.evaluations.size(); ++i) {
      const auto& ev = summary.evaluations[i];
      auto j = evaluation_json(ev, queries[evaluated_of[i]], keys[i]);
      if (config.mc_samples > 0) {
        // Seeded per query position so the estimate is independent of workers.
        std::mt19937_64 rng(config.seed ^ (0x9E3779B97F4A7C15ull * (evaluated_of[i] + 1)));
        const auto mc = monte_carlo_random_ap_50(ev.gold_count, ev.candidate_count, config.mc_samples, rng,
                                                 config.top_k);
        j["mc_baseline_ap_50"] = mc.mean;
        j["mc_baseline_stderr"] = mc.standard_error;
      }
      out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: evaluations.jsonl");
  }
  emit_report(summary.report, ReportFormat::kCsv, config.out_dir / "report.csv");
  emit_report(summary.report, ReportFormat::kCurves, config.out_dir / "curves.csv");
  emit_report(summary.report, ReportFormat::kTable, config.out_dir / "table.txt");

  ordered_json manifest;
  manifest["tool"] = "cwe-rank";
  manifest["version"] = tool_version();
  manifest["config"] = config_json(config);
  manifest["checksums"] = {
      {"corpus", sha256_file(config.corpus_path)},
      {"store_d", sha256_file(config.store_d)},
      {"store_d_index", sha256_file(index_path_for(config.store_d))},
      {"store_q", sha256_file(config.store_q)},
      {"store_q_index", sha256_file(index_path_for(config.store_q))},
  };
  manifest["counts"] = {{"D", run.splits.database.size()},
                        {"Q", queries.size()},
                        {"evaluated", summary.evaluations.size()},
                        {"skipped", summary.skipped.size()}};
  ordered_json discarded = ordered_json::object();
  for (const auto& d : run.splits.discarded) {
    auto& n = discarded[std::string(to_string(d.reason))];
    n = n.is_null() ? 1 : n.get<std::size_t>() + 1;
  }
  manifest["discarded"] = std::move(discarded);
  auto skipped = ordered_json::array();
  for (const auto& s : summary.skipped) skipped.push_back({{"query_id", s.query_id}, {"reason", s.reason}});
  manifest["skipped"] = std::move(skipped);
  write_text(config.out_dir / "manifest.json", manifest.dump(2) + "\n");

  log << fmt::format("evaluated {} queries, skipped {}\n", summary.evaluations.size(), summary.skipped.size());
  emit_report(summary.report, ReportFormat::kTable, log);
  return summary;
}

// ---------------------------------------------------------------------------
// query

void cmd_query(const std::string& instance_id, const RunConfig& config, std::ostream& out) {
  config.validate();
  auto run = load_run(config);
  const SenseInstance* query = nullptr;
  for (const auto& q : run.splits.queries) {
    if (q.instance_id == instance_id) {
      query = &q;
      break;
    }
  }
  if (!query) throw ValidationError("unknown query instance '" + instance_id + "'");

  std::unordered_map<std::string_view, const SenseInstance*> by_id;
  for (const auto& d : run.splits.database) by_id.emplace(d.instance_id, &d);

  const auto embedding = run.store_q.get(instance_id);
  const QueryInput input{query->instance_id, query->lemma, query->sense,
                         std::span<const float>(embedding.data(), static_cast<std::size_t>(embedding.size()))};
  const auto result = run_query(input, run.store_d, run.labels, config.top_k);

  out << fmt::format("Query {} [{}]: {}\n", query->instance_id, query->sense, marked_sentence(*query));
  out << fmt::format("lemma {}: {} candidates in D, {} with sense {}\n", query->lemma, result.candidate_count,
                     result.gold_count, query->sense);
  for (std::size_t i = 0; i < result.entries.size(); ++i) {
    const auto& e = result.entries[i];
    const auto sense = run.labels.sense(e.ordinal);
    const auto it = by_id.find(e.instance_id);
    const std::string text = it == by_id.end() ? std::string("?") : marked_sentence(*it->second);
    out << fmt::format("{:>4} {} {:<16} {:+.4f}  {}\n", i + 1, e.is_gold ? '+' : 'x', sense, e.similarity, text);
  }
}

// ---------------------------------------------------------------------------
// report

std::vector<QueryEvaluation> load_evaluations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<QueryEvaluation> evals;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      QueryEvaluation ev;
      ev.query_id = j.at("query_id").get<std::string>();
      ev.lemma_freq = j.at("ell").get<std::size_t>();
      ev.proportional_freq = j.at("r").get<double>();
      ev.gold_count = j.at("g").get<std::size_t>();
      ev.candidate_count = j.at("N").get<std::size_t>();
      ev.k_eff = j.at("k_eff").get<std::size_t>();
      ev.ap_50 = j.at("ap_50").get<double>();
      ev.recall_50 = j.at("recall_50").get<double>();
      ev.oracle_ap_50 = j.at("oracle_ap_50").get<double>();
      ev.baseline_ap_50 = j.at("baseline_ap_50").get<double>();
      ev.ir_ap_50 = j.at("ir_ap_50").get<double>();
      ev.p_at_k = j.at("p_at_k").get<std::vector<double>>();
      evals.push_back(std::move(ev));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no);
    }
  }
  return evals;
}

BucketReport cmd_report(const std::filesystem::path& evaluations_path, const RunConfig& config,
                        const std::vector<ReportFormat>& formats, std::ostream& out) {
  config.validate();
  const auto evals = load_evaluations(evaluations_path);
  std::vector<BucketKey> keys;
  keys.reserve(evals.size());
  std::size_t depth = config.top_k;
  for (const auto& ev : evals) {
    keys.push_back(assign_bucket(ev.lemma_freq, ev.proportional_freq, config.lemma_threshold, config.sense_threshold));
  }
  auto report = aggregate(evals, keys, depth);
  report.corpus_label = config.effective_corpus_label();
  report.model_label = config.model_label;
  report.ft_instances = config.ft_instances;
  report.lemma_threshold = config.lemma_threshold;
  report.sense_threshold = config.sense_threshold;

  for (const auto format : formats) {
    if (config.out_dir.empty()) {
      emit_report(report, format, out);
      continue;
    }
    ensure_dir(config.out_dir);
    const char* name = format == ReportFormat::kCsv ? "report.csv"
                       : format == ReportFormat::kCurves ? "curves.csv"
                                                          : "table.txt";
    emit_report(report, format, config.out_dir / name);
  }
  return report;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const DomainError*>(&e)) return 3;
  if (dynamic_cast<const Error*>(&e)) return 2;
  return 3;
}

}  // namespace cwe
