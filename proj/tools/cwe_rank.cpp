// cwe-rank: lemma-restricted contextual embedding retrieval and evaluation.
//
//   cwe-rank ingest   --corpus raw.jsonl --out dir
//   cwe-rank evaluate --corpus raw.jsonl --store-d d.cwes --store-q q.cwes --out dir
//   cwe-rank query    INSTANCE_ID --corpus ... --store-d ... --store-q ...
//   cwe-rank report   --evaluations dir/evaluations.jsonl --format table

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include "cwe/app.hpp"
#include "cwe/errors.hpp"

namespace {

struct Flags {
  std::string config;
  std::string corpus, store_d, store_q, out, model, corpus_label, allowlist;
  std::vector<std::string> discard;
  std::size_t l_threshold = 0, top_k = 0, min_sense_count = 0, workers = 0, ft_instances = 0, mc_samples = 0;
  double r_threshold = 0;
  std::uint64_t seed = 0;
  bool allow_multiword = false;
};

void add_common(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config, "JSON run config; flags override it");
  cmd.add_option("--corpus", f.corpus, "Interchange corpus (JSON lines)");
  cmd.add_option("--l-threshold", f.l_threshold, "Lemma frequency threshold L (default 500)");
  cmd.add_option("--r-threshold", f.r_threshold, "Proportional sense frequency threshold R (default 0.25)");
  cmd.add_option("--min-sense-count", f.min_sense_count, "Minimum occurrences of a query sense in D (default 5)");
  cmd.add_option("--discard-sense", f.discard, "Glob on sense labels to discard (repeatable)");
  cmd.add_option("--lemma-allowlist", f.allowlist, "File with one allowed lemma per line");
  cmd.add_flag("--allow-multiword", f.allow_multiword, "Keep multi-word targets");
  cmd.add_option("--out", f.out, "Output directory");
  cmd.add_option("--model", f.model, "Model label for reports");
  cmd.add_option("--corpus-label", f.corpus_label, "Corpus label for reports");
  cmd.add_option("--ft-instances", f.ft_instances, "Fine-tuning instance count label");
}

void add_stores(CLI::App& cmd, Flags& f) {
  cmd.add_option("--store-d", f.store_d, "Embedding store for D");
  cmd.add_option("--store-q", f.store_q, "Embedding store for Q");
  cmd.add_option("--top-k", f.top_k, "Ranking depth (default 50)");
  cmd.add_option("--workers", f.workers, "Worker threads");
  cmd.add_option("--seed", f.seed, "Seed for the Monte Carlo baseline check");
  cmd.add_option("--mc-samples", f.mc_samples, "Monte Carlo baseline samples per query (0 = off)");
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cwe::ConfigError("cannot open allowlist " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

cwe::RunConfig resolve(const Flags& f, CLI::App& cmd) {
  cwe::RunConfig c;
  if (!f.config.empty()) c = cwe::load_run_config(f.config);
  // Only flags present on this subcommand and actually given override the file.
  auto given = [&](const char* name) {
    const auto* opt = cmd.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--corpus")) c.corpus_path = f.corpus;
  if (given("--l-threshold")) c.lemma_threshold = f.l_threshold;
  if (given("--r-threshold")) c.sense_threshold = f.r_threshold;
  if (given("--min-sense-count")) c.filter.min_sense_count_in_D = f.min_sense_count;
  if (given("--discard-sense")) c.filter.discard_sense_patterns = f.discard;
  if (given("--lemma-allowlist")) c.filter.lemma_allowlist = read_lines(f.allowlist);
  if (given("--allow-multiword")) c.filter.single_word_targets_only = false;
  if (given("--out")) c.out_dir = f.out;
  if (given("--model")) c.model_label = f.model;
  if (given("--corpus-label")) c.corpus_label = f.corpus_label;
  if (given("--ft-instances")) c.ft_instances = f.ft_instances;
  if (given("--store-d")) c.store_d = f.store_d;
  if (given("--store-q")) c.store_q = f.store_q;
  if (given("--top-k")) c.top_k = f.top_k;
  if (given("--workers")) c.workers = f.workers;
  if (given("--seed")) c.seed = f.seed;
  if (given("--mc-samples")) c.mc_samples = f.mc_samples;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lemma-restricted contextual embedding retrieval and evaluation"};
  app.set_version_flag("--version", std::string(cwe::tool_version()));
  app.require_subcommand(1);

  Flags f;

  auto* ingest = app.add_subcommand("ingest", "Filter a corpus into D and Q");
  add_common(*ingest, f);

  auto* evaluate = app.add_subcommand("evaluate", "Rank every query and write bucketed reports");
  add_common(*evaluate, f);
  add_stores(*evaluate, f);

  std::string query_id;
  auto* query = app.add_subcommand("query", "Show one query's ranking");
  query->add_option("instance_id", query_id, "Query instance id")->required();
  add_common(*query, f);
  add_stores(*query, f);

  std::string evaluations;
  std::vector<std::string> formats{"table"};
  auto* report = app.add_subcommand("report", "Re-bucket a saved evaluations.jsonl");
  report->add_option("--evaluations", evaluations, "evaluations.jsonl from an evaluate run")->required();
  report->add_option("--format", formats, "table, csv or curves (repeatable)");
  add_common(*report, f);
  report->add_option("--top-k", f.top_k, "Ranking depth used by the run (default 50)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (ingest->parsed()) {
      const auto c = resolve(f, *ingest);
      const auto s = cwe::cmd_ingest(c);
      std::cout << "|D| = " << s.database_size << ", |Q| = " << s.query_size << "\n";
      for (const auto& [reason, n] : s.discarded) std::cout << "discarded " << reason << ": " << n << "\n";
      std::cout << "wrote " << (c.out_dir / "D.jsonl").string() << ", " << (c.out_dir / "Q.jsonl").string()
                << ", " << (c.out_dir / "stats.json").string() << "\n";
    } else if (evaluate->parsed()) {
      cwe::cmd_evaluate(resolve(f, *evaluate), std::cout);
    } else if (query->parsed()) {
      cwe::cmd_query(query_id, resolve(f, *query), std::cout);
    } else if (report->parsed()) {
      auto c = resolve(f, *report);
      if (!report->count("--out")) c.out_dir.clear();
      std::vector<cwe::ReportFormat> parsed;
      for (const auto& name : formats) {
        const auto fmt = cwe::parse_report_format(name);
        if (!fmt) throw cwe::ConfigError("unknown report format '" + name + "'");
        parsed.push_back(*fmt);
      }
      cwe::cmd_report(evaluations, c, parsed, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cwe::exit_code_for(e);
  }
  return 0;
}
