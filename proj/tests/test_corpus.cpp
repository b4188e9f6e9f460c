#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>

#include "cwe/corpus.hpp"
#include "cwe/errors.hpp"
#include "support/synthetic.hpp"

namespace cwe {
namespace {

using testing::make_instance;
using testing::TempDir;

TEST(Interchange, ParsesFigureOneQuery) {
  const auto instances = parse_interchange(
      R"({"instance_id":"q1","sentence_id":"s1","split":"test","lemma":"pull","sense":"pull.4",)"
      R"("target_index":2,"tokens":["I","can't","pull","it","off"],"extra":42})"
      "\n");
  ASSERT_EQ(instances.size(), 1u);
  const auto& q = instances[0];
  EXPECT_EQ(q.instance_id, "q1");
  EXPECT_EQ(q.tokens, (std::vector<std::string>{"I", "can't", "pull", "it", "off"}));
  EXPECT_EQ(q.target_index, 2u);
  EXPECT_EQ(q.tokens[q.target_index], "pull");
  EXPECT_EQ(q.lemma, "pull");
  EXPECT_EQ(q.sense, "pull.4");
  EXPECT_EQ(q.split, Split::kTest);
  EXPECT_TRUE(q.is_single_word());
}

TEST(Interchange, EmptyFile) {
  TempDir dir("corpus");
  std::ofstream(dir / "empty.jsonl").close();
  EXPECT_TRUE(load_interchange(dir / "empty.jsonl").empty());
  EXPECT_TRUE(parse_interchange("\n  \n").empty());
}

TEST(Interchange, TargetIndexOutOfRangeReportsLine) {
  const std::string text =
      R"({"instance_id":"a","sentence_id":"s","split":"train","lemma":"x","sense":"x.1","target_index":0,"tokens":["x"]})"
      "\n"
      R"({"instance_id":"b","sentence_id":"s","split":"train","lemma":"x","sense":"x.1","target_index":7,"tokens":["a","b","c","d","e"]})"
      "\n";
  try {
    parse_interchange(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Interchange, MalformedLines) {
  EXPECT_THROW(parse_interchange("{not json}\n"), ParseError);
  EXPECT_THROW(parse_interchange(R"({"instance_id":"a"})"), ParseError);
  EXPECT_THROW(parse_interchange(
                   R"({"instance_id":"a","sentence_id":"s","split":"valid","lemma":"x","sense":"x.1","target_index":0,"tokens":["x"]})"),
               ParseError);
  EXPECT_THROW(parse_interchange(
                   R"({"instance_id":"a","sentence_id":"s","split":"dev","lemma":"","sense":"x.1","target_index":0,"tokens":["x"]})"),
               ParseError);
  EXPECT_THROW(parse_interchange(
                   R"({"instance_id":"a","sentence_id":"s","split":"dev","lemma":"x","sense":"x.1","target_index":"0","tokens":["x"]})"),
               ParseError);
}

TEST(Interchange, DuplicateIdIsValidationError) {
  const std::string line =
      R"({"instance_id":"a","sentence_id":"s","split":"train","lemma":"x","sense":"x.1","target_index":0,"tokens":["x"]})";
  EXPECT_THROW(parse_interchange(line + "\n" + line + "\n"), ValidationError);
}

TEST(Interchange, WriteThenReadPreservesRecords) {
  std::mt19937_64 rng(7);
  std::vector<SenseInstance> in;
  for (int i = 0; i < 50; ++i) {
    auto inst = make_instance("id" + std::to_string(i), "lem\"ma" + std::to_string(i % 3), "s" + std::to_string(rng() % 4),
                              static_cast<Split>(rng() % 3));
    inst.tokens.push_back("café");
    if (i % 7 == 0) inst.target_end = 3;
    in.push_back(inst);
  }
  TempDir dir("corpus");
  write_interchange(dir / "c.jsonl", in);
  EXPECT_EQ(load_interchange(dir / "c.jsonl"), in);
}

std::vector<SenseInstance> repeat(const std::string& prefix, const std::string& lemma, const std::string& sense,
                                  Split split, int n) {
  std::vector<SenseInstance> out;
  for (int i = 0; i < n; ++i) out.push_back(make_instance(prefix + std::to_string(i), lemma, sense, split));
  return out;
}

void append(std::vector<SenseInstance>& to, const std::vector<SenseInstance>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

TEST(BuildSplits, SingleSenseTenTrainTwoTest) {
  auto all = repeat("d", "run", "run.1", Split::kTrain, 10);
  append(all, repeat("q", "run", "run.1", Split::kTest, 2));
  const auto s = build_splits(all, FilterConfig{});
  EXPECT_EQ(s.database.size(), 10u);
  EXPECT_EQ(s.queries.size(), 2u);
  EXPECT_TRUE(s.discarded.empty());
}

TEST(BuildSplits, SenseWithFourDatabaseOccurrencesIsDropped) {
  auto all = repeat("d", "pull", "pull.4", Split::kTrain, 4);
  append(all, repeat("e", "pull", "pull.1", Split::kTrain, 5));
  append(all, repeat("q", "pull", "pull.4", Split::kDev, 1));
  append(all, repeat("r", "pull", "pull.1", Split::kTest, 1));
  const auto s = build_splits(all, FilterConfig{});
  ASSERT_EQ(s.queries.size(), 1u);
  EXPECT_EQ(s.queries[0].sense, "pull.1");
  ASSERT_EQ(s.discarded.size(), 1u);
  EXPECT_EQ(s.discarded[0].reason, DiscardReason::kRareSenseInDatabase);
  // Exactly at the threshold survives.
  append(all, repeat("f", "pull", "pull.4", Split::kTrain, 1));
  EXPECT_EQ(build_splits(all, FilterConfig{}).queries.size(), 2u);
}

TEST(BuildSplits, DiscardPatternsAllowlistAndMultiword) {
  std::vector<SenseInstance> all;
  append(all, repeat("a", "on", "on.1", Split::kTrain, 6));
  append(all, repeat("b", "on", "on.NOTA", Split::kTrain, 6));
  append(all, repeat("c", "zebra", "zebra.1", Split::kTrain, 6));
  append(all, repeat("qa", "on", "on.1", Split::kTest, 2));
  append(all, repeat("qb", "on", "on.NOTA", Split::kTest, 2));
  auto mw = make_instance("mw", "on", "on.1", Split::kTrain);
  mw.target_end = 3;
  all.push_back(mw);

  FilterConfig cfg;
  cfg.discard_sense_patterns = {"*.NOTA"};
  cfg.lemma_allowlist = std::vector<std::string>{"on"};
  const auto s = build_splits(all, cfg);
  EXPECT_EQ(s.database.size(), 6u);
  EXPECT_EQ(s.queries.size(), 2u);
  std::map<DiscardReason, int> reasons;
  for (const auto& d : s.discarded) ++reasons[d.reason];
  EXPECT_EQ(reasons[DiscardReason::kDiscardedSense], 8);
  EXPECT_EQ(reasons[DiscardReason::kNotAllowlisted], 6);
  EXPECT_EQ(reasons[DiscardReason::kMultiWordTarget], 1);
  for (const auto& inst : s.database) EXPECT_NE(inst.sense, "on.NOTA");

  cfg.single_word_targets_only = false;
  EXPECT_EQ(build_splits(all, cfg).database.size(), 7u);
}

TEST(BuildSplits, EmptyDatabaseIsConfigError) {
  EXPECT_THROW(build_splits({}, FilterConfig{}), ConfigError);
  EXPECT_THROW(build_splits(repeat("q", "x", "x.1", Split::kDev, 3), FilterConfig{}), ConfigError);
  FilterConfig bad;
  bad.min_sense_count_in_D = 0;
  EXPECT_THROW(build_splits(repeat("d", "x", "x.1", Split::kTrain, 3), bad), ConfigError);
}

/// Random corpora for the property checks below.
std::vector<SenseInstance> random_corpus(std::mt19937_64& rng, int n) {
  std::vector<SenseInstance> out;
  for (int i = 0; i < n; ++i) {
    const auto lemma = "l" + std::to_string(rng() % 6);
    const auto sense = rng() % 10 == 0 ? lemma + ".none" : lemma + "." + std::to_string(rng() % 4);
    const auto split = rng() % 3 == 0 ? static_cast<Split>(1 + rng() % 2) : Split::kTrain;
    auto inst = make_instance("i" + std::to_string(i), lemma, sense, split);
    if (rng() % 25 == 0) inst.target_end = 3;
    out.push_back(inst);
  }
  return out;
}

TEST(BuildSplitsProperty, InvariantsOnRandomCorpora) {
  std::mt19937_64 rng(42);
  FilterConfig cfg;
  cfg.discard_sense_patterns = {"*.none"};
  for (int trial = 0; trial < 200; ++trial) {
    const auto corpus = random_corpus(rng, 20 + static_cast<int>(rng() % 300));
    cfg.min_sense_count_in_D = 1 + rng() % 8;
    Splits s;
    try {
      s = build_splits(corpus, cfg);
    } catch (const ConfigError&) {
      continue;
    }
    // Partition.
    EXPECT_EQ(s.database.size() + s.queries.size() + s.discarded.size(), corpus.size());

    // Stats against an independent recount.
    std::map<std::string, std::size_t> lemma_count;
    std::map<std::pair<std::string, std::string>, std::size_t> sense_count;
    for (const auto& inst : s.database) {
      ++lemma_count[inst.lemma];
      ++sense_count[{inst.lemma, inst.sense}];
    }
    EXPECT_EQ(s.stats.lemma_freqs().size(), lemma_count.size());
    for (const auto& [lemma, n] : lemma_count) {
      EXPECT_EQ(s.stats.lemma_freq(lemma), n);
      std::size_t sum = 0;
      for (const auto& [key, c] : s.stats.sense_freqs()) {
        if (key.first == lemma) sum += c;
      }
      EXPECT_EQ(sum, n);
    }
    for (const auto& [key, n] : sense_count) {
      EXPECT_EQ(s.stats.sense_freq(key.first, key.second), n);
      EXPECT_EQ(s.stats.proportional_freq(key.first, key.second),
                static_cast<double>(n) / static_cast<double>(lemma_count[key.first]));
    }

    for (const auto& q : s.queries) {
      EXPECT_GE(s.stats.sense_freq(q.lemma, q.sense), cfg.min_sense_count_in_D);
      EXPECT_NE(q.split, Split::kTrain);
    }
    for (const auto& v : {s.database, s.queries}) {
      for (const auto& inst : v) {
        EXPECT_EQ(inst.sense.find(".none"), std::string::npos);
        EXPECT_TRUE(inst.is_single_word());
      }
    }

    // Idempotence.
    auto survivors = s.database;
    survivors.insert(survivors.end(), s.queries.begin(), s.queries.end());
    const auto again = build_splits(survivors, cfg);
    EXPECT_EQ(again.database, s.database);
    EXPECT_EQ(again.queries, s.queries);
    EXPECT_EQ(again.stats, s.stats);
    EXPECT_TRUE(again.discarded.empty());
  }
}

TEST(LemmaStats, FigureOneCounts) {
  std::vector<SenseInstance> db;
  append(db, repeat("p", "pull", "pull.4", Split::kTrain, 5));
  append(db, repeat("o", "pull", "pull.1", Split::kTrain, 73));
  append(db, repeat("n", "on", "on.20", Split::kTrain, 14));
  append(db, repeat("m", "on", "on.2", Split::kTrain, 1714));
  const CorpusStats stats(db);

  const auto pull = lemma_stats_for_query(make_instance("q", "pull", "pull.4", Split::kTest), stats);
  ASSERT_TRUE(pull);
  EXPECT_EQ(pull->lemma_freq, 78u);
  EXPECT_DOUBLE_EQ(pull->proportional_freq, 5.0 / 78.0);
  EXPECT_NEAR(pull->proportional_freq, 0.0641, 5e-5);

  const auto on = lemma_stats_for_query(make_instance("q", "on", "on.20", Split::kTest), stats);
  ASSERT_TRUE(on);
  EXPECT_EQ(on->lemma_freq, 1728u);
  EXPECT_NEAR(on->proportional_freq, 0.0081, 5e-5);
}

TEST(LemmaStats, SingleSenseAndMissingLemma) {
  const CorpusStats stats(repeat("d", "solo", "solo.1", Split::kTrain, 9));
  const auto st = lemma_stats_for_query(make_instance("q", "solo", "solo.1", Split::kTest), stats);
  ASSERT_TRUE(st);
  EXPECT_EQ(st->proportional_freq, 1.0);
  EXPECT_FALSE(lemma_stats_for_query(make_instance("q", "absent", "absent.1", Split::kTest), stats));
  EXPECT_FALSE(lemma_stats_for_query(make_instance("q", "solo", "solo.2", Split::kTest), stats));
}

}  // namespace
}  // namespace cwe
