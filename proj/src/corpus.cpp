#include "cwe/corpus.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "cwe/errors.hpp"
#include <nlohmann/json.hpp>

namespace cwe {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "dev") return Split::kDev;
  if (text == "test") return Split::kTest;
  return std::nullopt;
}

bool SenseInstance::is_single_word() const {
  if (target_end != target_index + 1) return false;
  return std::none_of(lemma.begin(), lemma.end(),
                      [](unsigned char c) { return std::isspace(c) != 0; });
}

namespace {

template <typename T>
T required(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'", line);
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("field '") + key + "' has the wrong type", line);
  }
}

SenseInstance parse_record(std::string_view text, std::size_t line) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line);
  }
  if (!obj.is_object()) throw ParseError("record is not a JSON object", line);

  SenseInstance inst;
  inst.instance_id = required<std::string>(obj, "instance_id", line);
  inst.sentence_id = required<std::string>(obj, "sentence_id", line);
  const auto split_text = required<std::string>(obj, "split", line);
  const auto split = parse_split(split_text);
  if (!split) throw ParseError("unknown split '" + split_text + "'", line);
  inst.split = *split;
  inst.lemma = required<std::string>(obj, "lemma", line);
  inst.sense = required<std::string>(obj, "sense", line);
  inst.tokens = required<std::vector<std::string>>(obj, "tokens", line);
  const auto index = required<std::int64_t>(obj, "target_index", line);
  if (index < 0 || static_cast<std::size_t>(index) >= inst.tokens.size()) {
    throw ParseError("target_index " + std::to_string(index) + " out of range for " +
                         std::to_string(inst.tokens.size()) + " tokens",
                     line);
  }
  inst.target_index = static_cast<std::size_t>(index);
  inst.target_end = inst.target_index + 1;
  if (auto it = obj.find("target_end"); it != obj.end()) {
    const auto end = required<std::int64_t>(obj, "target_end", line);
    if (end <= index || static_cast<std::size_t>(end) > inst.tokens.size()) {
      throw ParseError("target_end " + std::to_string(end) + " out of range", line);
    }
    inst.target_end = static_cast<std::size_t>(end);
  }
  if (inst.instance_id.empty()) throw ParseError("empty instance_id", line);
  if (inst.lemma.empty()) throw ParseError("empty lemma", line);
  if (inst.sense.empty()) throw ParseError("empty sense", line);
  return inst;
}

}  // namespace

std::vector<SenseInstance> parse_interchange(std::string_view text) {
  std::vector<SenseInstance> out;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; })) {
      continue;
    }
    auto inst = parse_record(line, line_no);
    if (!seen.insert(inst.instance_id).second) {
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate instance_id '" +
                            inst.instance_id + "'");
    }
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<SenseInstance> load_interchange(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_interchange(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_interchange(std::ostream& out, const std::vector<SenseInstance>& instances) {
  for (const auto& inst : instances) {
    nlohmann::ordered_json obj;
    obj["instance_id"] = inst.instance_id;
    obj["sentence_id"] = inst.sentence_id;
    obj["split"] = to_string(inst.split);
    obj["lemma"] = inst.lemma;
    obj["sense"] = inst.sense;
    obj["target_index"] = inst.target_index;
    if (inst.target_end != inst.target_index + 1) obj["target_end"] = inst.target_end;
    obj["tokens"] = inst.tokens;
    out << obj.dump() << '\n';
  }
}

void write_interchange(const std::filesystem::path& path, const std::vector<SenseInstance>& instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_interchange(out, instances);
  if (!out) throw IoError("write failed: " + path.string());
}

void FilterConfig::validate() const {
  if (min_sense_count_in_D < 1) throw ConfigError("min_sense_count_in_D must be >= 1");
}

CorpusStats::CorpusStats(const std::vector<SenseInstance>& database) {
  for (const auto& inst : database) {
    ++lemma_freq_[inst.lemma];
    ++sense_freq_[{inst.lemma, inst.sense}];
  }
}

std::size_t CorpusStats::lemma_freq(std::string_view lemma) const {
  auto it = lemma_freq_.find(lemma);
  return it == lemma_freq_.end() ? 0 : it->second;
}

std::size_t CorpusStats::sense_freq(std::string_view lemma, std::string_view sense) const {
  auto it = sense_freq_.find(SenseKey{lemma, sense});
  return it == sense_freq_.end() ? 0 : it->second;
}

double CorpusStats::proportional_freq(std::string_view lemma, std::string_view sense) const {
  const auto total = lemma_freq(lemma);
  if (total == 0) return 0.0;
  return static_cast<double>(sense_freq(lemma, sense)) / static_cast<double>(total);
}

std::string_view to_string(DiscardReason reason) {
  switch (reason) {
    case DiscardReason::kDiscardedSense: return "discarded_sense";
    case DiscardReason::kNotAllowlisted: return "lemma_not_allowlisted";
    case DiscardReason::kMultiWordTarget: return "multi_word_target";
    case DiscardReason::kRareSenseInDatabase: return "rare_sense_in_database";
  }
  return "?";
}

Splits build_splits(const std::vector<SenseInstance>& instances, const FilterConfig& config) {
  config.validate();

  std::optional<std::unordered_set<std::string_view>> allow;
  if (config.lemma_allowlist) {
    allow.emplace(config.lemma_allowlist->begin(), config.lemma_allowlist->end());
  }

  auto static_reason = [&](const SenseInstance& inst) -> std::optional<DiscardReason> {
    for (const auto& pattern : config.discard_sense_patterns) {
      if (fnmatch(pattern.c_str(), inst.sense.c_str(), 0) == 0) return DiscardReason::kDiscardedSense;
    }
    if (allow && !allow->contains(inst.lemma)) return DiscardReason::kNotAllowlisted;
    if (config.single_word_targets_only && !inst.is_single_word()) return DiscardReason::kMultiWordTarget;
    return std::nullopt;
  };

  Splits out;
  // discarded keeps input order, so stage the rare-sense drops by position.
  std::vector<std::optional<DiscardReason>> reasons(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    reasons[i] = static_reason(inst);
    if (!reasons[i] && inst.split == Split::kTrain) out.database.push_back(inst);
  }
  if (out.database.empty()) throw ConfigError("empty D after filtering");
  out.stats = CorpusStats(out.database);

  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    if (reasons[i]) {
      out.discarded.push_back({inst, *reasons[i]});
      continue;
    }
    if (inst.split == Split::kTrain) continue;
    if (out.stats.sense_freq(inst.lemma, inst.sense) < config.min_sense_count_in_D) {
      out.discarded.push_back({inst, DiscardReason::kRareSenseInDatabase});
      continue;
    }
    out.queries.push_back(inst);
  }
  return out;
}

std::optional<LemmaStats> lemma_stats_for_query(const SenseInstance& query, const CorpusStats& stats) {
  const auto ell = stats.lemma_freq(query.lemma);
  if (ell == 0) return std::nullopt;
  const auto count = stats.sense_freq(query.lemma, query.sense);
  if (count == 0) return std::nullopt;
  return LemmaStats{ell, static_cast<double>(count) / static_cast<double>(ell)};
}

}  // namespace cwe
