#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cwe/corpus.hpp"
#include "cwe/embedding_store.hpp"

namespace cwe::testing {

/// Per-sense instance counts for one lemma.
struct SyntheticLemma {
  std::string lemma;
  std::vector<std::size_t> train_counts;  // per sense, goes to D
  std::vector<std::size_t> query_counts;  // per sense, split across dev/test
};

/// Sense embeddings are Gaussian clusters: each (lemma, sense) centre has
/// i.i.d. N(0, between_sigma^2) components and members scatter around it with
/// N(0, within_sigma^2). pure_noise replaces every vector by N(0, 1) noise.
struct SyntheticSpec {
  std::vector<SyntheticLemma> lemmas;
  std::size_t dimension = 32;
  double between_sigma = 10.0;
  double within_sigma = 1.0;
  bool pure_noise = false;
  std::uint64_t seed = 1;
};

struct SyntheticPaths {
  std::filesystem::path corpus;
  std::filesystem::path store_d;
  std::filesystem::path store_q;
  std::size_t database_size = 0;
  std::size_t query_size = 0;
};

/// Streams corpus.jsonl, d.cwes and q.cwes into dir.
SyntheticPaths write_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir);

/// 50 lemmas x 4 senses spanning all four (ell, r) buckets.
SyntheticSpec planted_cluster_spec(std::uint64_t seed, bool pure_noise);

/// About 230k D / 50k Q instances at d = 768 with lemma partitions <= 2000.
SyntheticSpec full_scale_spec(std::uint64_t seed);

std::vector<float> gaussian_vector(std::size_t d, std::mt19937_64& rng, double sigma = 1.0);

SenseInstance make_instance(std::string id, std::string lemma, std::string sense, Split split,
                            std::string sentence_id = "s");

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace cwe::testing
