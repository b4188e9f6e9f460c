#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cwe/similarity.hpp"

namespace cwe {

// On-disk layout (all integers little-endian); see docs/store_format.md.
inline constexpr char kStoreMagic[8] = {'C', 'W', 'E', 'S', 'T', 'O', 'R', 'E'};
inline constexpr char kIndexMagic[8] = {'C', 'W', 'E', 'I', 'N', 'D', 'E', 'X'};
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::uint32_t kIndexVersion = 1;
inline constexpr std::size_t kMaxDimension = 8192;
inline constexpr std::size_t kStoreHeaderBytes = 24;

struct StoreHeader {
  std::uint32_t version = kStoreVersion;
  std::uint32_t dimension = 0;
  std::uint64_t count = 0;
};

/// One lemma-index entry: a record ordinal and its cached Euclidean norm.
struct IndexEntry {
  std::uint64_t ordinal;
  double norm;
};

std::filesystem::path index_path_for(const std::filesystem::path& store_path);

/// Single-writer streaming builder. Vectors go straight to disk; ids and
/// lemmas are buffered until finish(). A writer destroyed before finish()
/// removes its partial files.
class StoreWriter {
 public:
  StoreWriter(std::filesystem::path path, std::size_t dimension);
  ~StoreWriter();
  StoreWriter(const StoreWriter&) = delete;
  StoreWriter& operator=(const StoreWriter&) = delete;

  /// Throws BuildError on a dimension mismatch, a non-finite component, a
  /// zero-norm vector or a duplicate id. The error names the instance id.
  void add(std::string_view instance_id, std::string_view lemma, std::span<const float> vector);
  void finish();

  std::size_t size() const { return ids_.size(); }

 private:
  struct Impl;
  std::filesystem::path path_;
  std::size_t dimension_;
  std::unique_ptr<Impl> impl_;
  std::vector<std::string> ids_;
  std::vector<std::string> lemmas_;
  std::vector<double> norms_;
  std::unordered_set<std::string> seen_;
  bool finished_ = false;
};

struct StoreRecord {
  std::string instance_id;
  std::string lemma;
  std::vector<float> vector;
};

void build_store(const std::filesystem::path& path, std::span<const StoreRecord> records,
                 std::size_t dimension);

/// Regenerates the lemma-index sidecar from the main store file.
void rebuild_index(const std::filesystem::path& store_path);

/// Read-only, memory-mapped view of a store and its lemma index.
///
/// Opening validates the header, the total file length and the index; vector
/// pages are only touched on access. A handle is immutable and safe to share
/// across threads.
class EmbeddingStore {
 public:
  /// Throws FormatError on bad magic/version and CorruptionError when a file
  /// length or table is inconsistent with its header.
  static EmbeddingStore open(const std::filesystem::path& path);

  EmbeddingStore(EmbeddingStore&&) noexcept;
  EmbeddingStore& operator=(EmbeddingStore&&) noexcept;
  ~EmbeddingStore();

  std::size_t dimension() const { return header_.dimension; }
  std::size_t size() const { return header_.count; }
  const std::filesystem::path& path() const { return path_; }

  VectorMapF vector(std::size_t ordinal) const;
  std::span<const float> raw(std::size_t ordinal) const;
  std::string_view instance_id(std::size_t ordinal) const;
  std::string_view lemma(std::size_t ordinal) const;

  /// Ordinal of the record with this id; binary search over the id table.
  std::optional<std::size_t> find(std::string_view instance_id) const;
  /// Throws ValidationError when the id is unknown.
  VectorMapF get(std::string_view instance_id) const;

  /// Records with this lemma, ascending by instance id. Empty when unknown.
  std::span<const IndexEntry> candidates_for_lemma(std::string_view lemma) const;
  std::vector<std::string_view> lemmas() const;

 private:
  EmbeddingStore() = default;

  struct Mapping;
  std::filesystem::path path_;
  std::unique_ptr<Mapping> map_;
  StoreHeader header_;
  const float* vectors_ = nullptr;
  const std::byte* record_table_ = nullptr;
  const std::byte* sorted_table_ = nullptr;
  const std::byte* blob_ = nullptr;
  std::uint64_t blob_size_ = 0;
  std::map<std::string, std::vector<IndexEntry>, std::less<>> index_;
};

}  // namespace cwe
