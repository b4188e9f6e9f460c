#include "cwe/embedding_store.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "cwe/errors.hpp"

static_assert(std::endian::native == std::endian::little, "store format assumes a little-endian host");

namespace cwe {
namespace {

constexpr std::size_t kRecordEntryBytes = 24;  // u64 id_off, u64 lemma_off, u32 id_len, u32 lemma_len

template <typename T>
T load(const std::byte* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

void write_all(std::ofstream& out, const void* data, std::size_t n, const std::filesystem::path& path) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  std::string data(static_cast<std::size_t>(in.tellg()), '\0');
  in.seekg(0);
  in.read(data.data(), static_cast<std::streamsize>(data.size()));
  if (!in) throw IoError("read failed: " + path.string());
  return data;
}

/// Serializes the lemma index. Entries per lemma are ordered by instance id.
void write_index(const std::filesystem::path& store_path, std::span<const std::string_view> ids,
                 std::span<const std::string_view> lemmas, std::span<const double> norms) {
  std::map<std::string_view, std::vector<std::uint64_t>> by_lemma;
  for (std::size_t i = 0; i < ids.size(); ++i) by_lemma[lemmas[i]].push_back(i);

  std::string buf;
  buf.append(kIndexMagic, sizeof(kIndexMagic));
  put<std::uint32_t>(buf, kIndexVersion);
  put<std::uint32_t>(buf, 0);
  put<std::uint64_t>(buf, ids.size());
  put<std::uint64_t>(buf, by_lemma.size());
  for (auto& [lemma, ordinals] : by_lemma) {
    std::sort(ordinals.begin(), ordinals.end(),
              [&](std::uint64_t a, std::uint64_t b) { return ids[a] < ids[b]; });
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(lemma.size()));
    buf.append(lemma);
    put<std::uint64_t>(buf, ordinals.size());
    for (auto ord : ordinals) {
      put<std::uint64_t>(buf, ord);
      put<double>(buf, norms[ord]);
    }
  }
  const auto path = index_path_for(store_path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_all(out, buf.data(), buf.size(), path);
}

}  // namespace

std::filesystem::path index_path_for(const std::filesystem::path& store_path) {
  auto p = store_path;
  p += ".idx";
  return p;
}

// ---------------------------------------------------------------------------
// StoreWriter

struct StoreWriter::Impl {
  std::ofstream out;
};

StoreWriter::StoreWriter(std::filesystem::path path, std::size_t dimension)
    : path_(std::move(path)), dimension_(dimension), impl_(std::make_unique<Impl>()) {
  if (dimension_ < 1 || dimension_ > kMaxDimension) {
    throw BuildError("dimension " + std::to_string(dimension_) + " outside [1, " +
                     std::to_string(kMaxDimension) + "]");
  }
  impl_->out.open(path_, std::ios::binary | std::ios::trunc);
  if (!impl_->out) throw IoError("cannot write " + path_.string());
  std::string header;
  header.append(kStoreMagic, sizeof(kStoreMagic));
  put<std::uint32_t>(header, kStoreVersion);
  put<std::uint32_t>(header, static_cast<std::uint32_t>(dimension_));
  put<std::uint64_t>(header, 0);  // patched by finish()
  write_all(impl_->out, header.data(), header.size(), path_);
}

StoreWriter::~StoreWriter() {
  if (!finished_) {
    impl_->out.close();
    std::error_code ec;
    std::filesystem::remove(path_, ec);
    std::filesystem::remove(index_path_for(path_), ec);
  }
}

void StoreWriter::add(std::string_view instance_id, std::string_view lemma, std::span<const float> vector) {
  const std::string id(instance_id);
  if (finished_) throw BuildError("store already finished");
  if (vector.size() != dimension_) {
    throw BuildError("instance '" + id + "': dimension " + std::to_string(vector.size()) +
                     " != store dimension " + std::to_string(dimension_));
  }
  if (!std::all_of(vector.begin(), vector.end(), [](float x) { return std::isfinite(x); })) {
    throw BuildError("instance '" + id + "': non-finite component");
  }
  const VectorMapF v(vector.data(), static_cast<Eigen::Index>(vector.size()));
  const double norm = norm64(v);
  if (!(norm > 0.0)) throw BuildError("instance '" + id + "': zero-norm vector");
  if (id.empty()) throw BuildError("empty instance id");
  if (lemma.empty()) throw BuildError("instance '" + id + "': empty lemma");
  if (!seen_.insert(id).second) throw BuildError("instance '" + id + "': duplicate instance id");

  write_all(impl_->out, vector.data(), vector.size_bytes(), path_);
  ids_.push_back(id);
  lemmas_.emplace_back(lemma);
  norms_.push_back(norm);
}

void StoreWriter::finish() {
  if (finished_) return;
  const std::uint64_t count = ids_.size();

  // String blob: ids in record order, then each distinct lemma once.
  std::string blob;
  std::vector<std::uint64_t> id_off(count), lemma_off(count);
  for (std::size_t i = 0; i < count; ++i) {
    id_off[i] = blob.size();
    blob += ids_[i];
  }
  std::map<std::string_view, std::uint64_t> lemma_at;
  for (std::size_t i = 0; i < count; ++i) {
    auto [it, inserted] = lemma_at.try_emplace(lemmas_[i], blob.size());
    if (inserted) blob += lemmas_[i];
    lemma_off[i] = it->second;
  }

  std::vector<std::uint64_t> sorted(count);
  std::iota(sorted.begin(), sorted.end(), 0);
  std::sort(sorted.begin(), sorted.end(), [&](auto a, auto b) { return ids_[a] < ids_[b]; });

  std::string tables;
  tables.reserve(8 + count * (kRecordEntryBytes + 8));
  put<std::uint64_t>(tables, blob.size());
  for (std::size_t i = 0; i < count; ++i) {
    put<std::uint64_t>(tables, id_off[i]);
    put<std::uint64_t>(tables, lemma_off[i]);
    put<std::uint32_t>(tables, static_cast<std::uint32_t>(ids_[i].size()));
    put<std::uint32_t>(tables, static_cast<std::uint32_t>(lemmas_[i].size()));
  }
  for (auto ord : sorted) put<std::uint64_t>(tables, ord);

  auto& out = impl_->out;
  write_all(out, tables.data(), tables.size(), path_);
  write_all(out, blob.data(), blob.size(), path_);
  out.seekp(16);
  write_all(out, &count, sizeof(count), path_);
  out.close();
  if (!out) throw IoError("write failed: " + path_.string());

  std::vector<std::string_view> ids(ids_.begin(), ids_.end());
  std::vector<std::string_view> lemmas(lemmas_.begin(), lemmas_.end());
  write_index(path_, ids, lemmas, norms_);
  finished_ = true;
}

void build_store(const std::filesystem::path& path, std::span<const StoreRecord> records,
                 std::size_t dimension) {
  StoreWriter writer(path, dimension);
  for (const auto& r : records) writer.add(r.instance_id, r.lemma, r.vector);
  writer.finish();
}

// ---------------------------------------------------------------------------
// EmbeddingStore

struct EmbeddingStore::Mapping {
  void* addr = MAP_FAILED;
  std::size_t length = 0;

  ~Mapping() {
    if (addr != MAP_FAILED) munmap(addr, length);
  }
  const std::byte* data() const { return static_cast<const std::byte*>(addr); }
};

EmbeddingStore::EmbeddingStore(EmbeddingStore&&) noexcept = default;
EmbeddingStore& EmbeddingStore::operator=(EmbeddingStore&&) noexcept = default;
EmbeddingStore::~EmbeddingStore() = default;

EmbeddingStore EmbeddingStore::open(const std::filesystem::path& path) {
  EmbeddingStore store;
  store.path_ = path;
  store.map_ = std::make_unique<Mapping>();

  const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) throw IoError("cannot open store " + path.string());
  struct stat st {};
  if (fstat(fd, &st) != 0) {
    ::close(fd);
    throw IoError("cannot stat store " + path.string());
  }
  const auto length = static_cast<std::uint64_t>(st.st_size);
  if (length < kStoreHeaderBytes) {
    char magic[sizeof(kStoreMagic)] = {};
    const bool has_magic = length >= sizeof(magic) && ::pread(fd, magic, sizeof(magic), 0) == sizeof(magic);
    ::close(fd);
    if (has_magic && std::memcmp(magic, kStoreMagic, sizeof(magic)) != 0) {
      throw FormatError(path.string() + ": bad magic");
    }
    throw CorruptionError(path.string() + ": file shorter than header");
  }
  store.map_->addr = mmap(nullptr, length, PROT_READ, MAP_SHARED, fd, 0);
  ::close(fd);
  if (store.map_->addr == MAP_FAILED) throw IoError("mmap failed for " + path.string());
  store.map_->length = length;
  const std::byte* base = store.map_->data();

  if (std::memcmp(base, kStoreMagic, sizeof(kStoreMagic)) != 0) {
    throw FormatError(path.string() + ": bad magic");
  }
  store.header_.version = load<std::uint32_t>(base + 8);
  store.header_.dimension = load<std::uint32_t>(base + 12);
  store.header_.count = load<std::uint64_t>(base + 16);
  if (store.header_.version != kStoreVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(store.header_.version));
  }
  const std::uint64_t d = store.header_.dimension;
  const std::uint64_t count = store.header_.count;
  if (d < 1 || d > kMaxDimension) {
    throw CorruptionError(path.string() + ": dimension " + std::to_string(d) + " out of range");
  }
  // Guard the size arithmetic below against absurd counts.
  if (count > length / (d * sizeof(float))) {
    throw CorruptionError(path.string() + ": file length inconsistent with header count*dimension");
  }
  const std::uint64_t vec_end = kStoreHeaderBytes + count * d * sizeof(float);
  if (length < vec_end + 8) {
    throw CorruptionError(path.string() + ": file length inconsistent with header count*dimension");
  }
  store.blob_size_ = load<std::uint64_t>(base + vec_end);
  const std::uint64_t tables_end = vec_end + 8 + count * (kRecordEntryBytes + 8);
  if (tables_end > length || length - tables_end != store.blob_size_) {
    throw CorruptionError(path.string() + ": file length " + std::to_string(length) +
                          " inconsistent with header count " + std::to_string(count));
  }
  store.vectors_ = reinterpret_cast<const float*>(base + kStoreHeaderBytes);
  store.record_table_ = base + vec_end + 8;
  store.sorted_table_ = store.record_table_ + count * kRecordEntryBytes;
  store.blob_ = base + tables_end;

  // Lemma index sidecar.
  const auto idx_path = index_path_for(path);
  const std::string idx = read_file(idx_path);
  const auto* p = reinterpret_cast<const std::byte*>(idx.data());
  const std::size_t n = idx.size();
  std::size_t pos = 0;
  auto need = [&](std::size_t bytes) {
    if (n - pos < bytes) throw CorruptionError(idx_path.string() + ": truncated index");
  };
  need(32);
  if (std::memcmp(p, kIndexMagic, sizeof(kIndexMagic)) != 0) {
    throw FormatError(idx_path.string() + ": bad magic");
  }
  if (load<std::uint32_t>(p + 8) != kIndexVersion) {
    throw FormatError(idx_path.string() + ": unsupported version");
  }
  if (load<std::uint64_t>(p + 16) != count) {
    throw CorruptionError(idx_path.string() + ": record count does not match store");
  }
  const auto lemma_count = load<std::uint64_t>(p + 24);
  pos = 32;
  std::vector<std::uint8_t> covered(count, 0);
  for (std::uint64_t l = 0; l < lemma_count; ++l) {
    need(4);
    const auto len = load<std::uint32_t>(p + pos);
    pos += 4;
    need(len);
    std::string lemma(idx.data() + pos, len);
    pos += len;
    need(8);
    const auto entries = load<std::uint64_t>(p + pos);
    pos += 8;
    if (entries > (n - pos) / 16) throw CorruptionError(idx_path.string() + ": truncated index");
    std::vector<IndexEntry> list(entries);
    for (auto& e : list) {
      e.ordinal = load<std::uint64_t>(p + pos);
      e.norm = load<double>(p + pos + 8);
      pos += 16;
      if (e.ordinal >= count || covered[e.ordinal]++ != 0) {
        throw CorruptionError(idx_path.string() + ": bad or repeated record ordinal");
      }
      if (store.lemma(e.ordinal) != lemma) {
        throw CorruptionError(idx_path.string() + ": lemma of record " + std::to_string(e.ordinal) +
                              " disagrees with store");
      }
    }
    store.index_.emplace(std::move(lemma), std::move(list));
  }
  if (pos != n) throw CorruptionError(idx_path.string() + ": trailing bytes");
  if (std::find(covered.begin(), covered.end(), 0) != covered.end()) {
    throw CorruptionError(idx_path.string() + ": records missing from index");
  }
  return store;
}

std::span<const float> EmbeddingStore::raw(std::size_t ordinal) const {
  if (ordinal >= header_.count) throw DomainError("record ordinal out of range");
  return {vectors_ + ordinal * header_.dimension, header_.dimension};
}

VectorMapF EmbeddingStore::vector(std::size_t ordinal) const {
  const auto r = raw(ordinal);
  return VectorMapF(r.data(), static_cast<Eigen::Index>(r.size()));
}

std::string_view EmbeddingStore::instance_id(std::size_t ordinal) const {
  if (ordinal >= header_.count) throw DomainError("record ordinal out of range");
  const std::byte* e = record_table_ + ordinal * kRecordEntryBytes;
  const auto off = load<std::uint64_t>(e);
  const auto len = load<std::uint32_t>(e + 16);
  if (off > blob_size_ || len > blob_size_ - off) throw CorruptionError("string table offset out of range");
  return {reinterpret_cast<const char*>(blob_ + off), len};
}

std::string_view EmbeddingStore::lemma(std::size_t ordinal) const {
  if (ordinal >= header_.count) throw DomainError("record ordinal out of range");
  const std::byte* e = record_table_ + ordinal * kRecordEntryBytes;
  const auto off = load<std::uint64_t>(e + 8);
  const auto len = load<std::uint32_t>(e + 20);
  if (off > blob_size_ || len > blob_size_ - off) throw CorruptionError("string table offset out of range");
  return {reinterpret_cast<const char*>(blob_ + off), len};
}

std::optional<std::size_t> EmbeddingStore::find(std::string_view id) const {
  std::size_t lo = 0, hi = header_.count;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    const auto ord = load<std::uint64_t>(sorted_table_ + mid * 8);
    if (ord >= header_.count) throw CorruptionError("sorted id table entry out of range");
    const auto cmp = instance_id(ord).compare(id);
    if (cmp == 0) return ord;
    if (cmp < 0) lo = mid + 1;
    else hi = mid;
  }
  return std::nullopt;
}

VectorMapF EmbeddingStore::get(std::string_view id) const {
  const auto ord = find(id);
  if (!ord) throw ValidationError("instance '" + std::string(id) + "' not in store " + path_.string());
  return vector(*ord);
}

std::span<const IndexEntry> EmbeddingStore::candidates_for_lemma(std::string_view lemma) const {
  auto it = index_.find(lemma);
  if (it == index_.end()) return {};
  return it->second;
}

std::vector<std::string_view> EmbeddingStore::lemmas() const {
  std::vector<std::string_view> out;
  out.reserve(index_.size());
  for (const auto& [lemma, entries] : index_) out.emplace_back(lemma);
  return out;
}

void rebuild_index(const std::filesystem::path& store_path) {
  const std::string data = read_file(store_path);
  const auto* base = reinterpret_cast<const std::byte*>(data.data());
  if (data.size() < kStoreHeaderBytes || std::memcmp(base, kStoreMagic, 8) != 0) {
    throw FormatError(store_path.string() + ": bad magic");
  }
  if (load<std::uint32_t>(base + 8) != kStoreVersion) throw FormatError(store_path.string() + ": unsupported version");
  const std::uint64_t d = load<std::uint32_t>(base + 12);
  const std::uint64_t count = load<std::uint64_t>(base + 16);
  if (d < 1 || d > kMaxDimension || count > data.size() / (d * sizeof(float))) {
    throw CorruptionError(store_path.string() + ": inconsistent header");
  }
  const std::uint64_t vec_end = kStoreHeaderBytes + count * d * sizeof(float);
  if (data.size() < vec_end + 8 + count * (kRecordEntryBytes + 8)) {
    throw CorruptionError(store_path.string() + ": truncated");
  }
  const std::byte* table = base + vec_end + 8;
  const std::uint64_t blob_size = load<std::uint64_t>(base + vec_end);
  const std::byte* blob = table + count * (kRecordEntryBytes + 8);
  if (static_cast<std::uint64_t>(base + data.size() - blob) != blob_size) {
    throw CorruptionError(store_path.string() + ": truncated");
  }
  auto str = [&](std::uint64_t off, std::uint32_t len) {
    if (off > blob_size || len > blob_size - off) throw CorruptionError("string table offset out of range");
    return std::string_view(reinterpret_cast<const char*>(blob + off), len);
  };

  std::vector<std::string_view> ids(count), lemmas(count);
  std::vector<double> norms(count);
  std::vector<float> buf(d);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::byte* e = table + i * kRecordEntryBytes;
    ids[i] = str(load<std::uint64_t>(e), load<std::uint32_t>(e + 16));
    lemmas[i] = str(load<std::uint64_t>(e + 8), load<std::uint32_t>(e + 20));
    std::memcpy(buf.data(), base + kStoreHeaderBytes + i * d * sizeof(float), d * sizeof(float));
    norms[i] = norm64(VectorMapF(buf.data(), static_cast<Eigen::Index>(d)));
  }
  write_index(store_path, ids, lemmas, norms);
}

}  // namespace cwe
