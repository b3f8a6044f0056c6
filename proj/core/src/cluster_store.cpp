#include "fitrep/cluster_store.hpp"

#include <cstring>
#include <utility>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include "fitrep/errors.hpp"
#include "fitrep/io_util.hpp"
#include "fitrep/rng.hpp"

namespace fitrep::app {

namespace {

constexpr char kMagic[4] = {'F', 'C', 'S', 'T'};
constexpr uint32_t kVersion = 1;
constexpr size_t kSlotBytes = 24;  // u64 hash, u64 offset, u32 len, i32 cluster_id

size_t table_size_for(size_t n) {
  size_t size = 8;
  while (size < 2 * n) size <<= 1;
  return size;
}

uint64_t read_u64(const char* p) {
  uint64_t v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

uint32_t read_u32(const char* p) {
  uint32_t v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

int32_t read_i32(const char* p) {
  int32_t v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

}  // namespace

void ClusterStore::build(const std::filesystem::path& path,
                         const fbc::ClusterAssignment& assignment,
                         const std::string& fingerprint) {
  const size_t n = assignment.item_ids.size();
  if (assignment.cluster_ids.size() != n) throw ValidationError("assignment shape mismatch");
  const size_t table_size = table_size_for(n);

  struct Slot {
    uint64_t hash = 0;
    uint64_t offset = 0;
    uint32_t len = 0;
    int32_t cluster_id = -1;
  };
  std::vector<Slot> slots(table_size);
  std::string pool;
  for (size_t i = 0; i < n; ++i) {
    const std::string& id = assignment.item_ids[i];
    if (assignment.cluster_ids[i] < 0) {
      throw ValidationError("negative cluster id for item: " + id);
    }
    uint64_t h = hash64(id);
    size_t idx = h & (table_size - 1);
    for (;;) {
      Slot& slot = slots[idx];
      if (slot.cluster_id < 0) {
        slot.hash = h;
        slot.offset = pool.size();
        slot.len = static_cast<uint32_t>(id.size());
        slot.cluster_id = assignment.cluster_ids[i];
        pool += id;
        break;
      }
      if (slot.hash == h && slot.len == id.size() &&
          std::memcmp(pool.data() + slot.offset, id.data(), id.size()) == 0) {
        throw ValidationError("duplicate item in cluster assignment: " + id);
      }
      idx = (idx + 1) & (table_size - 1);
    }
  }

  std::string out;
  out.reserve(24 + fingerprint.size() + table_size * kSlotBytes + pool.size());
  io::put_bytes(out, kMagic, 4);
  io::put_u32(out, kVersion);
  io::put_u32(out, static_cast<uint32_t>(fingerprint.size()));
  io::put_bytes(out, fingerprint.data(), fingerprint.size());
  io::put_u64(out, n);
  io::put_u64(out, table_size);
  for (const Slot& slot : slots) {
    io::put_u64(out, slot.hash);
    io::put_u64(out, slot.offset);
    io::put_u32(out, slot.len);
    io::put_bytes(out, &slot.cluster_id, sizeof(slot.cluster_id));
  }
  io::put_bytes(out, pool.data(), pool.size());
  io::atomic_write_file(path, out);
}

ClusterStore ClusterStore::open(const std::filesystem::path& path) {
  int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) throw ValidationError("cannot open store: " + path.string());
  struct stat st {};
  if (fstat(fd, &st) != 0 || st.st_size < 0) {
    ::close(fd);
    throw ValidationError("cannot stat store: " + path.string());
  }
  size_t len = static_cast<size_t>(st.st_size);
  void* map = mmap(nullptr, len, PROT_READ, MAP_PRIVATE, fd, 0);
  ::close(fd);
  if (map == MAP_FAILED) throw ValidationError("cannot map store: " + path.string());

  ClusterStore store;
  store.map_ = static_cast<const char*>(map);
  store.map_len_ = len;
  try {
    const char* p = store.map_;
    const char* end = store.map_ + len;
    if (len < 16 || std::memcmp(p, kMagic, 4) != 0) {
      throw FormatError(path.string() + ": bad magic");
    }
    p += 4;
    uint32_t version = read_u32(p);
    p += 4;
    if (version != kVersion) {
      throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    }
    uint32_t fp_len = read_u32(p);
    p += 4;
    if (p + fp_len + 16 > end) throw FormatError(path.string() + ": truncated");
    store.fingerprint_.assign(p, fp_len);
    p += fp_len;
    store.n_entries_ = read_u64(p);
    p += 8;
    store.table_size_ = read_u64(p);
    p += 8;
    if (store.table_size_ == 0 || (store.table_size_ & (store.table_size_ - 1)) != 0) {
      throw FormatError(path.string() + ": table size must be a power of two");
    }
    if (p + store.table_size_ * kSlotBytes > end) {
      throw FormatError(path.string() + ": truncated table");
    }
    store.slots_ = p;
    store.pool_ = p + store.table_size_ * kSlotBytes;
    store.pool_len_ = static_cast<size_t>(end - store.pool_);
  } catch (...) {
    munmap(map, len);
    throw;
  }
  return store;
}

ClusterStore::ClusterStore(ClusterStore&& other) noexcept { *this = std::move(other); }

ClusterStore& ClusterStore::operator=(ClusterStore&& other) noexcept {
  if (this != &other) {
    if (map_ != nullptr) munmap(const_cast<char*>(map_), map_len_);
    map_ = std::exchange(other.map_, nullptr);
    map_len_ = std::exchange(other.map_len_, 0);
    slots_ = std::exchange(other.slots_, nullptr);
    pool_ = std::exchange(other.pool_, nullptr);
    pool_len_ = std::exchange(other.pool_len_, 0);
    table_size_ = std::exchange(other.table_size_, 0);
    n_entries_ = std::exchange(other.n_entries_, 0);
    fingerprint_ = std::move(other.fingerprint_);
  }
  return *this;
}

ClusterStore::~ClusterStore() {
  if (map_ != nullptr) munmap(const_cast<char*>(map_), map_len_);
}

std::optional<int32_t> ClusterStore::lookup(std::string_view item_id) const {
  if (table_size_ == 0) return std::nullopt;
  uint64_t h = hash64(item_id);
  size_t idx = h & (table_size_ - 1);
  for (size_t probes = 0; probes < table_size_; ++probes) {
    const char* slot = slots_ + idx * kSlotBytes;
    int32_t cid = read_i32(slot + 20);
    if (cid < 0) return std::nullopt;
    uint64_t slot_hash = read_u64(slot);
    uint64_t offset = read_u64(slot + 8);
    uint32_t slen = read_u32(slot + 16);
    if (slot_hash == h && slen == item_id.size()) {
      if (offset + slen > pool_len_) throw FormatError("cluster store: corrupt string pool");
      if (std::memcmp(pool_ + offset, item_id.data(), slen) == 0) return cid;
    }
    idx = (idx + 1) & (table_size_ - 1);
  }
  return std::nullopt;
}

std::vector<std::string> dedup_ranked_list(std::span<const std::string> ranked,
                                           const ClusterStore& store) {
  std::vector<std::string> kept;
  kept.reserve(ranked.size());
  std::vector<bool> seen;
  for (const auto& id : ranked) {
    auto cid = store.lookup(id);
    if (!cid.has_value()) {
      kept.push_back(id);
      continue;
    }
    size_t c = static_cast<size_t>(*cid);
    if (c >= seen.size()) seen.resize(c + 1, false);
    if (seen[c]) continue;
    seen[c] = true;
    kept.push_back(id);
  }
  return kept;
}

}  // namespace fitrep::app
