#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fitrep/fbc.hpp"

namespace fitrep::app {

// Immutable item_id -> cluster_id map, served straight out of a memory
// mapped file: open-addressed hash table over a string pool, no heap beyond
// the mapping itself.
class ClusterStore {
 public:
  static void build(const std::filesystem::path& path, const fbc::ClusterAssignment& assignment,
                    const std::string& fingerprint);
  static ClusterStore open(const std::filesystem::path& path);

  ClusterStore(ClusterStore&& other) noexcept;
  ClusterStore& operator=(ClusterStore&& other) noexcept;
  ClusterStore(const ClusterStore&) = delete;
  ClusterStore& operator=(const ClusterStore&) = delete;
  ~ClusterStore();

  std::optional<int32_t> lookup(std::string_view item_id) const;
  size_t size() const { return n_entries_; }
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  ClusterStore() = default;

  const char* map_ = nullptr;
  size_t map_len_ = 0;
  const char* slots_ = nullptr;
  const char* pool_ = nullptr;
  size_t pool_len_ = 0;
  size_t table_size_ = 0;
  size_t n_entries_ = 0;
  std::string fingerprint_;
};

// Order-preserving dedup of a ranked id list: the first item of each cluster
// is kept, later members are dropped, ids missing from the store pass
// through untouched.
std::vector<std::string> dedup_ranked_list(std::span<const std::string> ranked,
                                           const ClusterStore& store);

}  // namespace fitrep::app
