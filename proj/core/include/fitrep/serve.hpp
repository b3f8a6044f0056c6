#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "fitrep/cluster_store.hpp"

namespace fitrep::app {

// Status + JSON body pair shared by the HTTP routes and by tests that call
// the handlers directly.
struct HandlerResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";

  bool operator==(const HandlerResponse&) const = default;
};

// Read-only lookup service over a built cluster store.
//   GET  /cluster/{item_id}  -> cluster membership of one item
//   POST /dedup              -> {"ranked": [...]} in, {"kept": [...]} out
//   GET  /healthz            -> store stats
class ClusterService {
 public:
  explicit ClusterService(const std::filesystem::path& store_path);
  ClusterService();  // no store; every endpoint except /healthz returns 503
  ~ClusterService();
  ClusterService(ClusterService&&) noexcept;
  ClusterService& operator=(ClusterService&&) noexcept;

  HandlerResponse handle_cluster(const std::string& item_id) const;
  HandlerResponse handle_dedup(const std::string& request_body) const;
  HandlerResponse handle_healthz() const;

  // Blocks serving on host:port until stop() is called from another thread.
  // Returns false when the socket could not be bound.
  bool listen(const std::string& host, int port);

  // Binds (port 0 picks a free one), then serves on a background thread.
  // Returns the bound port, or -1 on failure.
  int start_background(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace fitrep::app
