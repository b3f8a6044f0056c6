#include "fitrep/serve.hpp"

#include <optional>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fitrep/log.hpp"

namespace fitrep::app {

using nlohmann::json;

namespace {

std::string error_body(const std::string& message) {
  return json{{"error", message}}.dump();
}

// A cold item is a valid answer, so an unknown id is 200 with a null
// cluster_id rather than 404.
HandlerResponse cluster_response(const std::optional<ClusterStore>& store,
                                 const std::string& item_id) {
  if (!store) return {503, error_body("cluster store not loaded")};
  auto cid = store->lookup(item_id);
  json j{{"item_id", item_id}, {"cluster_id", nullptr}};
  if (cid) j["cluster_id"] = *cid;
  return {200, j.dump()};
}

HandlerResponse dedup_response(const std::optional<ClusterStore>& store,
                               const std::string& request_body) {
  if (!store) return {503, error_body("cluster store not loaded")};
  json j;
  try {
    j = json::parse(request_body);
  } catch (const json::exception&) {
    return {400, error_body("body is not valid JSON")};
  }
  if (!j.is_object() || !j.contains("ranked") || !j["ranked"].is_array()) {
    return {400, error_body("body must be an object with a ranked array")};
  }
  std::vector<std::string> ranked;
  ranked.reserve(j["ranked"].size());
  for (const auto& v : j["ranked"]) {
    if (!v.is_string()) return {400, error_body("ranked entries must be strings")};
    ranked.push_back(v.get<std::string>());
  }
  auto kept = dedup_ranked_list(ranked, *store);
  return {200, json{{"kept", kept}}.dump()};
}

HandlerResponse healthz_response(const std::optional<ClusterStore>& store) {
  if (!store) return {503, json{{"status", "empty"}}.dump()};
  return {200, json{{"status", "ok"},
                    {"n_entries", store->size()},
                    {"fingerprint", store->fingerprint()}}
                   .dump()};
}

}  // namespace

struct ClusterService::Impl {
  std::optional<ClusterStore> store;
  httplib::Server server;
  std::thread worker;

  void route() {
    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      apply(res, healthz_response(store));
    });
    server.Get(R"(/cluster/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      apply(res, cluster_response(store, req.matches[1]));
    });
    server.Post("/dedup", [this](const httplib::Request& req, httplib::Response& res) {
      apply(res, dedup_response(store, req.body));
    });
  }

  static void apply(httplib::Response& res, const HandlerResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  }
};

ClusterService::ClusterService() : impl_(std::make_unique<Impl>()) { impl_->route(); }

ClusterService::ClusterService(const std::filesystem::path& store_path) : ClusterService() {
  impl_->store.emplace(ClusterStore::open(store_path));
}

ClusterService::~ClusterService() { stop(); }
ClusterService::ClusterService(ClusterService&&) noexcept = default;
ClusterService& ClusterService::operator=(ClusterService&&) noexcept = default;

HandlerResponse ClusterService::handle_cluster(const std::string& item_id) const {
  return cluster_response(impl_->store, item_id);
}

HandlerResponse ClusterService::handle_dedup(const std::string& request_body) const {
  return dedup_response(impl_->store, request_body);
}

HandlerResponse ClusterService::handle_healthz() const {
  return healthz_response(impl_->store);
}

bool ClusterService::listen(const std::string& host, int port) {
  log_info("serving on " + host + ":" + std::to_string(port));
  return impl_->server.listen(host, port);
}

int ClusterService::start_background(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) return -1;
  } else {
    if (!impl_->server.bind_to_port(host, port)) return -1;
  }
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ClusterService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace fitrep::app
