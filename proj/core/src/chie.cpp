#include "fitrep/chie.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fitrep/errors.hpp"
#include "fitrep/io_util.hpp"
#include "fitrep/log.hpp"
#include "fitrep/parallel.hpp"

namespace fitrep::chie {

using nlohmann::json;

void ExtractorConfig::validate() const {
  schema.validate();
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (timeout_sec < 1) throw ConfigError("timeout_sec must be >= 1");
  if (backoff_initial_ms < 0) throw ConfigError("backoff_initial_ms must be >= 0");
  if (mode == ExtractorMode::remote && endpoint.empty()) {
    throw ConfigError("remote extractor requires an endpoint");
  }
}

std::string build_prompt(const corpus::Item& item, const corpus::ConceptSchema& schema) {
  schema.validate();
  std::ostringstream out;
  out << "You are a product cataloging assistant. Inspect the attached product image"
      << " together with the listing title and describe the single item shown.\n"
      << "\n"
      << "Listing title: " << item.title << "\n"
      << "\n"
      << "Describe the item along each of these dimensions, in order:\n";
  for (size_t i = 0; i < schema.dims.size(); ++i) {
    const auto& d = schema.dims[i];
    out << "  " << (i + 1) << ". " << d.name
        << (d.kind == corpus::DimKind::numeric ? " (a plain number; how many units one listing contains)"
                                               : " (a short phrase)")
        << "\n";
  }
  out << "\n"
      << "Respond with a single JSON object whose keys are exactly the " << schema.dims.size()
      << " dimension names above, and nothing else. Use a short lowercase phrase for each"
      << " text value. If a dimension is not visible, give your best guess from the title.\n";
  return out.str();
}

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Extracts the substring of the first balanced top-level JSON object
// starting at or after `from`. Returns nullopt when none remains.
std::optional<std::string> balanced_object(const std::string& raw, size_t from, size_t* start_out) {
  size_t start = raw.find('{', from);
  if (start == std::string::npos) return std::nullopt;
  bool in_string = false;
  bool escaped = false;
  int depth = 0;
  for (size_t i = start; i < raw.size(); ++i) {
    char c = raw[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) {
        *start_out = start;
        return raw.substr(start, i - start + 1);
      }
    }
  }
  return std::nullopt;
}

double parse_quantity_value(const json& v, const std::string& dim_name) {
  double q = 0.0;
  if (v.is_number()) {
    q = v.get<double>();
  } else if (v.is_string()) {
    const std::string s = trim(v.get<std::string>());
    if (s.empty()) throw SchemaViolation(dim_name);
    char* end = nullptr;
    q = std::strtod(s.c_str(), &end);
    if (end == nullptr || *end != '\0') throw SchemaViolation(dim_name);
  } else {
    throw SchemaViolation(dim_name);
  }
  if (!std::isfinite(q) || q < 1.0) throw SchemaViolation(dim_name);
  return q;
}

ConceptRecord record_from_object(const json& obj, const corpus::ConceptSchema& schema) {
  ConceptRecord rec;
  for (size_t i = 0; i + 1 < schema.dims.size(); ++i) {
    const auto& name = schema.dims[i].name;
    if (!obj.contains(name) || !obj[name].is_string()) throw SchemaViolation(name);
    std::string text = trim(obj[name].get<std::string>());
    if (text.empty()) throw SchemaViolation(name);
    rec.texts.push_back(std::move(text));
  }
  const auto& qname = schema.quantity_dim().name;
  if (!obj.contains(qname)) throw SchemaViolation(qname);
  rec.quantity = parse_quantity_value(obj[qname], qname);
  return rec;
}

}  // namespace

ConceptRecord parse_extraction_response(const std::string& raw,
                                        const corpus::ConceptSchema& schema) {
  schema.validate();
  size_t from = 0;
  std::optional<json> parsed;
  while (true) {
    size_t start = 0;
    auto candidate = balanced_object(raw, from, &start);
    if (!candidate) break;
    try {
      json j = json::parse(*candidate);
      if (j.is_object()) {
        parsed = std::move(j);
        break;
      }
    } catch (const json::exception&) {
      // fall through and look for the next candidate object
    }
    from = start + 1;
  }
  if (!parsed) throw ParseError("no JSON object found in response");
  return record_from_object(*parsed, schema);
}

ConceptRecord mock_extract(const corpus::Item& item, const corpus::ConceptSchema& schema) {
  schema.validate();
  ConceptRecord rec;
  rec.item_id = item.item_id;
  for (size_t i = 0; i + 1 < schema.dims.size(); ++i) {
    const auto& name = schema.dims[i].name;
    auto it = item.raw_attrs.find(name);
    if (it == item.raw_attrs.end() || trim(it->second).empty()) throw SchemaViolation(name);
    rec.texts.push_back(trim(it->second));
  }
  const auto& qname = schema.quantity_dim().name;
  auto it = item.raw_attrs.find(qname);
  if (it == item.raw_attrs.end()) throw SchemaViolation(qname);
  rec.quantity = parse_quantity_value(json(it->second), qname);
  return rec;
}

namespace {

struct EndpointParts {
  std::string base;  // scheme://host:port
  std::string path;
};

EndpointParts split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + endpoint);
  auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

ConceptRecord remote_extract_once(const corpus::Item& item, const ExtractorConfig& cfg,
                                  const std::string& bearer) {
  auto parts = split_endpoint(cfg.endpoint);
  httplib::Client client(parts.base);
  client.set_connection_timeout(cfg.timeout_sec, 0);
  client.set_read_timeout(cfg.timeout_sec, 0);
  client.set_write_timeout(cfg.timeout_sec, 0);

  json body;
  body["model"] = cfg.model;
  body["prompt"] = build_prompt(item, cfg.schema);
  if (!item.image_ref.empty()) body["image_ref"] = item.image_ref;

  httplib::Headers headers;
  if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);

  auto res = client.Post(parts.path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error("transport error: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error("http status " + std::to_string(res->status));
  }
  std::string text;
  try {
    json j = json::parse(res->body);
    if (j.contains("output") && j["output"].is_string()) {
      text = j["output"].get<std::string>();
    } else if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
      text = j["choices"][0].at("message").at("content").get<std::string>();
    } else {
      throw ParseError("response has no output text");
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("response body is not valid JSON: ") + e.what());
  }
  ConceptRecord rec = parse_extraction_response(text, cfg.schema);
  rec.item_id = item.item_id;
  return rec;
}

}  // namespace

ConceptRecord extract_concepts(const corpus::Item& item, const ExtractorConfig& cfg) {
  cfg.validate();
  if (cfg.mode == ExtractorMode::mock) return mock_extract(item, cfg.schema);

  std::string bearer;
  if (!cfg.auth_env.empty()) {
    const char* tok = std::getenv(cfg.auth_env.c_str());
    if (tok == nullptr || *tok == '\0') {
      throw ConfigError("auth env var not set: " + cfg.auth_env);
    }
    bearer = tok;
  }

  const int attempts = 1 + cfg.max_retries;
  long backoff_ms = cfg.backoff_initial_ms;
  std::optional<SchemaViolation> last_violation;
  std::string last_cause;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
    try {
      return remote_extract_once(item, cfg, bearer);
    } catch (const SchemaViolation& e) {
      last_violation = e;
      last_cause = e.what();
    } catch (const Error& e) {
      last_violation.reset();
      last_cause = e.what();
    }
    log_debug("extract retry for " + item.item_id + ": " + last_cause);
  }
  if (last_violation) throw *last_violation;
  throw ExtractionFailed(item.item_id, last_cause);
}

BatchResult extract_batch(std::span<const corpus::Item> items, const ExtractorConfig& cfg,
                          int threads) {
  cfg.validate();
  std::vector<std::optional<ConceptRecord>> slots(items.size());
  std::vector<QuarantineEntry> quarantined;
  std::mutex mutex;
  parallel_for(items.size(), threads, [&](size_t i) {
    try {
      slots[i] = extract_concepts(items[i], cfg);
    } catch (const ConfigError&) {
      throw;  // a bad config fails the whole batch, not one item
    } catch (const Error& e) {
      std::lock_guard<std::mutex> lock(mutex);
      quarantined.push_back({items[i].item_id, e.what()});
    }
  });
  BatchResult result;
  for (auto& slot : slots) {
    if (slot) result.records.push_back(std::move(*slot));
  }
  std::sort(result.records.begin(), result.records.end(),
            [](const ConceptRecord& a, const ConceptRecord& b) { return a.item_id < b.item_id; });
  std::sort(quarantined.begin(), quarantined.end(),
            [](const QuarantineEntry& a, const QuarantineEntry& b) { return a.item_id < b.item_id; });
  result.quarantined = std::move(quarantined);
  if (!result.quarantined.empty()) {
    log_warn("quarantined " + std::to_string(result.quarantined.size()) + " of " +
             std::to_string(items.size()) + " items during extraction");
  }
  return result;
}

void save_concepts(const std::filesystem::path& path, std::span<const ConceptRecord> records) {
  std::string out;
  for (const auto& rec : records) {
    json j;
    j["item_id"] = rec.item_id;
    j["texts"] = rec.texts;
    j["quantity"] = rec.quantity;
    out += j.dump();
    out += "\n";
  }
  io::atomic_write_file(path, out);
}

std::vector<ConceptRecord> load_concepts(const std::filesystem::path& path,
                                         const corpus::ConceptSchema& schema) {
  schema.validate();
  std::vector<ConceptRecord> records;
  io::for_each_line(path, [&](size_t line_no, const std::string& line) {
    auto fail = [&](const std::string& msg) -> ValidationError {
      return ValidationError("line " + std::to_string(line_no) + ": " + msg);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
    ConceptRecord rec;
    if (!j.contains("item_id") || !j["item_id"].is_string()) throw fail("missing item_id");
    rec.item_id = j["item_id"].get<std::string>();
    if (!j.contains("texts") || !j["texts"].is_array()) throw fail("missing texts");
    for (const auto& t : j["texts"]) {
      if (!t.is_string()) throw fail("texts entries must be strings");
      rec.texts.push_back(t.get<std::string>());
    }
    if (rec.texts.size() != schema.text_dim_count()) {
      throw fail("texts length " + std::to_string(rec.texts.size()) + " does not match schema (" +
                 std::to_string(schema.text_dim_count()) + ")");
    }
    if (!j.contains("quantity") || !j["quantity"].is_number()) throw fail("missing quantity");
    rec.quantity = j["quantity"].get<double>();
    if (!std::isfinite(rec.quantity) || rec.quantity < 1.0) throw fail("quantity must be >= 1");
    records.push_back(std::move(rec));
  });
  return records;
}

void save_quarantine(const std::filesystem::path& path, std::span<const QuarantineEntry> entries) {
  std::string out;
  for (const auto& e : entries) {
    json j;
    j["item_id"] = e.item_id;
    j["cause"] = e.cause;
    out += j.dump();
    out += "\n";
  }
  io::atomic_write_file(path, out);
}

}  // namespace fitrep::chie
