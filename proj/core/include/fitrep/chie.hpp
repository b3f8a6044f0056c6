#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fitrep/corpus.hpp"

namespace fitrep::chie {

// One extracted concept row: a short text per textual dimension (schema
// order) plus the numeric quantity.
struct ConceptRecord {
  std::string item_id;
  std::vector<std::string> texts;
  double quantity = 0.0;

  bool operator==(const ConceptRecord&) const = default;
};

enum class ExtractorMode { mock, remote };

struct ExtractorConfig {
  ExtractorMode mode = ExtractorMode::mock;
  corpus::ConceptSchema schema = corpus::ConceptSchema::default_schema();
  std::string endpoint;  // e.g. http://host:port/v1/chat/completions
  std::string model = "mllm-default";
  std::string auth_env;  // env var holding a bearer token, optional
  int timeout_sec = 30;
  int max_retries = 2;  // attempts = 1 + max_retries
  int backoff_initial_ms = 1000;

  void validate() const;
};

// Deterministic structured prompt asking for one JSON key per schema dim.
std::string build_prompt(const corpus::Item& item, const corpus::ConceptSchema& schema);

// Pulls the first balanced JSON object out of free-form model output (it may
// be wrapped in prose or markdown fences) and checks it against the schema.
// Throws ParseError when no object can be found, SchemaViolation when a dim
// is missing or malformed. item_id of the result is left empty.
ConceptRecord parse_extraction_response(const std::string& raw,
                                        const corpus::ConceptSchema& schema);

// Offline extractor: echoes raw_attrs through the schema. Missing attribute
// or bad quantity throws SchemaViolation, mirroring the remote contract.
ConceptRecord mock_extract(const corpus::Item& item, const corpus::ConceptSchema& schema);

// Extracts one item according to cfg.mode. Remote transport errors and
// unparseable responses are retried with exponential backoff; after the
// attempt budget the last SchemaViolation is rethrown as-is and anything
// else is wrapped in ExtractionFailed(item_id, cause).
ConceptRecord extract_concepts(const corpus::Item& item, const ExtractorConfig& cfg);

struct QuarantineEntry {
  std::string item_id;
  std::string cause;
  bool operator==(const QuarantineEntry&) const = default;
};

struct BatchResult {
  std::vector<ConceptRecord> records;        // sorted by item_id
  std::vector<QuarantineEntry> quarantined;  // sorted by item_id
};

// Extracts a batch with up to `threads` requests in flight. Per-item
// failures are quarantined instead of aborting the batch.
BatchResult extract_batch(std::span<const corpus::Item> items, const ExtractorConfig& cfg,
                          int threads);

void save_concepts(const std::filesystem::path& path, std::span<const ConceptRecord> records);
std::vector<ConceptRecord> load_concepts(const std::filesystem::path& path,
                                         const corpus::ConceptSchema& schema);
void save_quarantine(const std::filesystem::path& path, std::span<const QuarantineEntry> entries);

}  // namespace fitrep::chie
