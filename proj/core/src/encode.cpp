#include "fitrep/encode.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fitrep/errors.hpp"
#include "fitrep/io_util.hpp"
#include "fitrep/log.hpp"
#include "fitrep/parallel.hpp"
#include "fitrep/rng.hpp"

namespace fitrep::encode {

using nlohmann::json;

void EncoderConfig::validate() const {
  if (dim < 16) throw ConfigError("encoder dim must be >= 16");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (mode == EncoderMode::remote && endpoint.empty()) {
    throw ConfigError("remote encoder requires an endpoint");
  }
}

std::vector<float> mock_encode(std::string_view text, int dim, uint64_t seed) {
  if (dim < 16) throw ValidationError("mock_encode: dim must be >= 16");
  if (text.empty()) throw ValidationError("mock_encode: empty text");
  std::string s;
  s.reserve(text.size());
  for (char c : text) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  while (s.size() < 3) s.push_back('_');

  std::vector<double> acc(static_cast<size_t>(dim), 0.0);
  for (size_t i = 0; i + 3 <= s.size(); ++i) {
    uint64_t h = hash64(std::string_view(s.data() + i, 3), seed);
    size_t bucket = static_cast<size_t>(h % static_cast<uint64_t>(dim));
    double sign = (h >> 63) ? 1.0 : -1.0;
    acc[bucket] += sign;
  }
  double nrm = 0.0;
  for (double v : acc) nrm += v * v;
  nrm = std::sqrt(nrm);
  if (nrm < 1e-12) {
    // Signed counts cancelled out entirely; fall back to a single bucket so
    // the result stays a unit vector.
    acc[hash64(s, seed ^ 0x5eedULL) % static_cast<uint64_t>(dim)] = 1.0;
    nrm = 1.0;
  }
  std::vector<float> out(static_cast<size_t>(dim));
  for (int i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] / nrm);
  return out;
}

namespace {

struct EndpointParts {
  std::string base;
  std::string path;
};

EndpointParts split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + endpoint);
  auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

std::string bearer_from_env(const std::string& auth_env) {
  if (auth_env.empty()) return {};
  const char* tok = std::getenv(auth_env.c_str());
  if (tok == nullptr || *tok == '\0') throw ConfigError("auth env var not set: " + auth_env);
  return tok;
}

std::vector<std::vector<float>> remote_encode_batch_once(std::span<const std::string> texts,
                                                         const EncoderConfig& cfg,
                                                         const std::string& bearer) {
  auto parts = split_endpoint(cfg.endpoint);
  httplib::Client client(parts.base);
  client.set_connection_timeout(cfg.timeout_sec, 0);
  client.set_read_timeout(cfg.timeout_sec, 0);
  client.set_write_timeout(cfg.timeout_sec, 0);

  json body;
  body["model"] = cfg.model;
  body["input"] = std::vector<std::string>(texts.begin(), texts.end());
  httplib::Headers headers;
  if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);

  auto res = client.Post(parts.path, headers, body.dump(), "application/json");
  if (!res) throw Error("transport error: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error("http status " + std::to_string(res->status));

  json j;
  try {
    j = json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(std::string("encoder response is not valid JSON: ") + e.what());
  }
  if (!j.contains("embeddings") || !j["embeddings"].is_array() ||
      j["embeddings"].size() != texts.size()) {
    throw Error("encoder response embeddings missing or wrong count");
  }
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& row : j["embeddings"]) {
    std::vector<float> v;
    v.reserve(row.size());
    for (const auto& x : row) {
      float f = x.get<float>();
      if (!std::isfinite(f)) throw Error("encoder returned a non-finite value");
      v.push_back(f);
    }
    if (v.empty()) throw Error("encoder returned an empty vector");
    out.push_back(std::move(v));
  }
  size_t width = out.front().size();
  for (const auto& v : out) {
    if (v.size() != width) throw Error("encoder returned ragged vectors");
  }
  return out;
}

std::vector<std::vector<float>> remote_encode_batch(std::span<const std::string> texts,
                                                    const EncoderConfig& cfg,
                                                    const std::string& bearer) {
  const int attempts = 1 + cfg.max_retries;
  long backoff_ms = cfg.backoff_initial_ms;
  std::string last_cause;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
    try {
      return remote_encode_batch_once(texts, cfg, bearer);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      last_cause = e.what();
      log_debug(std::string("encode retry: ") + e.what());
    }
  }
  throw EncodeFailed("remote encode failed after retries: " + last_cause);
}

}  // namespace

std::vector<float> encode_text(std::string_view text, const EncoderConfig& cfg) {
  cfg.validate();
  if (cfg.mode == EncoderMode::mock) return mock_encode(text, cfg.dim, cfg.seed);
  std::string one(text);
  auto rows = remote_encode_batch(std::span<const std::string>(&one, 1), cfg,
                                  bearer_from_env(cfg.auth_env));
  return rows.front();
}

std::vector<std::vector<float>> encode_texts(std::span<const std::string> texts,
                                             const EncoderConfig& cfg, int threads) {
  cfg.validate();
  std::vector<std::vector<float>> out(texts.size());
  if (cfg.mode == EncoderMode::mock) {
    parallel_for(texts.size(), threads,
                 [&](size_t i) { out[i] = mock_encode(texts[i], cfg.dim, cfg.seed); });
    return out;
  }
  std::string bearer = bearer_from_env(cfg.auth_env);
  for (size_t begin = 0; begin < texts.size(); begin += static_cast<size_t>(cfg.batch_size)) {
    size_t end = std::min(texts.size(), begin + static_cast<size_t>(cfg.batch_size));
    auto rows = remote_encode_batch(texts.subspan(begin, end - begin), cfg, bearer);
    for (size_t i = 0; i < rows.size(); ++i) out[begin + i] = std::move(rows[i]);
  }
  return out;
}

std::vector<std::vector<float>> encode_record(const chie::ConceptRecord& rec,
                                              const EncoderConfig& cfg) {
  return encode_texts(rec.texts, cfg);
}

void VectorStore::validate() const {
  if (dim_names.size() != dims.size()) throw ValidationError("vector store dim name/matrix mismatch");
  for (size_t k = 0; k < dims.size(); ++k) {
    if (dims[k].rows() != ids.size()) {
      throw ValidationError("vector store dim '" + dim_names[k] + "' row count mismatch");
    }
    if (!dims[k].all_finite()) {
      throw ValidationError("vector store dim '" + dim_names[k] + "' has non-finite values");
    }
  }
}

void VectorStore::save(const std::filesystem::path& dir) const {
  validate();
  std::filesystem::create_directories(dir);
  write_ids(dir / "rows.ids", ids);
  json names = dim_names;
  io::atomic_write_file(dir / "dims.json", names.dump() + "\n");
  for (size_t k = 0; k < dims.size(); ++k) {
    write_fvec(dir / (dim_names[k] + ".fvec"), dims[k]);
  }
}

VectorStore VectorStore::load(const std::filesystem::path& dir) {
  VectorStore store;
  store.ids = read_ids(dir / "rows.ids");
  json names;
  try {
    names = json::parse(io::read_file(dir / "dims.json"));
  } catch (const json::exception& e) {
    throw FormatError("dims.json: " + std::string(e.what()));
  }
  for (const auto& n : names) store.dim_names.push_back(n.get<std::string>());
  for (const auto& name : store.dim_names) {
    store.dims.push_back(read_fvec(dir / (name + ".fvec")));
  }
  store.validate();
  return store;
}

VectorStore encode_records(std::span<const chie::ConceptRecord> records,
                           const corpus::ConceptSchema& schema, const EncoderConfig& cfg,
                           int threads) {
  cfg.validate();
  schema.validate();
  VectorStore store;
  store.dim_names = schema.text_dim_names();
  store.ids.reserve(records.size());
  for (const auto& rec : records) {
    if (rec.texts.size() != store.dim_names.size()) {
      throw ValidationError("record '" + rec.item_id + "' has " +
                            std::to_string(rec.texts.size()) + " texts, schema wants " +
                            std::to_string(store.dim_names.size()));
    }
    store.ids.push_back(rec.item_id);
  }
  for (size_t k = 0; k < store.dim_names.size(); ++k) {
    std::vector<std::string> texts;
    texts.reserve(records.size());
    for (const auto& rec : records) texts.push_back(rec.texts[k]);
    auto rows = encode_texts(texts, cfg, threads);
    size_t width = rows.empty() ? static_cast<size_t>(cfg.dim) : rows.front().size();
    Matrix m(records.size(), width);
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != width) throw EncodeFailed("ragged encoder output");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i));
    }
    store.dims.push_back(std::move(m));
  }
  store.validate();
  return store;
}

namespace {
constexpr char kFvecMagic[4] = {'F', 'V', 'E', 'C'};
constexpr uint32_t kFvecVersion = 1;
}  // namespace

void write_fvec(const std::filesystem::path& path, const Matrix& m) {
  if (!m.all_finite()) throw ValidationError("refusing to write non-finite vectors: " + path.string());
  std::string out;
  out.reserve(16 + m.data().size() * 4);
  io::put_bytes(out, kFvecMagic, 4);
  io::put_u32(out, kFvecVersion);
  io::put_u32(out, static_cast<uint32_t>(m.rows()));
  io::put_u32(out, static_cast<uint32_t>(m.cols()));
  io::put_bytes(out, m.data().data(), m.data().size() * sizeof(float));
  io::atomic_write_file(path, out);
}

Matrix read_fvec(const std::filesystem::path& path) {
  std::string bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  r.expect_magic(kFvecMagic);
  uint32_t version = r.get_u32();
  if (version != kFvecVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  uint32_t rows = r.get_u32();
  uint32_t cols = r.get_u32();
  if (r.remaining() != static_cast<size_t>(rows) * cols * sizeof(float)) {
    throw FormatError(path.string() + ": payload size does not match header");
  }
  std::vector<float> data(static_cast<size_t>(rows) * cols);
  r.get_bytes(data.data(), data.size() * sizeof(float));
  r.expect_end();
  Matrix m(rows, cols, std::move(data));
  if (!m.all_finite()) throw FormatError(path.string() + ": non-finite values");
  return m;
}

void write_ids(const std::filesystem::path& path, std::span<const std::string> ids) {
  std::string out;
  for (const auto& id : ids) {
    if (id.empty() || id.find('\n') != std::string::npos) {
      throw ValidationError("id not representable in ids file: '" + id + "'");
    }
    out += id;
    out += "\n";
  }
  io::atomic_write_file(path, out);
}

std::vector<std::string> read_ids(const std::filesystem::path& path) {
  std::vector<std::string> ids;
  io::for_each_line(path, [&](size_t, const std::string& line) { ids.push_back(line); });
  return ids;
}

}  // namespace fitrep::encode
