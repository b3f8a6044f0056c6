#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fitrep/chie.hpp"
#include "fitrep/matrix.hpp"

namespace fitrep::encode {

enum class EncoderMode { mock, remote };

struct EncoderConfig {
  EncoderMode mode = EncoderMode::mock;
  int dim = 256;      // mock output width; remote models report their own
  uint64_t seed = 42; // bucket/sign hashing seed for the mock encoder
  std::string endpoint;
  std::string model = "text-encoder-default";
  std::string auth_env;
  int timeout_sec = 30;
  int max_retries = 2;
  int backoff_initial_ms = 1000;
  int batch_size = 64;  // texts per remote request

  void validate() const;
};

// Hashed character trigram encoder: lowercases, pads to length 3, hashes each
// trigram to a signed bucket, L2-normalizes. Deterministic in (text, dim,
// seed); near-duplicate strings land close in cosine. dim must be >= 16.
std::vector<float> mock_encode(std::string_view text, int dim, uint64_t seed);

std::vector<float> encode_text(std::string_view text, const EncoderConfig& cfg);

// Encodes many texts; remote mode batches requests, mock mode is a loop.
std::vector<std::vector<float>> encode_texts(std::span<const std::string> texts,
                                             const EncoderConfig& cfg, int threads = 1);

// One vector per textual dimension of the record, schema order.
std::vector<std::vector<float>> encode_record(const chie::ConceptRecord& rec,
                                              const EncoderConfig& cfg);

// Per-dimension vector sets sharing one row order of item ids.
struct VectorStore {
  std::vector<std::string> ids;
  std::vector<std::string> dim_names;
  std::vector<Matrix> dims;  // dims[k] has ids.size() rows

  void validate() const;
  void save(const std::filesystem::path& dir) const;
  static VectorStore load(const std::filesystem::path& dir);
};

VectorStore encode_records(std::span<const chie::ConceptRecord> records,
                           const corpus::ConceptSchema& schema, const EncoderConfig& cfg,
                           int threads = 1);

// Flat little-endian float32 matrix container with a paired .ids text file.
void write_fvec(const std::filesystem::path& path, const Matrix& m);
Matrix read_fvec(const std::filesystem::path& path);
void write_ids(const std::filesystem::path& path, std::span<const std::string> ids);
std::vector<std::string> read_ids(const std::filesystem::path& path);

}  // namespace fitrep::encode
