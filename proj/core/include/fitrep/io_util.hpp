#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace fitrep::io {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file then renames, so readers never observe a
// partially written artifact.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);

// Calls fn(line_number, line) for each non-blank line; line numbers are
// 1-based. Throws ValidationError if the file cannot be opened.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(size_t, const std::string&)>& fn);

uint64_t hash_file(const std::filesystem::path& path);

// Little-endian scalar append/read helpers for the binary containers.
void put_u32(std::string& out, uint32_t v);
void put_u64(std::string& out, uint64_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);
void put_bytes(std::string& out, const void* data, size_t n);

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  uint32_t get_u32();
  uint64_t get_u64();
  float get_f32();
  double get_f64();
  void get_bytes(void* out, size_t n);
  std::string get_string(size_t n);
  void expect_magic(const char magic[4]);
  void expect_end() const;
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::string context_;
  size_t pos_ = 0;
};

}  // namespace fitrep::io
