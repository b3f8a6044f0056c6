#include "fitrep/io_util.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fitrep/errors.hpp"
#include "fitrep/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary containers are little-endian; big-endian hosts are unsupported");

namespace fitrep::io {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw ValidationError("read failed: " + path.string());
  return bytes;
}

void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
  auto parent = path.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open file for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw ValidationError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void for_each_line(const std::filesystem::path& path,
                   const std::function<void(size_t, const std::string&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = true;
    for (char c : line) {
      if (c != ' ' && c != '\t') {
        blank = false;
        break;
      }
    }
    if (blank) continue;
    fn(line_no, line);
  }
}

uint64_t hash_file(const std::filesystem::path& path) { return hash64(read_file(path)); }

void put_u32(std::string& out, uint32_t v) { put_bytes(out, &v, sizeof(v)); }
void put_u64(std::string& out, uint64_t v) { put_bytes(out, &v, sizeof(v)); }
void put_f32(std::string& out, float v) { put_bytes(out, &v, sizeof(v)); }
void put_f64(std::string& out, double v) { put_bytes(out, &v, sizeof(v)); }

void put_bytes(std::string& out, const void* data, size_t n) {
  out.append(static_cast<const char*>(data), n);
}

uint32_t ByteReader::get_u32() {
  uint32_t v;
  get_bytes(&v, sizeof(v));
  return v;
}

uint64_t ByteReader::get_u64() {
  uint64_t v;
  get_bytes(&v, sizeof(v));
  return v;
}

float ByteReader::get_f32() {
  float v;
  get_bytes(&v, sizeof(v));
  return v;
}

double ByteReader::get_f64() {
  double v;
  get_bytes(&v, sizeof(v));
  return v;
}

void ByteReader::get_bytes(void* out, size_t n) {
  if (pos_ + n > bytes_.size()) throw FormatError(context_ + ": truncated");
  std::memcpy(out, bytes_.data() + pos_, n);
  pos_ += n;
}

std::string ByteReader::get_string(size_t n) {
  if (pos_ + n > bytes_.size()) throw FormatError(context_ + ": truncated");
  std::string s(bytes_.data() + pos_, n);
  pos_ += n;
  return s;
}

void ByteReader::expect_magic(const char magic[4]) {
  char got[4];
  get_bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0) throw FormatError(context_ + ": bad magic");
}

void ByteReader::expect_end() const {
  if (pos_ != bytes_.size()) throw FormatError(context_ + ": trailing bytes");
}

}  // namespace fitrep::io
