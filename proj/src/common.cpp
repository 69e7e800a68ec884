#include "amc/common.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace amc {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> parts) {
  uint64_t state = base;
  uint64_t out = splitmix64(state);
  for (uint64_t p : parts) {
    state ^= p + 0x9e3779b97f4a7c15ULL + (state << 6) + (state >> 2);
    out = splitmix64(state);
  }
  return out;
}

uint64_t fnv1a64(const void* data, size_t len) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a64(const std::vector<uint8_t>& bytes) {
  return fnv1a64(bytes.data(), bytes.size());
}

std::string digest_hex(uint64_t digest) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)digest);
  return std::string(buf);
}

uint64_t RngStream::uniform_int(uint64_t n) {
  if (n == 0) throw ValidationError("uniform_int: n must be positive");
  // Rejection sampling keeps the draw exactly uniform.
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = eng_();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  if (have_cached_) {
    have_cached_ = false;
    return cached_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  cached_ = r * std::sin(a);
  have_cached_ = true;
  return r * std::cos(a);
}

void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v & 0xff));
  out.push_back(uint8_t(v >> 8));
}

void put_i16(std::vector<uint8_t>& out, int16_t v) {
  put_u16(out, uint16_t(v));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

void put_i32(std::vector<uint8_t>& out, int32_t v) {
  put_u32(out, uint32_t(v));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void ByteReader::bytes(void* dst, size_t n) {
  if (pos_ + n > len_) throw IoError("truncated file: unexpected end of data");
  std::memcpy(dst, data_ + pos_, n);
  pos_ += n;
}

uint8_t ByteReader::u8() {
  uint8_t v;
  bytes(&v, 1);
  return v;
}

uint16_t ByteReader::u16() {
  uint8_t b[2];
  bytes(b, 2);
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

int16_t ByteReader::i16() { return int16_t(u16()); }

uint32_t ByteReader::u32() {
  uint8_t b[4];
  bytes(b, 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

int32_t ByteReader::i32() { return int32_t(u32()); }

uint64_t ByteReader::u64() {
  uint64_t v = 0;
  uint8_t b[8];
  bytes(b, 8);
  for (int i = 7; i >= 0; --i) v = v << 8 | b[i];
  return v;
}

float ByteReader::f32() {
  uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  in.seekg(0, std::ios::end);
  std::streamoff n = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> buf(size_t(n));
  if (n > 0) in.read(reinterpret_cast<char*>(buf.data()), n);
  if (!in) throw IoError("read failed: " + path);
  return buf;
}

void write_file_atomic(const std::string& path,
                       const std::vector<uint8_t>& bytes) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + tmp);
    if (!bytes.empty())
      out.write(reinterpret_cast<const char*>(bytes.data()),
                std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::string& path, const std::string& text) {
  std::vector<uint8_t> bytes(text.begin(), text.end());
  write_file_atomic(path, bytes);
}

bool file_exists(const std::string& path) {
  return std::filesystem::exists(path);
}

void ensure_dir(const std::string& path) {
  std::filesystem::create_directories(path);
}

}  // namespace amc
