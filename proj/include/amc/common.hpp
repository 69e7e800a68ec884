#pragma once

#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace amc {

// Input or configuration rejected before any work started. CLI exit code 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value reached a place that must stay finite. CLI exit code 2.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

uint64_t splitmix64(uint64_t& state);

// Collapses a list of stream coordinates into one 64-bit seed.
uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> parts);

// FNV-1a over raw bytes; used for content digests of files and parameter blobs.
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(const std::vector<uint8_t>& bytes);

std::string digest_hex(uint64_t digest);

// Deterministic random stream. mt19937_64 state is fully specified by the
// standard and the value-to-variate maps below avoid std::*_distribution,
// whose output is implementation defined.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : eng_(seed) {}
  RngStream(uint64_t base, std::initializer_list<uint64_t> parts)
      : eng_(derive_seed(base, parts)) {}

  uint64_t u64() { return eng_(); }

  // Uniform in [0, 1) with 53 bits.
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n);

  // Standard normal via Box-Muller, one value per call (pair cached).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// Little-endian raw encode/append helpers shared by the file formats.
void put_u8(std::vector<uint8_t>& out, uint8_t v);
void put_u16(std::vector<uint8_t>& out, uint16_t v);
void put_i16(std::vector<uint8_t>& out, int16_t v);
void put_u32(std::vector<uint8_t>& out, uint32_t v);
void put_i32(std::vector<uint8_t>& out, int32_t v);
void put_u64(std::vector<uint8_t>& out, uint64_t v);
void put_f32(std::vector<uint8_t>& out, float v);

// Cursor-based reader over a byte buffer; throws IoError on underrun.
class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t len) : data_(data), len_(len) {}
  explicit ByteReader(const std::vector<uint8_t>& buf)
      : data_(buf.data()), len_(buf.size()) {}

  uint8_t u8();
  uint16_t u16();
  int16_t i16();
  uint32_t u32();
  int32_t i32();
  uint64_t u64();
  float f32();
  void bytes(void* dst, size_t n);
  size_t remaining() const { return len_ - pos_; }
  bool done() const { return pos_ == len_; }

 private:
  const uint8_t* data_;
  size_t len_;
  size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::string& path);

// Write-temp-then-rename so partially written files never appear under the
// final name.
void write_file_atomic(const std::string& path,
                       const std::vector<uint8_t>& bytes);
void write_file_atomic(const std::string& path, const std::string& text);

bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

}  // namespace amc
