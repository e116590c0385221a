#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ceae {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr int kSampleRate = 16000;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad arguments, violated preconditions, malformed files. Maps to CLI exit 2.
class ValueError : public Error {
 public:
  explicit ValueError(const std::string& msg) : Error(msg) {}
};

/// Filesystem / IO failures. Maps to CLI exit 2.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Numeric breakdown (non-finite loss or gradient). Maps to CLI exit 1.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValueError(msg);
}

// --- seeding ------------------------------------------------------------

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(std::string_view s);
uint64_t fnv1a64_bytes(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull);

/// Derives an independent child seed from (seed, tag). Stable across runs.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
  return splitmix64(seed ^ fnv1a64(tag));
}
inline uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t index) {
  return splitmix64(splitmix64(seed ^ fnv1a64(tag)) + 0x9e3779b97f4a7c15ull * (index + 1));
}

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::string rng_state_to_string(const Rng& rng);
Rng rng_state_from_string(const std::string& s);

// --- checksums / hashing -------------------------------------------------

uint32_t crc32(const void* data, size_t n, uint32_t seed = 0);

std::string to_hex(uint64_t v);

/// FNV-1a over the raw bytes of a matrix, used for freeze contracts and
/// model identity.
uint64_t hash_matrix(const Mat& m, uint64_t h = 0xcbf29ce484222325ull);

// --- binary IO helpers ----------------------------------------------------

void append_u32(std::string& out, uint32_t v);
void append_u64(std::string& out, uint64_t v);
uint32_t read_u32(const std::string& buf, size_t& pos);
uint64_t read_u64(const std::string& buf, size_t& pos);

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);

}  // namespace ceae
