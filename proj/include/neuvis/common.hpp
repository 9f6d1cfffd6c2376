#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace neuvis {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MatF = Eigen::MatrixXf;

// ------------------------------------------------------------------ hashing

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

// Streaming FNV-1a, used for fingerprints of models, providers and files.
class Hasher {
 public:
  Hasher& bytes(const void* data, std::size_t n) {
    h_ = fnv1a(data, n, h_);
    return *this;
  }
  Hasher& str(const std::string& s) { return bytes(s.data(), s.size()); }
  Hasher& u64(std::uint64_t v) { return bytes(&v, sizeof(v)); }
  Hasher& i64(std::int64_t v) { return bytes(&v, sizeof(v)); }
  Hasher& f64(double v) { return bytes(&v, sizeof(v)); }
  Hasher& mat(const Mat& m) {
    i64(m.rows());
    i64(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) f64(m(r, c));
    return *this;
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = kFnvOffset;
};

std::string hex64(std::uint64_t v);
std::uint64_t hash_file(const std::filesystem::path& p);

// ---------------------------------------------------------------------- rng

// Seeded RNG with a fixed gaussian implementation so that streams do not
// depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, n), rejection-sampled (unbiased)
  std::uint64_t uniform_int(std::uint64_t n);

  // standard normal via Box-Muller (one draw per call, no cached spare)
  double gaussian();

  Mat gaussian_mat(Eigen::Index rows, Eigen::Index cols, double sigma = 1.0);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // independent stream derived from the construction seed and a salt
  Rng fork(std::uint64_t salt) const {
    return Rng(seed_ ^ (salt * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// -------------------------------------------------------------- string utils

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char delim);
std::string join(const std::vector<std::string>& parts, const std::string& sep);
bool starts_with(const std::string& s, const std::string& prefix);
std::string to_lower(std::string s);
double parse_double(const std::string& s);   // classic locale, strict
std::int64_t parse_int(const std::string& s);
bool parse_bool(const std::string& s);       // true/false/1/0/yes/no

// fixed-precision formatting (deterministic, locale-free)
std::string format_double(double v, int precision = 6);

// ------------------------------------------------------------- kv text files

// "key=value" lines, '#' comments, blank lines ignored. Order preserved.
using KvList = std::vector<std::pair<std::string, std::string>>;

KvList read_kv_file(const std::filesystem::path& p);
void write_kv_file(const std::filesystem::path& p, const KvList& kv);
const std::string* kv_find(const KvList& kv, const std::string& key);
const std::string& kv_get(const KvList& kv, const std::string& key);

// atomic write: write to tmp file in the same directory, then rename
void write_file_atomic(const std::filesystem::path& p, const std::string& content);

}  // namespace neuvis
