#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "neuvis/common.hpp"

namespace neuvis {

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

enum class Dtype { f32, f64, i64 };

const char* dtype_name(Dtype d);
Dtype dtype_from_name(const std::string& s);
std::size_t dtype_size(Dtype d);

// One named tensor: row-major payload, little-endian on disk.
struct TensorEntry {
  std::string name;
  Dtype dtype = Dtype::f64;
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> raw;

  std::size_t element_count() const;
  Mat as_matrix() const;            // rank-2, any float dtype (widened to double)
  Vec as_vector() const;            // rank-1
  std::vector<std::int64_t> as_i64() const;
};

// Versioned container for named tensors plus textual metadata.
//
// Layout: a textual preamble terminated by a line "end", then raw payloads
// in tensor declaration order.
//
//   NVTC1
//   meta <key> <value-with-no-newlines>
//   tensor <name> <f32|f64|i64> <rank> <dim0> <dim1> ...
//   end
//   <payload bytes, concatenated>
struct TensorFile {
  KvList meta;
  std::vector<TensorEntry> tensors;

  void add_matrix(const std::string& name, const Mat& m, Dtype dtype = Dtype::f64);
  void add_matrix_f32(const std::string& name, const MatF& m);
  void add_vector(const std::string& name, const Vec& v, Dtype dtype = Dtype::f64);
  void add_i64(const std::string& name, const std::vector<std::int64_t>& v);
  void add_scalar(const std::string& name, double v);

  const TensorEntry* find(const std::string& name) const;
  const TensorEntry& get(const std::string& name) const;  // throws DataError
  bool has(const std::string& name) const { return find(name) != nullptr; }

  void set_meta(const std::string& key, const std::string& value);
  std::string meta_get(const std::string& key) const;  // throws DataError
  std::string meta_get_or(const std::string& key, const std::string& fallback) const;

  void save(const std::string& path) const;
  static TensorFile load(const std::string& path);
};

}  // namespace neuvis
