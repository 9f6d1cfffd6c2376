#include "neuvis/tensor_file.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "neuvis/errors.hpp"

namespace neuvis {

namespace {
constexpr const char* kMagic = "NVTC1";
}

const char* dtype_name(Dtype d) {
  switch (d) {
    case Dtype::f32: return "f32";
    case Dtype::f64: return "f64";
    case Dtype::i64: return "i64";
  }
  throw DataError("unknown dtype");
}

Dtype dtype_from_name(const std::string& s) {
  if (s == "f32") return Dtype::f32;
  if (s == "f64") return Dtype::f64;
  if (s == "i64") return Dtype::i64;
  throw DataError("unknown dtype name: " + s);
}

std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f32: return 4;
    case Dtype::f64: return 8;
    case Dtype::i64: return 8;
  }
  throw DataError("unknown dtype");
}

std::size_t TensorEntry::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw DataError("negative dimension in tensor " + name);
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Mat TensorEntry::as_matrix() const {
  if (shape.size() != 2) throw DataError("tensor " + name + " is not rank-2");
  const auto rows = static_cast<Eigen::Index>(shape[0]);
  const auto cols = static_cast<Eigen::Index>(shape[1]);
  Mat m(rows, cols);
  if (dtype == Dtype::f64) {
    const double* p = reinterpret_cast<const double*>(raw.data());
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = p[r * cols + c];
  } else if (dtype == Dtype::f32) {
    const float* p = reinterpret_cast<const float*>(raw.data());
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = p[r * cols + c];
  } else {
    throw DataError("tensor " + name + " is not a float matrix");
  }
  return m;
}

Vec TensorEntry::as_vector() const {
  if (shape.size() != 1) throw DataError("tensor " + name + " is not rank-1");
  const auto n = static_cast<Eigen::Index>(shape[0]);
  Vec v(n);
  if (dtype == Dtype::f64) {
    const double* p = reinterpret_cast<const double*>(raw.data());
    for (Eigen::Index i = 0; i < n; ++i) v[i] = p[i];
  } else if (dtype == Dtype::f32) {
    const float* p = reinterpret_cast<const float*>(raw.data());
    for (Eigen::Index i = 0; i < n; ++i) v[i] = p[i];
  } else {
    throw DataError("tensor " + name + " is not a float vector");
  }
  return v;
}

std::vector<std::int64_t> TensorEntry::as_i64() const {
  if (dtype != Dtype::i64) throw DataError("tensor " + name + " is not i64");
  std::vector<std::int64_t> v(element_count());
  std::memcpy(v.data(), raw.data(), raw.size());
  return v;
}

void TensorFile::add_matrix(const std::string& name, const Mat& m, Dtype dtype) {
  TensorEntry e;
  e.name = name;
  e.dtype = dtype;
  e.shape = {m.rows(), m.cols()};
  if (dtype == Dtype::f64) {
    e.raw.resize(sizeof(double) * e.element_count());
    double* p = reinterpret_cast<double*>(e.raw.data());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) p[r * m.cols() + c] = m(r, c);
  } else if (dtype == Dtype::f32) {
    e.raw.resize(sizeof(float) * e.element_count());
    float* p = reinterpret_cast<float*>(e.raw.data());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        p[r * m.cols() + c] = static_cast<float>(m(r, c));
  } else {
    throw DataError("add_matrix expects a float dtype");
  }
  tensors.push_back(std::move(e));
}

void TensorFile::add_matrix_f32(const std::string& name, const MatF& m) {
  TensorEntry e;
  e.name = name;
  e.dtype = Dtype::f32;
  e.shape = {m.rows(), m.cols()};
  e.raw.resize(sizeof(float) * e.element_count());
  float* p = reinterpret_cast<float*>(e.raw.data());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) p[r * m.cols() + c] = m(r, c);
  tensors.push_back(std::move(e));
}

void TensorFile::add_vector(const std::string& name, const Vec& v, Dtype dtype) {
  TensorEntry e;
  e.name = name;
  e.dtype = dtype;
  e.shape = {v.size()};
  if (dtype == Dtype::f64) {
    e.raw.resize(sizeof(double) * e.element_count());
    std::memcpy(e.raw.data(), v.data(), e.raw.size());
  } else if (dtype == Dtype::f32) {
    e.raw.resize(sizeof(float) * e.element_count());
    float* p = reinterpret_cast<float*>(e.raw.data());
    for (Eigen::Index i = 0; i < v.size(); ++i) p[i] = static_cast<float>(v[i]);
  } else {
    throw DataError("add_vector expects a float dtype");
  }
  tensors.push_back(std::move(e));
}

void TensorFile::add_i64(const std::string& name, const std::vector<std::int64_t>& v) {
  TensorEntry e;
  e.name = name;
  e.dtype = Dtype::i64;
  e.shape = {static_cast<std::int64_t>(v.size())};
  e.raw.resize(sizeof(std::int64_t) * v.size());
  std::memcpy(e.raw.data(), v.data(), e.raw.size());
  tensors.push_back(std::move(e));
}

void TensorFile::add_scalar(const std::string& name, double v) {
  Vec one(1);
  one[0] = v;
  add_vector(name, one, Dtype::f64);
}

const TensorEntry* TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const TensorEntry& TensorFile::get(const std::string& name) const {
  const TensorEntry* t = find(name);
  if (!t) throw DataError("missing tensor: " + name);
  return *t;
}

void TensorFile::set_meta(const std::string& key, const std::string& value) {
  for (auto& kv : meta) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  meta.emplace_back(key, value);
}

std::string TensorFile::meta_get(const std::string& key) const {
  const std::string* v = kv_find(meta, key);
  if (!v) throw DataError("missing meta key: " + key);
  return *v;
}

std::string TensorFile::meta_get_or(const std::string& key,
                                    const std::string& fallback) const {
  const std::string* v = kv_find(meta, key);
  return v ? *v : fallback;
}

void TensorFile::save(const std::string& path) const {
  std::ostringstream out;
  out << kMagic << "\n";
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \n") != std::string::npos ||
        v.find('\n') != std::string::npos)
      throw DataError("meta key/value must not contain spaces in key or newlines");
    out << "meta " << k << " " << v << "\n";
  }
  for (const auto& t : tensors) {
    if (t.name.find_first_of(" \n") != std::string::npos)
      throw DataError("tensor name must not contain whitespace: " + t.name);
    if (t.raw.size() != t.element_count() * dtype_size(t.dtype))
      throw DataError("tensor payload size mismatch: " + t.name);
    out << "tensor " << t.name << " " << dtype_name(t.dtype) << " "
        << t.shape.size();
    for (auto d : t.shape) out << " " << d;
    out << "\n";
  }
  out << "end\n";
  for (const auto& t : tensors)
    out.write(reinterpret_cast<const char*>(t.raw.data()),
              static_cast<std::streamsize>(t.raw.size()));
  write_file_atomic(path, out.str());
}

TensorFile TensorFile::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file: " + path);

  TensorFile tf;
  std::string line;
  if (!std::getline(in, line) || trim(line) != kMagic)
    throw DataError("bad magic in tensor file: " + path);

  while (std::getline(in, line)) {
    line = trim(line);
    if (line == "end") break;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      tf.meta.emplace_back(key, trim(value));
    } else if (tag == "tensor") {
      TensorEntry e;
      std::string dt;
      std::size_t rank = 0;
      ls >> e.name >> dt >> rank;
      if (!ls) throw DataError("malformed tensor header: " + line);
      e.dtype = dtype_from_name(dt);
      e.shape.resize(rank);
      for (std::size_t i = 0; i < rank; ++i) {
        ls >> e.shape[i];
        if (!ls) throw DataError("malformed tensor shape: " + line);
      }
      tf.tensors.push_back(std::move(e));
    } else {
      throw DataError("unknown line in tensor file header: " + line);
    }
  }
  if (trim(line) != "end") throw DataError("tensor file missing end marker: " + path);

  for (auto& t : tf.tensors) {
    t.raw.resize(t.element_count() * dtype_size(t.dtype));
    in.read(reinterpret_cast<char*>(t.raw.data()),
            static_cast<std::streamsize>(t.raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != t.raw.size())
      throw DataError("truncated payload for tensor " + t.name + " in " + path);
  }
  return tf;
}

}  // namespace neuvis
