#include "neuvis/params.hpp"

#include <cmath>

#include "neuvis/errors.hpp"
#include "neuvis/tensor_file.hpp"

namespace neuvis {

Mat& ParamStore::add(const std::string& name, const Mat& init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter: " + name);
  ParamEntry e;
  e.name = name;
  e.value = init;
  e.grad = Mat::Zero(init.rows(), init.cols());
  e.m = Mat::Zero(init.rows(), init.cols());
  e.v = Mat::Zero(init.rows(), init.cols());
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

ParamEntry& ParamStore::entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second];
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second];
}

Mat& ParamStore::at(const std::string& name) { return entry(name).value; }
const Mat& ParamStore::at(const std::string& name) const { return entry(name).value; }
Mat& ParamStore::grad(const std::string& name) { return entry(name).grad; }
bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.grad.setZero();
}

void ParamStore::adam_step(const AdamConfig& cfg) {
  ++step_;
  const auto t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& e : entries_) {
    e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * e.grad;
    e.v = cfg.beta2 * e.v.array() + (1.0 - cfg.beta2) * e.grad.array().square();
    Mat m_hat = e.m / bc1;
    Mat v_hat = e.v / bc2;
    e.value.array() -=
        cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
  }
}

std::size_t ParamStore::total_parameters() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& e : entries_)
    if (!e.value.allFinite()) return false;
  return true;
}

std::string ParamStore::fingerprint() const {
  Hasher h;
  h.str("params-v1");
  h.i64(step_);
  for (const auto& e : entries_) {
    h.str(e.name);
    h.mat(e.value);
  }
  return hex64(h.digest());
}

void ParamStore::save(const std::string& path, const KvList& extra_meta) const {
  TensorFile tf;
  tf.set_meta("format", "checkpoint-v1");
  tf.set_meta("step", std::to_string(step_));
  std::vector<std::string> names;
  for (const auto& e : entries_) names.push_back(e.name);
  tf.set_meta("params", join(names, ","));
  tf.set_meta("fingerprint", fingerprint());
  for (const auto& [k, v] : extra_meta) tf.set_meta(k, v);
  for (const auto& e : entries_) {
    tf.add_matrix(e.name, e.value);
    tf.add_matrix(e.name + ".m", e.m);
    tf.add_matrix(e.name + ".v", e.v);
  }
  tf.save(path);
}

ParamStore ParamStore::load(const std::string& path, KvList* meta_out) {
  TensorFile tf = TensorFile::load(path);
  if (tf.meta_get_or("format", "") != "checkpoint-v1")
    throw DataError("not a checkpoint file: " + path);
  ParamStore ps;
  ps.step_ = parse_int(tf.meta_get("step"));
  for (const auto& name : split(tf.meta_get("params"), ',')) {
    ps.add(name, tf.get(name).as_matrix());
    ps.entry(name).m = tf.get(name + ".m").as_matrix();
    ps.entry(name).v = tf.get(name + ".v").as_matrix();
  }
  if (ps.fingerprint() != tf.meta_get("fingerprint"))
    throw DataError("checkpoint fingerprint mismatch: " + path);
  if (meta_out) *meta_out = tf.meta;
  return ps;
}

Graph::Id GraphBinder::operator()(const std::string& name) {
  for (const auto& [n, id] : bound_)
    if (n == name) return id;
  Graph::Id id = g_.leaf(params_.at(name), true);
  bound_.emplace_back(name, id);
  return id;
}

void GraphBinder::accumulate_grads() {
  for (const auto& [name, id] : bound_) {
    if (!g_.has_grad(id)) continue;  // parameter unused by this loss
    params_.grad(name) += g_.grad(id);
  }
}

Mat glorot_init(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  const double sigma =
      std::sqrt(2.0 / static_cast<double>(rows + cols));
  return rng.gaussian_mat(rows, cols, sigma);
}

Mat gaussian_init(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sigma) {
  return rng.gaussian_mat(rows, cols, sigma);
}

}  // namespace neuvis
