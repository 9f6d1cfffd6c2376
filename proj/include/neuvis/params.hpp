#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "neuvis/common.hpp"
#include "neuvis/graph.hpp"

namespace neuvis {

struct ParamEntry {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;  // first adaptive moment
  Mat v;  // second adaptive moment
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named parameter tensors with optimizer state. Entry order is creation
// order and is preserved across save/load, so runs resume bit-exactly.
class ParamStore {
 public:
  Mat& add(const std::string& name, const Mat& init);
  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;
  Mat& grad(const std::string& name);
  bool has(const std::string& name) const;

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  void zero_grads();
  void adam_step(const AdamConfig& cfg);
  std::int64_t step() const { return step_; }

  std::size_t total_parameters() const;
  bool all_finite() const;
  std::string fingerprint() const;

  void save(const std::string& path, const KvList& extra_meta = {}) const;
  static ParamStore load(const std::string& path, KvList* meta_out = nullptr);

 private:
  ParamEntry& entry(const std::string& name);
  const ParamEntry& entry(const std::string& name) const;

  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

// Binds parameters into a graph as gradient-tracked leaves and harvests
// their gradients back after a backward pass.
class GraphBinder {
 public:
  GraphBinder(Graph& g, ParamStore& params) : g_(g), params_(params) {}

  Graph::Id operator()(const std::string& name);
  void accumulate_grads();

 private:
  Graph& g_;
  ParamStore& params_;
  std::vector<std::pair<std::string, Graph::Id>> bound_;
};

// Deterministic initializers.
Mat glorot_init(Rng& rng, Eigen::Index rows, Eigen::Index cols);
Mat gaussian_init(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sigma);

}  // namespace neuvis
