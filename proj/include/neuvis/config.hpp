#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "neuvis/ablation.hpp"
#include "neuvis/encoder.hpp"
#include "neuvis/prior.hpp"
#include "neuvis/qformer.hpp"
#include "neuvis/train.hpp"
#include "neuvis/types.hpp"

namespace neuvis {

// Flat dotted-key text format, one "section.key = value" per line.
// '#' starts a comment; blank lines are ignored. Later lines win.
struct ConfigMap {
  KvList entries;

  static ConfigMap parse_string(const std::string& text,
                                const std::string& origin = "<string>");
  static ConfigMap parse_file(const std::string& path);

  const std::string* find(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  // NEUVIS_<SECTION>_<KEY>=v overrides "section.key" (the first underscore
  // after the prefix separates the section; the rest maps lowercased, so
  // NEUVIS_TRAINING_BATCH_SIZE targets training.batch_size).
  void apply_env_overrides();
};

// Declares the known keys; applying a ConfigMap rejects anything else.
class Schema {
 public:
  using Setter = std::function<void(const std::string&)>;
  void add(const std::string& key, Setter setter);
  void apply(const ConfigMap& map) const;

 private:
  std::map<std::string, Setter> setters_;
};

struct AblationSettings {
  AblationMode mode = AblationMode::expanding;
  double step_ms = 100.0;
  double sliding_width_ms = 100.0;
  CellStrategy strategy = CellStrategy::retrain;
  std::string channel_groups_path;
  // "occipital+frontal,occipital" declares two region sets
  std::vector<std::vector<std::string>> spatial_region_sets;
};

// One file drives a whole run; every derived seed comes from `seed`.
struct ExperimentConfig {
  std::string out_dir = "run-out";
  std::uint64_t seed = 1;

  std::string dataset_dir;  // load this split dir; empty -> generate synthetic
  SyntheticSpec synth;
  PreprocessConfig preprocess;
  EncoderConfig encoder;      // channels/samples are set from data at run time
  AlignmentConfig training;
  AblationSettings ablation;
  QFormerConfig qformer;      // d_in/d_prompt/d_pool default to embed dims
  PriorConfig prior;
  QFormerTrainConfig qformer_train;
  PriorTrainConfig prior_train;

  // Parses, schema-checks, and derives the per-module seeds (seed + fixed
  // offsets; documented in the README).
  static ExperimentConfig from_map(const ConfigMap& map);

  // Every resolved key with its final value, for the manifest echo.
  KvList echo() const;

  void validate() const;
};

// Reproducibility record written at the end of every command.
struct RunManifest {
  std::string command;
  KvList config_echo;
  KvList input_hashes;  // logical name -> content hash
  KvList checkpoints;   // logical name -> path
  KvList reports;       // logical name -> path
  KvList fingerprints;  // model name -> parameter fingerprint
  std::vector<std::pair<std::string, double>> timings_sec;

  void save(const std::string& path) const;  // pretty JSON, atomic
  static RunManifest load(const std::string& path);
};

}  // namespace neuvis
