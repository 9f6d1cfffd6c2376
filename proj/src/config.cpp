#include "neuvis/config.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>

#include "neuvis/errors.hpp"

extern "C" char** environ;

namespace neuvis {

namespace {

using nlohmann::json;

constexpr const char* kEnvPrefix = "NEUVIS_";

std::string fmt(double v) { return format_double(v, 15); }

std::string join_ints(const std::vector<std::int64_t>& v) {
  std::vector<std::string> parts;
  for (auto x : v) parts.push_back(std::to_string(x));
  return join(parts, ",");
}

std::vector<std::int64_t> parse_int_list(const std::string& s) {
  std::vector<std::int64_t> out;
  if (trim(s).empty()) return out;
  for (const auto& tok : split(s, ',')) out.push_back(parse_int(trim(tok)));
  return out;
}

// "a+b,c" -> {{a, b}, {c}}
std::vector<std::vector<std::string>> parse_region_sets(const std::string& s) {
  std::vector<std::vector<std::string>> out;
  if (trim(s).empty()) return out;
  for (const auto& set_tok : split(s, ',')) {
    std::vector<std::string> regions;
    for (const auto& r : split(set_tok, '+')) {
      const std::string name = trim(r);
      if (name.empty()) throw ConfigError("empty region name in region sets");
      regions.push_back(name);
    }
    out.push_back(std::move(regions));
  }
  return out;
}

std::string region_sets_to_string(const std::vector<std::vector<std::string>>& sets) {
  std::vector<std::string> parts;
  for (const auto& s : sets) parts.push_back(join(s, "+"));
  return join(parts, ",");
}

std::string baseline_to_string(const PreprocessConfig& p) {
  if (p.baseline_ms)
    return fmt(p.baseline_ms->start_ms) + ":" + fmt(p.baseline_ms->end_ms);
  return p.baseline_auto ? "auto" : "none";
}

void baseline_from_string(PreprocessConfig& p, const std::string& s) {
  const std::string v = trim(s);
  if (v == "auto") {
    p.baseline_auto = true;
    p.baseline_ms.reset();
    return;
  }
  if (v == "none") {
    p.baseline_auto = false;
    p.baseline_ms.reset();
    return;
  }
  const auto parts = split(v, ':');
  if (parts.size() != 2)
    throw ConfigError("baseline must be 'auto', 'none', or '<start>:<end>'");
  p.baseline_auto = false;
  p.baseline_ms = MsInterval{parse_double(trim(parts[0])), parse_double(trim(parts[1]))};
}

KvList json_to_kv(const json& j) {
  KvList kv;
  for (auto it = j.begin(); it != j.end(); ++it)
    kv.emplace_back(it.key(), it.value().get<std::string>());
  return kv;
}

json kv_to_json(const KvList& kv) {
  json j = json::object();
  for (const auto& [k, v] : kv) j[k] = v;
  return j;
}

}  // namespace

ConfigMap ConfigMap::parse_string(const std::string& text,
                                  const std::string& origin) {
  ConfigMap map;
  std::int64_t lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key.find(' ') != std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": malformed key");
    map.set(key, value);
  }
  return map;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_string(text, path);
}

const std::string* ConfigMap::find(const std::string& key) const {
  return kv_find(entries, key);
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries)
    if (k == key) {
      v = value;
      return;
    }
  entries.emplace_back(key, value);
}

void ConfigMap::apply_env_overrides() {
  for (char** env = environ; *env != nullptr; ++env) {
    const std::string var(*env);
    if (!starts_with(var, kEnvPrefix)) continue;
    const auto eq = var.find('=');
    if (eq == std::string::npos) continue;
    std::string name = var.substr(std::string(kEnvPrefix).size(),
                                  eq - std::string(kEnvPrefix).size());
    const std::string value = var.substr(eq + 1);
    if (name.empty()) continue;
    const auto us = name.find('_');
    std::string key;
    if (us == std::string::npos) {
      key = to_lower(name);
    } else {
      key = to_lower(name.substr(0, us)) + "." + to_lower(name.substr(us + 1));
    }
    set(key, value);
  }
}

void Schema::add(const std::string& key, Setter setter) {
  if (!setters_.emplace(key, std::move(setter)).second)
    throw ConfigError("schema declares duplicate key: " + key);
}

void Schema::apply(const ConfigMap& map) const {
  for (const auto& [key, value] : map.entries) {
    const auto it = setters_.find(key);
    if (it == setters_.end()) throw ConfigError("unknown config key: " + key);
    try {
      it->second(value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config key " + key + ": " + e.what());
    }
  }
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& map) {
  ExperimentConfig c;
  Schema s;

  auto str = [](std::string& field) {
    return [&field](const std::string& v) { field = v; };
  };
  auto i64 = [](auto& field) {
    return [&field](const std::string& v) {
      field = static_cast<std::decay_t<decltype(field)>>(parse_int(v));
    };
  };
  auto f64 = [](double& field) {
    return [&field](const std::string& v) { field = parse_double(v); };
  };
  auto boolean = [](bool& field) {
    return [&field](const std::string& v) { field = parse_bool(v); };
  };

  s.add("out", str(c.out_dir));
  s.add("seed", [&c](const std::string& v) {
    c.seed = static_cast<std::uint64_t>(parse_int(v));
  });

  s.add("dataset.dir", str(c.dataset_dir));
  s.add("dataset.categories", i64(c.synth.n_categories));
  s.add("dataset.test_categories", i64(c.synth.n_test_categories));
  s.add("dataset.images_per_category", i64(c.synth.images_per_category));
  s.add("dataset.repetitions", i64(c.synth.repetitions));
  s.add("dataset.channels", i64(c.synth.channels));
  s.add("dataset.samples", i64(c.synth.samples));
  s.add("dataset.embed_dim", i64(c.synth.embed_dim));
  s.add("dataset.sample_rate_hz", f64(c.synth.sample_rate_hz));
  s.add("dataset.noise_sigma", f64(c.synth.noise_sigma));
  s.add("dataset.inform_start_ms", f64(c.synth.inform_start_ms));
  s.add("dataset.inform_end_ms", f64(c.synth.inform_end_ms));
  s.add("dataset.inform_channels", [&c](const std::string& v) {
    c.synth.inform_channels = parse_int_list(v);
  });

  s.add("preprocess.target_rate_hz", f64(c.preprocess.target_rate_hz));
  s.add("preprocess.window_start_ms", f64(c.preprocess.window_start_ms));
  s.add("preprocess.window_end_ms", f64(c.preprocess.window_end_ms));
  s.add("preprocess.baseline", [&c](const std::string& v) {
    baseline_from_string(c.preprocess, v);
  });
  s.add("preprocess.noise_normalize", boolean(c.preprocess.noise_normalize));
  s.add("preprocess.average_repetitions",
        boolean(c.preprocess.average_repetitions));

  s.add("model.temporal_kernel", i64(c.encoder.temporal_kernel));
  s.add("model.temporal_filters", i64(c.encoder.temporal_filters));
  s.add("model.spatial_filters", i64(c.encoder.spatial_filters));
  s.add("model.pool", i64(c.encoder.pool));
  s.add("model.feature_dim", i64(c.encoder.feature_dim));
  s.add("model.embed_dim", i64(c.encoder.embed_dim));
  s.add("model.attention", boolean(c.encoder.attention));
  s.add("model.attention_heads", i64(c.encoder.attention_heads));
  s.add("model.attention_ffn", i64(c.encoder.attention_ffn));
  s.add("model.dropout_rate", f64(c.encoder.dropout_rate));

  s.add("training.alpha", f64(c.training.alpha));
  s.add("training.beta", f64(c.training.beta));
  s.add("training.lr", f64(c.training.lr));
  s.add("training.epochs", i64(c.training.epochs));
  s.add("training.batch_size", i64(c.training.batch_size));
  s.add("training.tau_init", f64(c.training.tau_init));
  s.add("training.val_count", i64(c.training.val_count));

  s.add("eval.ablation_mode", [&c](const std::string& v) {
    c.ablation.mode = ablation_mode_from_name(trim(v));
  });
  s.add("eval.ablation_step_ms", f64(c.ablation.step_ms));
  s.add("eval.sliding_width_ms", f64(c.ablation.sliding_width_ms));
  s.add("eval.strategy", [&c](const std::string& v) {
    const std::string t = trim(v);
    if (t == "retrain")
      c.ablation.strategy = CellStrategy::retrain;
    else if (t == "mask_and_reuse")
      c.ablation.strategy = CellStrategy::mask_and_reuse;
    else
      throw ConfigError("eval.strategy must be retrain or mask_and_reuse");
  });
  s.add("eval.channel_groups", str(c.ablation.channel_groups_path));
  s.add("eval.spatial_regions", [&c](const std::string& v) {
    c.ablation.spatial_region_sets = parse_region_sets(v);
  });

  s.add("bridge.n_queries", i64(c.qformer.n_queries));
  s.add("bridge.d_model", i64(c.qformer.d_model));
  s.add("bridge.n_heads", i64(c.qformer.n_heads));
  s.add("bridge.ffn_dim", i64(c.qformer.ffn_dim));
  s.add("bridge.d_prompt", i64(c.qformer.d_prompt));
  s.add("bridge.d_pool", i64(c.qformer.d_pool));
  s.add("bridge.qformer_epochs", i64(c.qformer_train.epochs));
  s.add("bridge.qformer_lr", f64(c.qformer_train.lr));
  s.add("bridge.qformer_batch_size", i64(c.qformer_train.batch_size));
  s.add("bridge.prior_mode", [&c](const std::string& v) {
    c.prior.mode = prior_mode_from_name(trim(v));
  });
  s.add("bridge.prior_hidden_dim", i64(c.prior.hidden_dim));
  s.add("bridge.prior_steps", i64(c.prior.n_steps));
  s.add("bridge.prior_schedule", [&c](const std::string& v) {
    c.prior.schedule = schedule_from_name(trim(v));
  });
  s.add("bridge.prior_epochs", i64(c.prior_train.epochs));
  s.add("bridge.prior_lr", f64(c.prior_train.lr));
  s.add("bridge.prior_batch_size", i64(c.prior_train.batch_size));

  s.apply(map);

  // One master seed; fixed offsets per consumer so streams never collide.
  c.synth.seed = c.seed;
  c.encoder.seed = c.seed + 1;
  c.training.seed = c.seed + 2;
  c.qformer.seed = c.seed + 3;
  c.prior.seed = c.seed + 4;
  c.qformer_train.seed = c.seed + 5;
  c.prior_train.seed = c.seed + 6;

  // The bridge consumes alignment embeddings, so its input widths follow the
  // model section rather than being free knobs.
  c.qformer.d_in = c.encoder.embed_dim;
  c.prior.dim = c.encoder.embed_dim;

  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (out_dir.empty()) throw ConfigError("out must not be empty");
  if (dataset_dir.empty()) synth.validate();
  training.validate();
  qformer.validate();
  prior.validate();
  qformer_train.validate();
  prior_train.validate();
  if (!(ablation.step_ms > 0.0))
    throw ConfigError("eval.ablation_step_ms must be positive");
  if (!(ablation.sliding_width_ms > 0.0))
    throw ConfigError("eval.sliding_width_ms must be positive");
}

KvList ExperimentConfig::echo() const {
  KvList kv;
  kv.emplace_back("out", out_dir);
  kv.emplace_back("seed", std::to_string(seed));

  kv.emplace_back("dataset.dir", dataset_dir);
  kv.emplace_back("dataset.categories", std::to_string(synth.n_categories));
  kv.emplace_back("dataset.test_categories",
                  std::to_string(synth.n_test_categories));
  kv.emplace_back("dataset.images_per_category",
                  std::to_string(synth.images_per_category));
  kv.emplace_back("dataset.repetitions", std::to_string(synth.repetitions));
  kv.emplace_back("dataset.channels", std::to_string(synth.channels));
  kv.emplace_back("dataset.samples", std::to_string(synth.samples));
  kv.emplace_back("dataset.embed_dim", std::to_string(synth.embed_dim));
  kv.emplace_back("dataset.sample_rate_hz", fmt(synth.sample_rate_hz));
  kv.emplace_back("dataset.noise_sigma", fmt(synth.noise_sigma));
  kv.emplace_back("dataset.inform_start_ms", fmt(synth.inform_start_ms));
  kv.emplace_back("dataset.inform_end_ms", fmt(synth.inform_end_ms));
  kv.emplace_back("dataset.inform_channels", join_ints(synth.inform_channels));

  kv.emplace_back("preprocess.target_rate_hz", fmt(preprocess.target_rate_hz));
  kv.emplace_back("preprocess.window_start_ms", fmt(preprocess.window_start_ms));
  kv.emplace_back("preprocess.window_end_ms", fmt(preprocess.window_end_ms));
  kv.emplace_back("preprocess.baseline", baseline_to_string(preprocess));
  kv.emplace_back("preprocess.noise_normalize",
                  preprocess.noise_normalize ? "true" : "false");
  kv.emplace_back("preprocess.average_repetitions",
                  preprocess.average_repetitions ? "true" : "false");

  kv.emplace_back("model.temporal_kernel", std::to_string(encoder.temporal_kernel));
  kv.emplace_back("model.temporal_filters",
                  std::to_string(encoder.temporal_filters));
  kv.emplace_back("model.spatial_filters", std::to_string(encoder.spatial_filters));
  kv.emplace_back("model.pool", std::to_string(encoder.pool));
  kv.emplace_back("model.feature_dim", std::to_string(encoder.feature_dim));
  kv.emplace_back("model.embed_dim", std::to_string(encoder.embed_dim));
  kv.emplace_back("model.attention", encoder.attention ? "true" : "false");
  kv.emplace_back("model.attention_heads",
                  std::to_string(encoder.attention_heads));
  kv.emplace_back("model.attention_ffn", std::to_string(encoder.attention_ffn));
  kv.emplace_back("model.dropout_rate", fmt(encoder.dropout_rate));

  kv.emplace_back("training.alpha", fmt(training.alpha));
  kv.emplace_back("training.beta", fmt(training.beta));
  kv.emplace_back("training.lr", fmt(training.lr));
  kv.emplace_back("training.epochs", std::to_string(training.epochs));
  kv.emplace_back("training.batch_size", std::to_string(training.batch_size));
  kv.emplace_back("training.tau_init", fmt(training.tau_init));
  kv.emplace_back("training.val_count", std::to_string(training.val_count));

  kv.emplace_back("eval.ablation_mode", ablation_mode_name(ablation.mode));
  kv.emplace_back("eval.ablation_step_ms", fmt(ablation.step_ms));
  kv.emplace_back("eval.sliding_width_ms", fmt(ablation.sliding_width_ms));
  kv.emplace_back("eval.strategy", ablation.strategy == CellStrategy::retrain
                                       ? "retrain"
                                       : "mask_and_reuse");
  kv.emplace_back("eval.channel_groups", ablation.channel_groups_path);
  kv.emplace_back("eval.spatial_regions",
                  region_sets_to_string(ablation.spatial_region_sets));

  kv.emplace_back("bridge.n_queries", std::to_string(qformer.n_queries));
  kv.emplace_back("bridge.d_model", std::to_string(qformer.d_model));
  kv.emplace_back("bridge.n_heads", std::to_string(qformer.n_heads));
  kv.emplace_back("bridge.ffn_dim", std::to_string(qformer.ffn_dim));
  kv.emplace_back("bridge.d_prompt", std::to_string(qformer.d_prompt));
  kv.emplace_back("bridge.d_pool", std::to_string(qformer.d_pool));
  kv.emplace_back("bridge.qformer_epochs", std::to_string(qformer_train.epochs));
  kv.emplace_back("bridge.qformer_lr", fmt(qformer_train.lr));
  kv.emplace_back("bridge.qformer_batch_size",
                  std::to_string(qformer_train.batch_size));
  kv.emplace_back("bridge.prior_mode", prior_mode_name(prior.mode));
  kv.emplace_back("bridge.prior_hidden_dim", std::to_string(prior.hidden_dim));
  kv.emplace_back("bridge.prior_steps", std::to_string(prior.n_steps));
  kv.emplace_back("bridge.prior_schedule", schedule_name(prior.schedule));
  kv.emplace_back("bridge.prior_epochs", std::to_string(prior_train.epochs));
  kv.emplace_back("bridge.prior_lr", fmt(prior_train.lr));
  kv.emplace_back("bridge.prior_batch_size",
                  std::to_string(prior_train.batch_size));
  return kv;
}

void RunManifest::save(const std::string& path) const {
  json j;
  j["command"] = command;
  j["config"] = kv_to_json(config_echo);
  j["inputs"] = kv_to_json(input_hashes);
  j["checkpoints"] = kv_to_json(checkpoints);
  j["reports"] = kv_to_json(reports);
  j["fingerprints"] = kv_to_json(fingerprints);
  json timings = json::array();
  for (const auto& [name, sec] : timings_sec)
    timings.push_back(json::array({name, sec}));
  j["timings_sec"] = timings;
  write_file_atomic(path, j.dump(2) + "\n");
}

RunManifest RunManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw DataError("cannot open manifest: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("malformed manifest " + path + ": " + e.what());
  }
  RunManifest m;
  m.command = j.value("command", "");
  if (j.contains("config")) m.config_echo = json_to_kv(j["config"]);
  if (j.contains("inputs")) m.input_hashes = json_to_kv(j["inputs"]);
  if (j.contains("checkpoints")) m.checkpoints = json_to_kv(j["checkpoints"]);
  if (j.contains("reports")) m.reports = json_to_kv(j["reports"]);
  if (j.contains("fingerprints")) m.fingerprints = json_to_kv(j["fingerprints"]);
  if (j.contains("timings_sec"))
    for (const auto& t : j["timings_sec"])
      m.timings_sec.emplace_back(t.at(0).get<std::string>(),
                                 t.at(1).get<double>());
  return m;
}

}  // namespace neuvis
