#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>

#include "neuvis/errors.hpp"
#include "neuvis/eval.hpp"
#include "neuvis/preprocess.hpp"
#include "neuvis/synthetic.hpp"
#include "neuvis/train.hpp"

using namespace neuvis;
namespace fs = std::filesystem;

namespace {

struct Setup {
  SyntheticSpec spec;
  TrialSet train_full;  // repetition-averaged training trials
  TrialSet test_avg;
  EmbeddingTable table;
};

Setup make_setup(double noise = 0.0, std::uint64_t seed = 1) {
  Setup s;
  s.spec.n_categories = 10;
  s.spec.n_test_categories = 5;
  s.spec.images_per_category = 4;
  s.spec.repetitions = 2;
  s.spec.channels = 8;
  s.spec.samples = 32;
  s.spec.embed_dim = 16;
  s.spec.noise_sigma = noise;
  s.spec.seed = seed;
  auto data = generate_synthetic(s.spec);
  s.train_full = average_repetitions(data.train);
  s.test_avg = average_repetitions(data.test);
  s.table = build_embedding_table(data.oracle);
  return s;
}

EncoderConfig small_encoder(const SyntheticSpec& spec) {
  EncoderConfig cfg;
  cfg.channels = spec.channels;
  cfg.samples = spec.samples;
  cfg.temporal_kernel = 5;
  cfg.temporal_filters = 8;
  cfg.spatial_filters = 8;
  cfg.pool = 4;
  cfg.feature_dim = 32;
  cfg.embed_dim = spec.embed_dim;
  cfg.attention = true;
  cfg.attention_heads = 2;
  cfg.attention_ffn = 16;
  cfg.seed = 7;
  return cfg;
}

AlignmentConfig fast_align(std::int64_t epochs, double lr = 3e-3,
                           std::int64_t batch_size = 32) {
  AlignmentConfig cfg;
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.batch_size = batch_size;
  cfg.val_count = 8;
  cfg.seed = 5;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("nv_train_" + tag + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("train") {

TEST_CASE("alignment config defaults, validation and round trip") {
  AlignmentConfig cfg;
  CHECK(cfg.alpha == 0.5);
  CHECK(cfg.beta == 2.0);
  CHECK(cfg.lr == 2e-4);
  CHECK(cfg.epochs == 100);
  CHECK(cfg.batch_size == 256);
  CHECK(cfg.tau_init == 0.07);
  CHECK(cfg.val_count == 740);
  CHECK_NOTHROW(cfg.validate());

  auto bad = cfg;
  bad.alpha = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.tau_init = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  auto round = AlignmentConfig::from_kv(cfg.to_kv());
  CHECK(round.alpha == cfg.alpha);
  CHECK(round.lr == cfg.lr);
  CHECK(round.val_count == cfg.val_count);
}

TEST_CASE("validation split is deterministic, disjoint and by sample") {
  auto s = make_setup();
  auto [train1, val1] = split_validation(s.train_full, 8, 11);
  auto [train2, val2] = split_validation(s.train_full, 8, 11);
  CHECK(val1.trials.size() == 8);
  CHECK(train1.trials.size() == s.train_full.trials.size() - 8);

  for (std::size_t i = 0; i < val1.trials.size(); ++i)
    CHECK(val1.trials[i].image_id == val2.trials[i].image_id);

  std::set<std::int64_t> val_ids;
  for (const auto& t : val1.trials) val_ids.insert(t.image_id);
  for (const auto& t : train1.trials) CHECK(val_ids.count(t.image_id) == 0);

  auto [train3, val3] = split_validation(s.train_full, 8, 12);
  bool same = val3.trials.size() == val1.trials.size();
  if (same)
    for (std::size_t i = 0; i < val1.trials.size(); ++i)
      same = same && val1.trials[i].image_id == val3.trials[i].image_id;
  CHECK(!same);  // different seed, different draw

  CHECK_THROWS_AS(split_validation(s.train_full, 0, 1), ConfigError);
  CHECK_THROWS_AS(
      split_validation(s.train_full,
                       static_cast<std::int64_t>(s.train_full.trials.size()), 1),
      ConfigError);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto s = make_setup();
  TableEmbeddingProvider provider(s.table);
  auto [tr, val] = split_validation(s.train_full, 8, 5);

  auto st = init_train_state(small_encoder(s.spec), fast_align(2, 0.0));
  std::vector<Mat> before;
  for (const auto& e : st.model.params().entries()) before.push_back(e.value);

  auto out = train_alignment(std::move(st), tr, val, provider);
  for (std::size_t i = 0; i < out.model.params().entries().size(); ++i)
    CHECK(out.model.params().entries()[i].value == before[i]);
  CHECK(out.next_epoch == 2);
  CHECK(out.has_best);
  CHECK(out.best_epoch == 1);  // equal metrics every epoch: tie goes latest
}

TEST_CASE("fixed seed reproduces the loss history bit for bit") {
  auto s = make_setup(0.2);
  TableEmbeddingProvider provider(s.table);
  auto [tr, val] = split_validation(s.train_full, 8, 5);

  auto run = [&](std::vector<StepRecord>& steps, std::vector<EpochRecord>& epochs) {
    auto st = init_train_state(small_encoder(s.spec), fast_align(3));
    TrainOptions opts;
    opts.step_records = &steps;
    opts.epoch_records = &epochs;
    return train_alignment(std::move(st), tr, val, provider, opts);
  };

  std::vector<StepRecord> sa, sb;
  std::vector<EpochRecord> ea, eb;
  auto ra = run(sa, ea);
  auto rb = run(sb, eb);

  REQUIRE(sa.size() == sb.size());
  REQUIRE(!sa.empty());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].loss.total == sb[i].loss.total);
    CHECK(sa[i].loss.clip_v == sb[i].loss.clip_v);
    CHECK(sa[i].tau == sb[i].tau);
  }
  REQUIRE(ea.size() == eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i)
    CHECK(ea[i].val_top1 == eb[i].val_top1);
  CHECK(ra.model.params().fingerprint() == rb.model.params().fingerprint());
}

TEST_CASE("training log is valid JSONL and byte-identical across reruns") {
  auto s = make_setup(0.1);
  TableEmbeddingProvider provider(s.table);
  auto [tr, val] = split_validation(s.train_full, 8, 5);
  TempDir tmp("log");

  auto run = [&](const std::string& name) {
    auto st = init_train_state(small_encoder(s.spec), fast_align(2));
    TrainOptions opts;
    opts.log_path = (tmp.path / name).string();
    train_alignment(std::move(st), tr, val, provider, opts);
    return opts.log_path;
  };
  auto log1 = run("a.jsonl");
  auto log2 = run("b.jsonl");
  CHECK(hash_file(log1) == hash_file(log2));

  std::ifstream in(log1);
  std::string line;
  std::size_t steps = 0, vals = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    REQUIRE(j.contains("event"));
    if (j["event"] == "step") {
      ++steps;
      CHECK(j.contains("total"));
      CHECK(j.contains("tau"));
      CHECK(j.contains("clip_t1"));
    } else if (j["event"] == "val") {
      ++vals;
      CHECK(j.contains("top1"));
    }
  }
  CHECK(steps == 2u * 1u);  // 32 train samples, batch 32 -> 1 step per epoch
  CHECK(vals == 2u);
}

TEST_CASE("non-finite loss aborts with a diagnostic snapshot") {
  auto s = make_setup();
  TableEmbeddingProvider provider(s.table);
  auto [tr, val] = split_validation(s.train_full, 8, 5);
  TempDir tmp("nan");

  auto st = init_train_state(small_encoder(s.spec), fast_align(2));
  st.model.params().at("enc.tconv.w")(0, 0) = std::nan("");

  TrainOptions opts;
  opts.snapshot_dir = (tmp.path / "snap").string();
  CHECK_THROWS_AS(
      train_alignment(std::move(st), tr, val, provider, opts), NumericError);
  CHECK(fs::exists(fs::path(opts.snapshot_dir) / "diverged.nvt"));

  KvList meta;
  ParamStore::load((fs::path(opts.snapshot_dir) / "diverged.nvt").string(), &meta);
  CHECK(kv_get(meta, "diagnostic") == "non-finite-loss");
  CHECK(!kv_get(meta, "batch_image_ids").empty());
}

TEST_CASE("interrupted training resumes bit-exactly") {
  auto s = make_setup(0.15);
  TableEmbeddingProvider provider(s.table);
  auto [tr, val] = split_validation(s.train_full, 8, 5);
  TempDir tmp("resume");

  std::vector<StepRecord> full_steps;
  TrainOptions full_opts;
  full_opts.step_records = &full_steps;
  auto full = train_alignment(init_train_state(small_encoder(s.spec), fast_align(4)),
                              tr, val, provider, full_opts);

  auto part_cfg = fast_align(4);
  auto st = init_train_state(small_encoder(s.spec), part_cfg);
  st.cfg.epochs = 2;
  std::vector<StepRecord> part_steps;
  TrainOptions part_opts;
  part_opts.step_records = &part_steps;
  auto mid = train_alignment(std::move(st), tr, val, provider, part_opts);
  CHECK(mid.next_epoch == 2);

  mid.save((tmp.path / "state").string());
  auto resumed = TrainState::load((tmp.path / "state").string());
  CHECK(resumed.next_epoch == 2);
  CHECK(resumed.model.params().fingerprint() == mid.model.params().fingerprint());
  CHECK(resumed.best_val_top1 == mid.best_val_top1);

  resumed.cfg.epochs = 4;
  auto done = train_alignment(std::move(resumed), tr, val, provider, part_opts);

  CHECK(done.model.params().fingerprint() == full.model.params().fingerprint());
  CHECK(done.best_val_top1 == full.best_val_top1);
  CHECK(done.best_epoch == full.best_epoch);
  REQUIRE(part_steps.size() == full_steps.size());
  for (std::size_t i = 0; i < full_steps.size(); ++i) {
    CHECK(part_steps[i].loss.total == full_steps[i].loss.total);
    CHECK(part_steps[i].step == full_steps[i].step);
  }
}

TEST_CASE("zero-noise synthetic run reaches perfect validation retrieval") {
  auto s = make_setup(0.0);
  TableEmbeddingProvider provider(s.table);
  auto [tr, val] = split_validation(s.train_full, 8, 5);

  auto st = init_train_state(small_encoder(s.spec), fast_align(600, 1e-2, 8));
  auto done = train_alignment(std::move(st), tr, val, provider);

  REQUIRE(done.has_best);
  CHECK(done.best_val_top1 == 1.0);

  // The best checkpoint also classifies the unseen test categories.
  auto best = done.best_model();
  auto rep = evaluate_zeroshot(best, s.test_avg, provider);
  CHECK(rep.classification.top1 == 1.0);
  CHECK(rep.retrieval.top1 == 1.0);
}

TEST_CASE("gradient check: analytic vs central differences under 1e-4") {
  auto s = make_setup(0.1);
  TableEmbeddingProvider provider(s.table);

  // Small batch (B = 4) with reduced dimensions.
  TrialSet batch = s.train_full;
  batch.trials.resize(4);

  auto cfg = small_encoder(s.spec);
  auto model = AlignModel::init(cfg);
  auto report =
      finite_diff_check_alignment(model, batch, provider, fast_align(1), 3, 1e-5, 9);

  CHECK(report.max_rel_err < 1e-4);
  CHECK(!report.probes.empty());

  // Every parameter tensor was probed, including the temperature.
  std::set<std::string> seen;
  for (const auto& p : report.probes) seen.insert(p.name);
  CHECK(seen.count("log_tau") == 1);
  CHECK(seen.size() == model.params().entries().size());

  // Deterministic given the seed.
  auto model2 = AlignModel::init(cfg);
  auto report2 =
      finite_diff_check_alignment(model2, batch, provider, fast_align(1), 3, 1e-5, 9);
  CHECK(report.max_rel_err == report2.max_rel_err);
  REQUIRE(report.probes.size() == report2.probes.size());
  for (std::size_t i = 0; i < report.probes.size(); ++i) {
    CHECK(report.probes[i].name == report2.probes[i].name);
    CHECK(report.probes[i].index == report2.probes[i].index);
    CHECK(report.probes[i].fd == report2.probes[i].fd);
  }
}

TEST_CASE("gradients vanish at a perfectly aligned MSE-only optimum") {
  // If the projected outputs equal their targets exactly and alpha weights
  // only MSE terms, the analytic gradient of the quadratic is zero.
  ParamStore ps;
  ps.add("w", Mat::Identity(3, 3));
  const Mat x = Rng(3).gaussian_mat(4, 3);

  auto loss = [&](bool with_grads) {
    Graph g;
    GraphBinder bind(g, ps);
    auto pred = g.matmul(g.leaf(x), bind("w"));
    auto obj = build_mse(g, pred, g.leaf(x));  // target = x, w = I fits exactly
    if (with_grads) {
      g.backward(obj);
      bind.accumulate_grads();
    }
    return g.scalar(obj);
  };

  auto report = check_gradients(ps, loss, 4, 1e-5, 3);
  CHECK(loss(false) == 0.0);
  for (const auto& p : report.probes) CHECK(std::abs(p.analytic) < 1e-12);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("empty validation set is a config error") {
  auto s = make_setup();
  TableEmbeddingProvider provider(s.table);
  TrialSet empty = s.train_full;
  empty.trials.clear();
  auto st = init_train_state(small_encoder(s.spec), fast_align(1));
  CHECK_THROWS_AS(
      train_alignment(std::move(st), s.train_full, empty, provider), ConfigError);
}

}  // TEST_SUITE
