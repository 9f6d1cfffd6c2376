#include "neuvis/bundle.hpp"

#include <cmath>
#include <cstring>

#include "neuvis/errors.hpp"
#include "neuvis/tensor_file.hpp"

namespace neuvis {

namespace {

constexpr const char* kFormat = "condition-bundle-v1";

void quantize_f32(Mat& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = static_cast<double>(static_cast<float>(m(i, j)));
}

void require_trained(const ParamStore& ps, const std::string& what) {
  if (ps.entries().empty())
    throw ConfigError(what + " holds no parameters; train or load it first");
}

TensorEntry f32_entry(const std::string& name, std::vector<std::int64_t> shape,
                      const std::vector<float>& values) {
  TensorEntry e;
  e.name = name;
  e.dtype = Dtype::f32;
  e.shape = std::move(shape);
  e.raw.resize(sizeof(float) * values.size());
  std::memcpy(e.raw.data(), values.data(), e.raw.size());
  return e;
}

const float* f32_payload(const TensorEntry& e, std::size_t expected) {
  if (e.dtype != Dtype::f32)
    throw DataError("tensor " + e.name + " is not float32");
  if (e.element_count() != expected)
    throw DataError("tensor " + e.name + " has an unexpected element count");
  return reinterpret_cast<const float*>(e.raw.data());
}

}  // namespace

BundleSet export_conditions(const TrialSet& trials, const AlignModel& align,
                            const DiffusionPrior& prior, const QFormer& qformer) {
  if (trials.trials.empty()) throw DataError("no trials to export");
  require_trained(align.params(), "alignment model");
  require_trained(prior.params(), "prior");
  require_trained(qformer.params(), "q-former");

  const Eigen::Index d = align.config().embed_dim;
  if (prior.config().dim != d)
    throw ConfigError("prior dim does not match the alignment embedding width");
  if (qformer.config().d_in != d)
    throw ConfigError("q-former input width does not match the alignment embedding width");

  std::vector<const NeuralTrial*> batch;
  batch.reserve(trials.trials.size());
  for (const auto& t : trials.trials) batch.push_back(&t);

  Mat features = align.encode(batch);
  Mat image_emb = prior.predict(align.project_visual(features));
  QFormerOutput qf = qformer.forward(align.project_semantic(features));
  quantize_f32(image_emb);
  quantize_f32(qf.prompts);
  quantize_f32(qf.pooled);
  if (!image_emb.allFinite() || !qf.prompts.allFinite() || !qf.pooled.allFinite())
    throw NumericError("exported conditioning values are not finite");

  BundleSet set;
  set.dim = d;
  set.n_queries = qformer.config().n_queries;
  set.d_prompt = qformer.config().d_prompt;
  set.d_pool = qformer.config().d_pool;
  set.align_fingerprint = align.params().fingerprint();
  set.prior_fingerprint = prior.params().fingerprint();
  set.qformer_fingerprint = qformer.params().fingerprint();

  const auto n = static_cast<Eigen::Index>(trials.trials.size());
  set.bundles.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const NeuralTrial& t = trials.trials[static_cast<std::size_t>(i)];
    ConditionBundle& b = set.bundles[static_cast<std::size_t>(i)];
    b.subject_id = t.subject_id;
    b.category_id = t.category_id;
    b.image_id = t.image_id;
    b.repetition = t.repetition;
    b.image_embedding = image_emb.row(i);
    b.prompt_embeddings = qf.prompts.middleRows(i * set.n_queries, set.n_queries);
    b.pooled_prompt = qf.pooled.row(i);
  }
  return set;
}

BundleSet export_conditions(const TrialSet& trials, const AlignModel& align,
                            const DiffusionPrior& prior, const QFormer& qformer,
                            const std::string& path) {
  BundleSet set = export_conditions(trials, align, prior, qformer);
  save_bundles(set, path);
  return set;
}

void save_bundles(const BundleSet& set, const std::string& path) {
  const auto n = static_cast<Eigen::Index>(set.bundles.size());
  TensorFile tf;
  tf.set_meta("format", kFormat);
  tf.set_meta("count", std::to_string(n));
  tf.set_meta("dim", std::to_string(set.dim));
  tf.set_meta("n_queries", std::to_string(set.n_queries));
  tf.set_meta("d_prompt", std::to_string(set.d_prompt));
  tf.set_meta("d_pool", std::to_string(set.d_pool));
  tf.set_meta("align_fingerprint", set.align_fingerprint);
  tf.set_meta("prior_fingerprint", set.prior_fingerprint);
  tf.set_meta("qformer_fingerprint", set.qformer_fingerprint);

  std::vector<float> img, prompts, pooled;
  std::vector<std::int64_t> cats, imgs, reps;
  for (Eigen::Index i = 0; i < n; ++i) {
    const ConditionBundle& b = set.bundles[static_cast<std::size_t>(i)];
    if (b.image_embedding.cols() != set.dim ||
        b.prompt_embeddings.rows() != set.n_queries ||
        b.prompt_embeddings.cols() != set.d_prompt ||
        b.pooled_prompt.cols() != set.d_pool)
      throw DataError("bundle shapes do not match the set header");
    tf.set_meta("subject" + std::to_string(i), b.subject_id);
    cats.push_back(b.category_id);
    imgs.push_back(b.image_id);
    reps.push_back(b.repetition);
    for (Eigen::Index j = 0; j < set.dim; ++j)
      img.push_back(static_cast<float>(b.image_embedding(j)));
    for (Eigen::Index q = 0; q < set.n_queries; ++q)
      for (Eigen::Index j = 0; j < set.d_prompt; ++j)
        prompts.push_back(static_cast<float>(b.prompt_embeddings(q, j)));
    for (Eigen::Index j = 0; j < set.d_pool; ++j)
      pooled.push_back(static_cast<float>(b.pooled_prompt(j)));
  }

  tf.tensors.push_back(f32_entry("image_embeddings", {n, set.dim}, img));
  tf.tensors.push_back(
      f32_entry("prompt_embeddings", {n, set.n_queries, set.d_prompt}, prompts));
  tf.tensors.push_back(f32_entry("pooled_embeddings", {n, set.d_pool}, pooled));
  tf.add_i64("category_ids", cats);
  tf.add_i64("image_ids", imgs);
  tf.add_i64("repetitions", reps);
  tf.save(path);
}

BundleSet load_bundles(const std::string& path) {
  TensorFile tf = TensorFile::load(path);
  if (tf.meta_get_or("format", "") != kFormat)
    throw DataError("file is not a condition bundle set: " + path);

  BundleSet set;
  const auto n = static_cast<Eigen::Index>(parse_int(tf.meta_get("count")));
  set.dim = parse_int(tf.meta_get("dim"));
  set.n_queries = parse_int(tf.meta_get("n_queries"));
  set.d_prompt = parse_int(tf.meta_get("d_prompt"));
  set.d_pool = parse_int(tf.meta_get("d_pool"));
  set.align_fingerprint = tf.meta_get("align_fingerprint");
  set.prior_fingerprint = tf.meta_get("prior_fingerprint");
  set.qformer_fingerprint = tf.meta_get("qformer_fingerprint");

  const std::size_t count = static_cast<std::size_t>(n);
  const float* img = f32_payload(tf.get("image_embeddings"),
                                 count * static_cast<std::size_t>(set.dim));
  const float* prompts = f32_payload(
      tf.get("prompt_embeddings"),
      count * static_cast<std::size_t>(set.n_queries * set.d_prompt));
  const float* pooled = f32_payload(tf.get("pooled_embeddings"),
                                    count * static_cast<std::size_t>(set.d_pool));
  std::vector<std::int64_t> cats = tf.get("category_ids").as_i64();
  std::vector<std::int64_t> imgs = tf.get("image_ids").as_i64();
  std::vector<std::int64_t> reps = tf.get("repetitions").as_i64();
  if (cats.size() != count || imgs.size() != count || reps.size() != count)
    throw DataError("bundle id tensors do not match the declared count");

  set.bundles.resize(count);
  for (Eigen::Index i = 0; i < n; ++i) {
    ConditionBundle& b = set.bundles[static_cast<std::size_t>(i)];
    b.subject_id = tf.meta_get("subject" + std::to_string(i));
    b.category_id = cats[static_cast<std::size_t>(i)];
    b.image_id = imgs[static_cast<std::size_t>(i)];
    b.repetition = reps[static_cast<std::size_t>(i)];
    b.image_embedding.resize(set.dim);
    for (Eigen::Index j = 0; j < set.dim; ++j)
      b.image_embedding(j) = img[i * set.dim + j];
    b.prompt_embeddings.resize(set.n_queries, set.d_prompt);
    for (Eigen::Index q = 0; q < set.n_queries; ++q)
      for (Eigen::Index j = 0; j < set.d_prompt; ++j)
        b.prompt_embeddings(q, j) =
            prompts[(i * set.n_queries + q) * set.d_prompt + j];
    b.pooled_prompt.resize(set.d_pool);
    for (Eigen::Index j = 0; j < set.d_pool; ++j)
      b.pooled_prompt(j) = pooled[i * set.d_pool + j];
  }
  return set;
}

}  // namespace neuvis
