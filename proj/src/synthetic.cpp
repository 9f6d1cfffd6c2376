#include "neuvis/synthetic.hpp"

#include <cmath>

#include "neuvis/errors.hpp"
#include "neuvis/tensor_file.hpp"

namespace neuvis {

namespace {
enum : std::uint64_t {
  kSaltCategories = 1,
  kSaltImages = 2,
  kSaltMixing = 3,
  kSaltBasis = 4,
  kSaltNoise = 5,
};
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();

  const Eigen::Index d = spec.embed_dim;
  const Eigen::Index d_cat = d / 2;
  const Eigen::Index c = spec.channels;
  const Eigen::Index t = spec.samples;
  const std::int64_t n_cats = spec.n_categories + spec.n_test_categories;
  const std::int64_t n_train_images = spec.n_categories * spec.images_per_category;
  const std::int64_t n_images = n_train_images + spec.n_test_categories;

  Rng root(spec.seed);

  Mat cat_latents(n_cats, d_cat);
  {
    Rng rng = root.fork(kSaltCategories);
    for (Eigen::Index k = 0; k < n_cats; ++k) {
      Vec v(d_cat);
      for (Eigen::Index j = 0; j < d_cat; ++j) v[j] = rng.gaussian();
      cat_latents.row(k) = v.normalized().transpose();
    }
  }

  SyntheticOracle oracle;
  oracle.image_latents.resize(n_images, d);
  oracle.category_latents = Mat::Zero(n_cats, d);
  oracle.category_latents.leftCols(d_cat) = cat_latents;

  std::vector<std::int64_t> image_category(static_cast<std::size_t>(n_images));
  {
    Rng rng = root.fork(kSaltImages);
    for (std::int64_t i = 0; i < n_images; ++i) {
      const std::int64_t cat = i < n_train_images
                                   ? i / spec.images_per_category
                                   : spec.n_categories + (i - n_train_images);
      image_category[static_cast<std::size_t>(i)] = cat;
      Vec w(d - d_cat);
      for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = rng.gaussian();
      w = 0.5 * w.normalized();
      oracle.image_latents.row(i).head(d_cat) = cat_latents.row(cat);
      oracle.image_latents.row(i).tail(d - d_cat) = w.transpose();
    }
  }
  oracle.image_ids.resize(static_cast<std::size_t>(n_images));
  for (std::int64_t i = 0; i < n_images; ++i)
    oracle.image_ids[static_cast<std::size_t>(i)] = i;
  oracle.category_ids.resize(static_cast<std::size_t>(n_cats));
  for (std::int64_t k = 0; k < n_cats; ++k)
    oracle.category_ids[static_cast<std::size_t>(k)] = k;

  {
    Rng rng = root.fork(kSaltMixing);
    oracle.mixing = rng.gaussian_mat(c, d);
  }
  {
    Rng rng = root.fork(kSaltBasis);
    oracle.temporal_basis = rng.gaussian_mat(d, t);
  }

  if (spec.inform_start_ms >= 0.0) {
    const auto s0 = static_cast<Eigen::Index>(
        std::floor(spec.inform_start_ms * spec.sample_rate_hz / 1000.0));
    const auto s1 = static_cast<Eigen::Index>(
        std::floor(spec.inform_end_ms * spec.sample_rate_hz / 1000.0));
    if (s0 >= t || s1 <= 0 || s1 <= s0)
      throw ConfigError("synthetic: inform window selects no samples");
    for (Eigen::Index s = 0; s < t; ++s)
      if (s < s0 || s >= std::min(s1, t)) oracle.temporal_basis.col(s).setZero();
  }
  if (!spec.inform_channels.empty()) {
    std::vector<bool> keep(static_cast<std::size_t>(c), false);
    for (auto ch : spec.inform_channels) keep[static_cast<std::size_t>(ch)] = true;
    for (Eigen::Index r = 0; r < c; ++r)
      if (!keep[static_cast<std::size_t>(r)]) oracle.mixing.row(r).setZero();
  }

  Rng noise = root.fork(kSaltNoise);

  auto make_split = [&](Split split, std::int64_t first_image,
                        std::int64_t count) {
    TrialSet ts;
    ts.split = split;
    for (Eigen::Index r = 0; r < c; ++r)
      ts.channel_names.push_back("ch" + std::to_string(r));
    for (std::int64_t i = first_image; i < first_image + count; ++i) {
      const std::int64_t cat = image_category[static_cast<std::size_t>(i)];
      StimulusRecord s;
      s.image_id = i;
      s.category_id = cat;
      s.image_ref = "synthetic://image/" + std::to_string(i);
      s.coarse_text = "category " + std::to_string(cat);
      s.fine_text = "synthetic image " + std::to_string(i) + " of category " +
                    std::to_string(cat);
      ts.catalog.push_back(std::move(s));

      Mat clean = oracle.mixing *
                  oracle.image_latents.row(i).asDiagonal() *
                  oracle.temporal_basis;
      for (std::int64_t rep = 0; rep < spec.repetitions; ++rep) {
        NeuralTrial tr;
        tr.subject_id = "s01";
        tr.category_id = cat;
        tr.image_id = i;
        tr.repetition = rep;
        tr.sample_rate_hz = spec.sample_rate_hz;
        Mat sig = clean;
        if (spec.noise_sigma > 0.0)
          sig += noise.gaussian_mat(c, t, spec.noise_sigma);
        tr.signal = sig.cast<float>();
        ts.trials.push_back(std::move(tr));
      }
    }
    ts.validate();
    return ts;
  };

  SyntheticData data;
  data.train = make_split(Split::train, 0, n_train_images);
  data.test = make_split(Split::test, n_train_images, spec.n_test_categories);
  data.oracle = std::move(oracle);
  return data;
}

void save_oracle(const SyntheticOracle& oracle, const std::string& path) {
  TensorFile tf;
  tf.set_meta("format", "oracle-v1");
  tf.add_matrix("image_latents", oracle.image_latents);
  tf.add_matrix("category_latents", oracle.category_latents);
  tf.add_i64("image_ids", oracle.image_ids);
  tf.add_i64("category_ids", oracle.category_ids);
  tf.add_matrix("mixing", oracle.mixing);
  tf.add_matrix("temporal_basis", oracle.temporal_basis);
  tf.save(path);
}

SyntheticOracle load_oracle(const std::string& path) {
  TensorFile tf = TensorFile::load(path);
  if (tf.meta_get_or("format", "") != "oracle-v1")
    throw DataError("not an oracle file: " + path);
  SyntheticOracle o;
  o.image_latents = tf.get("image_latents").as_matrix();
  o.category_latents = tf.get("category_latents").as_matrix();
  o.image_ids = tf.get("image_ids").as_i64();
  o.category_ids = tf.get("category_ids").as_i64();
  o.mixing = tf.get("mixing").as_matrix();
  o.temporal_basis = tf.get("temporal_basis").as_matrix();
  return o;
}

EmbeddingTable build_embedding_table(const SyntheticOracle& oracle) {
  EmbeddingTable t;
  t.image_ids = oracle.image_ids;
  t.category_ids = oracle.category_ids;
  const auto m = oracle.image_latents.rows();
  const auto k = oracle.category_latents.rows();
  const auto d = oracle.image_latents.cols();
  const auto d_cat = d / 2;

  t.image_embeddings.resize(m, d);
  t.fine_embeddings.resize(m, d);
  t.image_category.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    Vec u = oracle.image_latents.row(i).transpose();
    t.image_embeddings.row(i) = u.normalized().transpose();
    t.fine_embeddings.row(i) = u.normalized().transpose();
    // recover the category from the latent's first half
    Eigen::Index best = 0;
    double best_dot = -2.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double dot =
          oracle.category_latents.row(c).head(d_cat).dot(
              oracle.image_latents.row(i).head(d_cat));
      if (dot > best_dot) {
        best_dot = dot;
        best = c;
      }
    }
    t.image_category[static_cast<std::size_t>(i)] =
        oracle.category_ids[static_cast<std::size_t>(best)];
  }

  t.category_embeddings.resize(k, d);
  for (Eigen::Index c = 0; c < k; ++c)
    t.category_embeddings.row(c) =
        oracle.category_latents.row(c).normalized();

  t.validate();
  return t;
}

}  // namespace neuvis
