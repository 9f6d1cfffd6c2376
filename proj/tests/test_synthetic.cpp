#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <set>

#include "neuvis/errors.hpp"
#include "neuvis/synthetic.hpp"

using namespace neuvis;

TEST_SUITE("synthetic") {

TEST_CASE("generation is deterministic in the seed") {
  SyntheticSpec spec;
  spec.noise_sigma = 0.5;
  auto a = generate_synthetic(spec);
  auto b = generate_synthetic(spec);
  REQUIRE(a.train.trials.size() == b.train.trials.size());
  for (std::size_t i = 0; i < a.train.trials.size(); ++i)
    CHECK(a.train.trials[i].signal == b.train.trials[i].signal);
  CHECK(a.oracle.image_latents == b.oracle.image_latents);

  spec.seed = 2;
  auto c = generate_synthetic(spec);
  CHECK(a.train.trials[0].signal != c.train.trials[0].signal);
}

TEST_CASE("shapes, ids and split protocol") {
  SyntheticSpec spec;
  spec.n_categories = 10;
  spec.n_test_categories = 5;
  spec.images_per_category = 4;
  spec.repetitions = 2;
  auto data = generate_synthetic(spec);

  CHECK(data.train.trials.size() == 10u * 4u * 2u);
  CHECK(data.test.trials.size() == 5u * 1u * 2u);
  CHECK(data.train.catalog.size() == 40u);
  CHECK(data.test.catalog.size() == 5u);
  CHECK(data.train.split == Split::train);
  CHECK(data.test.split == Split::test);
  data.train.validate();
  data.test.validate();

  // Category ids are disjoint across splits.
  auto train_cats = data.train.category_ids();
  auto test_cats = data.test.category_ids();
  std::set<std::int64_t> train_set(train_cats.begin(), train_cats.end());
  for (auto c : test_cats) CHECK(train_set.count(c) == 0);

  // One image per held-out category.
  CHECK(test_cats.size() == 5u);
  std::set<std::int64_t> test_images;
  for (const auto& s : data.test.catalog) test_images.insert(s.image_id);
  CHECK(test_images.size() == 5u);
}

TEST_CASE("latent geometry: category halves are unit, image halves are 0.5") {
  SyntheticSpec spec;
  auto data = generate_synthetic(spec);
  const auto d = spec.embed_dim;
  const auto half = d / 2;

  for (Eigen::Index i = 0; i < data.oracle.image_latents.rows(); ++i) {
    const Vec u = data.oracle.image_latents.row(i).transpose();
    CHECK(u.head(half).norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(u.tail(half).norm() == doctest::Approx(0.5).epsilon(1e-9));
  }
  for (Eigen::Index k = 0; k < data.oracle.category_latents.rows(); ++k) {
    const Vec v = data.oracle.category_latents.row(k).transpose();
    CHECK(v.head(half).norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(v.tail(half).norm() == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("zero-noise signals decode back to their latents exactly") {
  SyntheticSpec spec;
  spec.noise_sigma = 0.0;
  auto data = generate_synthetic(spec);
  const auto& oracle = data.oracle;

  // S = A * diag(u) * Phi. Vectorized, S = M u with
  // M[(c,t), j] = A(c,j) * Phi(j,t); M has full column rank for C*T >= d,
  // so least squares recovers u.
  const auto c = spec.channels;
  const auto t = spec.samples;
  const auto d = spec.embed_dim;
  Mat m(c * t, d);
  for (Eigen::Index ch = 0; ch < c; ++ch)
    for (Eigen::Index s = 0; s < t; ++s)
      for (Eigen::Index j = 0; j < d; ++j)
        m(ch * t + s, j) = oracle.mixing(ch, j) * oracle.temporal_basis(j, s);

  Eigen::ColPivHouseholderQR<Mat> qr(m);
  REQUIRE(qr.rank() == d);

  for (const auto& trial : {data.train.trials[0], data.test.trials[0]}) {
    Vec s_vec(c * t);
    for (Eigen::Index ch = 0; ch < c; ++ch)
      for (Eigen::Index sm = 0; sm < t; ++sm)
        s_vec(ch * t + sm) = static_cast<double>(trial.signal(ch, sm));
    Vec u_hat = qr.solve(s_vec);

    Eigen::Index row = -1;
    for (std::size_t i = 0; i < oracle.image_ids.size(); ++i)
      if (oracle.image_ids[i] == trial.image_id)
        row = static_cast<Eigen::Index>(i);
    REQUIRE(row >= 0);
    const Vec u_true = oracle.image_latents.row(row).transpose();
    CHECK((u_hat - u_true).norm() < 1e-4);  // float32 storage limits precision
  }
}

TEST_CASE("repetition noise is fresh per repetition but shares the clean part") {
  SyntheticSpec spec;
  spec.noise_sigma = 0.25;
  spec.repetitions = 2;
  auto data = generate_synthetic(spec);

  const auto& r0 = data.train.trials[0];
  const auto& r1 = data.train.trials[1];
  REQUIRE(r0.image_id == r1.image_id);
  REQUIRE(r0.repetition != r1.repetition);
  CHECK(r0.signal != r1.signal);

  SyntheticSpec clean_spec = spec;
  clean_spec.noise_sigma = 0.0;
  auto clean = generate_synthetic(clean_spec);
  const MatF diff0 = r0.signal - clean.train.trials[0].signal;
  const MatF diff1 = r1.signal - clean.train.trials[1].signal;
  const double n = static_cast<double>(diff0.size());
  const double sd0 = std::sqrt(static_cast<double>(diff0.squaredNorm()) / n);
  CHECK(sd0 == doctest::Approx(0.25).epsilon(0.25));
  CHECK((diff0 - diff1).norm() > 0.1f);  // independent draws
}

TEST_CASE("informative window zeroes the signal outside it") {
  SyntheticSpec spec;
  spec.noise_sigma = 0.0;
  spec.inform_start_ms = 48.0;   // samples 12..24 at 250 Hz
  spec.inform_end_ms = 96.0;
  auto data = generate_synthetic(spec);

  const auto& sig = data.train.trials[0].signal;
  for (Eigen::Index s = 0; s < 12; ++s)
    CHECK(sig.col(s).cwiseAbs().maxCoeff() == 0.0f);
  for (Eigen::Index s = 24; s < sig.cols(); ++s)
    CHECK(sig.col(s).cwiseAbs().maxCoeff() == 0.0f);
  CHECK(sig.middleCols(12, 12).cwiseAbs().maxCoeff() > 0.0f);

  SyntheticSpec bad = spec;
  bad.inform_start_ms = 100.0;
  bad.inform_end_ms = 100.0;
  CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
}

TEST_CASE("informative channels zero the others") {
  SyntheticSpec spec;
  spec.noise_sigma = 0.0;
  spec.inform_channels = {0, 3, 5};
  auto data = generate_synthetic(spec);

  const auto& sig = data.train.trials[0].signal;
  for (Eigen::Index c = 0; c < sig.rows(); ++c) {
    const bool informative = (c == 0 || c == 3 || c == 5);
    if (informative)
      CHECK(sig.row(c).cwiseAbs().maxCoeff() > 0.0f);
    else
      CHECK(sig.row(c).cwiseAbs().maxCoeff() == 0.0f);
  }
}

TEST_CASE("spec validation rejects undersized category counts") {
  SyntheticSpec spec;
  spec.embed_dim = 16;
  spec.n_categories = 7;  // needs >= 8 to span the category half-space
  CHECK_THROWS_AS(spec.validate(), ConfigError);

  SyntheticSpec odd;
  odd.embed_dim = 15;
  CHECK_THROWS_AS(odd.validate(), ConfigError);
}

TEST_CASE("oracle round trips through disk") {
  SyntheticSpec spec;
  auto data = generate_synthetic(spec);
  auto path = (std::filesystem::temp_directory_path() / "nv_oracle.nvt").string();
  save_oracle(data.oracle, path);
  auto loaded = load_oracle(path);
  CHECK(loaded.image_latents == data.oracle.image_latents);
  CHECK(loaded.category_latents == data.oracle.category_latents);
  CHECK(loaded.mixing == data.oracle.mixing);
  CHECK(loaded.temporal_basis == data.oracle.temporal_basis);
  CHECK(loaded.image_ids == data.oracle.image_ids);
  CHECK(loaded.category_ids == data.oracle.category_ids);
  std::filesystem::remove(path);
}

TEST_CASE("embedding table matches the oracle geometry") {
  SyntheticSpec spec;
  auto data = generate_synthetic(spec);
  auto table = build_embedding_table(data.oracle);
  table.validate();

  // Image/fine rows are normalized latents; category rows normalize [v; 0].
  for (Eigen::Index i = 0; i < table.image_embeddings.rows(); ++i) {
    CHECK(table.image_embeddings.row(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
    const Vec u = data.oracle.image_latents.row(i).transpose().normalized();
    CHECK((table.image_embeddings.row(i).transpose() - u).norm() < 1e-9);
    CHECK((table.fine_embeddings.row(i) - table.image_embeddings.row(i)).norm() <
          1e-12);
  }
  for (Eigen::Index k = 0; k < table.category_embeddings.rows(); ++k)
    CHECK(table.category_embeddings.row(k).norm() == doctest::Approx(1.0).epsilon(1e-9));

  // Each image's nearest category template is its own category.
  TableEmbeddingProvider provider(table);
  for (std::size_t i = 0; i < table.image_ids.size(); ++i) {
    const Vec z = provider.image_embedding(table.image_ids[i]);
    double best = -2.0;
    std::int64_t best_cat = -1;
    for (auto cat : table.category_ids) {
      const double s = z.dot(provider.coarse_text_embedding(cat));
      if (s > best) {
        best = s;
        best_cat = cat;
      }
    }
    CHECK(best_cat == provider.category_of(table.image_ids[i]));
  }
}

}  // TEST_SUITE
