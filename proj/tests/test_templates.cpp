#include <doctest.h>

#include <algorithm>

#include "neuvis/errors.hpp"
#include "neuvis/synthetic.hpp"
#include "neuvis/templates.hpp"

using namespace neuvis;

TEST_SUITE("templates") {

TEST_CASE("hand-checked cosine ranking") {
  Mat templates(3, 2);
  templates << 1.0, 0.0,
               0.0, 1.0,
               0.6, 0.8;
  std::vector<std::int64_t> template_ids = {0, 1, 2};

  Mat query(1, 2);
  query << 0.6, 0.8;

  auto results = rank_against(query, {42}, templates, template_ids);
  REQUIRE(results.size() == 1);
  const auto& r = results[0];
  CHECK(r.query_id == 42);
  REQUIRE(r.ranked_ids.size() == 3);
  CHECK(r.ranked_ids[0] == 2);
  CHECK(r.ranked_ids[1] == 1);
  CHECK(r.ranked_ids[2] == 0);
  CHECK(r.scores[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.scores[1] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r.scores[2] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("scale invariance of cosine scores") {
  Rng rng(7);
  Mat templates = rng.gaussian_mat(5, 4);
  std::vector<std::int64_t> ids = {10, 11, 12, 13, 14};
  Mat q = rng.gaussian_mat(3, 4);

  auto base = rank_against(q, {0, 1, 2}, templates, ids);
  Mat q_scaled = q * 37.5;
  auto scaled = rank_against(q_scaled, {0, 1, 2}, templates, ids);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(base[i].ranked_ids == scaled[i].ranked_ids);
    for (std::size_t j = 0; j < base[i].scores.size(); ++j)
      CHECK(base[i].scores[j] == doctest::Approx(scaled[i].scores[j]).epsilon(1e-12));
  }
}

TEST_CASE("exact ties break toward the smaller id") {
  Mat templates(3, 2);
  templates << 2.0, 0.0,
               1.0, 0.0,
               0.0, 1.0;
  std::vector<std::int64_t> ids = {9, 3, 5};
  Mat q(1, 2);
  q << 1.0, 0.0;

  auto r = rank_against(q, {0}, templates, ids)[0];
  CHECK(r.ranked_ids[0] == 3);
  CHECK(r.ranked_ids[1] == 9);
  CHECK(r.ranked_ids[2] == 5);
  CHECK(r.scores[0] == r.scores[1]);
}

TEST_CASE("scores are nonincreasing and complete") {
  Rng rng(11);
  Mat templates = rng.gaussian_mat(20, 8);
  std::vector<std::int64_t> ids(20);
  for (int i = 0; i < 20; ++i) ids[static_cast<std::size_t>(i)] = i;
  Mat q = rng.gaussian_mat(6, 8);
  auto results = rank_against(q, {0, 1, 2, 3, 4, 5}, templates, ids);
  for (const auto& r : results) {
    REQUIRE(r.ranked_ids.size() == 20);
    auto sorted_ids = r.ranked_ids;
    std::sort(sorted_ids.begin(), sorted_ids.end());
    for (int i = 0; i < 20; ++i) CHECK(sorted_ids[static_cast<std::size_t>(i)] == i);
    for (std::size_t j = 1; j < r.scores.size(); ++j)
      CHECK(r.scores[j] <= r.scores[j - 1]);
  }
}

TEST_CASE("zero-norm query is rejected") {
  Mat templates(2, 2);
  templates << 1.0, 0.0, 0.0, 1.0;
  Mat q = Mat::Zero(1, 2);
  CHECK_THROWS_AS(rank_against(q, {0}, templates, {0, 1}), NumericError);
}

TEST_CASE("top-k accuracy is monotone in k and exact on known ranks") {
  std::vector<RetrievalResult> results(4);
  std::vector<std::int64_t> truth = {7, 7, 7, 7};
  results[0].ranked_ids = {7, 1, 2, 3, 4, 5};   // rank 1
  results[1].ranked_ids = {1, 7, 2, 3, 4, 5};   // rank 2
  results[2].ranked_ids = {1, 2, 3, 4, 7, 5};   // rank 5
  results[3].ranked_ids = {1, 2, 3, 4, 5, 7};   // rank 6

  auto rep = topk_accuracy(results, truth, "retrieval");
  CHECK(rep.n_queries == 4);
  CHECK(rep.top1 == doctest::Approx(0.25));
  CHECK(rep.top5 == doctest::Approx(0.75));
  CHECK(rep.topk(2) == doctest::Approx(0.5));
  CHECK(rep.topk(6) == doctest::Approx(1.0));
  double prev = 0.0;
  for (std::int64_t k = 1; k <= 6; ++k) {
    CHECK(rep.topk(k) >= prev);
    prev = rep.topk(k);
  }
  CHECK(rep.ranks == std::vector<std::int64_t>{1, 2, 5, 6});
}

TEST_CASE("truth id absent from the gallery is a protocol error") {
  std::vector<RetrievalResult> results(1);
  results[0].ranked_ids = {1, 2, 3};
  CHECK_THROWS_AS(topk_accuracy(results, {99}, "retrieval"), DataError);
}

TEST_CASE("template bank built from the synthetic test catalog") {
  SyntheticSpec spec;
  spec.n_categories = 10;
  spec.n_test_categories = 5;
  spec.embed_dim = 16;
  auto data = generate_synthetic(spec);
  auto table = build_embedding_table(data.oracle);
  TableEmbeddingProvider provider(table);

  auto bank = build_templates(data.test.catalog, provider);
  CHECK(bank.image_templates.rows() == 5);
  CHECK(bank.category_templates.rows() == 5);
  CHECK(bank.image_templates.cols() == 16);
  CHECK(std::is_sorted(bank.category_ids.begin(), bank.category_ids.end()));
  CHECK(bank.provider_fingerprint == provider.fingerprint());
  CHECK(bank.fingerprint() == bank.fingerprint());

  // Clean latents must retrieve and classify their own stimuli perfectly.
  EmbeddingBatch queries;
  queries.ids = bank.image_ids;
  queries.data.resize(static_cast<Eigen::Index>(bank.image_ids.size()), 16);
  std::vector<std::int64_t> category_truth;
  for (std::size_t i = 0; i < bank.image_ids.size(); ++i) {
    queries.data.row(static_cast<Eigen::Index>(i)) =
        bank.image_templates.row(static_cast<Eigen::Index>(i));
    for (const auto& s : data.test.catalog)
      if (s.image_id == bank.image_ids[i]) category_truth.push_back(s.category_id);
  }

  auto rep = topk_accuracy(retrieve(queries, bank), queries.ids, "retrieval");
  CHECK(rep.top1 == doctest::Approx(1.0));

  auto cls = topk_accuracy(classify(queries, bank), category_truth, "classification");
  CHECK(cls.top1 == doctest::Approx(1.0));
}

TEST_CASE("random queries rank uniformly (chance sanity)") {
  Rng rng(123);
  const int n_templates = 8;
  Mat templates = rng.gaussian_mat(n_templates, 6);
  std::vector<std::int64_t> ids(n_templates);
  for (int i = 0; i < n_templates; ++i) ids[static_cast<std::size_t>(i)] = i;

  const int n_queries = 4000;
  Mat q = rng.gaussian_mat(n_queries, 6);
  std::vector<std::int64_t> qids(n_queries);
  std::vector<std::int64_t> truth(n_queries);
  for (int i = 0; i < n_queries; ++i) {
    qids[static_cast<std::size_t>(i)] = i;
    truth[static_cast<std::size_t>(i)] =
        static_cast<std::int64_t>(rng.uniform_int(n_templates));
  }
  auto rep = topk_accuracy(rank_against(q, qids, templates, ids), truth, "retrieval");
  const double p = 1.0 / n_templates;
  const double se = std::sqrt(p * (1.0 - p) / n_queries);
  CHECK(std::abs(rep.top1 - p) <= 4.0 * se);
}

}  // TEST_SUITE
