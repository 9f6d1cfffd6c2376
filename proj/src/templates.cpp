#include "neuvis/templates.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "neuvis/errors.hpp"

namespace neuvis {

void EmbeddingBatch::validate() const {
  if (data.rows() < 1) throw DataError("embedding batch is empty");
  if (!data.allFinite()) throw NumericError("non-finite values in embedding batch");
  if (static_cast<Eigen::Index>(ids.size()) != data.rows())
    throw DataError("embedding batch ids do not match row count");
}

void TemplateBank::validate() const {
  if (image_templates.rows() < 1 || category_templates.rows() < 1)
    throw DataError("template bank is empty");
  if (static_cast<Eigen::Index>(image_ids.size()) != image_templates.rows() ||
      static_cast<Eigen::Index>(category_ids.size()) != category_templates.rows())
    throw DataError("template bank ids do not match template counts");
  if (image_templates.cols() != category_templates.cols())
    throw DataError("template bank dimension mismatch");
  if (!image_templates.allFinite() || !category_templates.allFinite())
    throw NumericError("non-finite template rows");
  for (Eigen::Index r = 0; r < image_templates.rows(); ++r)
    if (image_templates.row(r).norm() < 1e-12)
      throw NumericError("zero-norm image template row");
  for (Eigen::Index r = 0; r < category_templates.rows(); ++r)
    if (category_templates.row(r).norm() < 1e-12)
      throw NumericError("zero-norm category template row");
}

std::string TemplateBank::fingerprint() const {
  Hasher h;
  h.str("bank-v1");
  h.str(provider_fingerprint);
  for (auto id : image_ids) h.i64(id);
  for (auto id : category_ids) h.i64(id);
  h.mat(image_templates);
  h.mat(category_templates);
  return hex64(h.digest());
}

TemplateBank build_templates(const std::vector<StimulusRecord>& test_catalog,
                             const EmbeddingProvider& provider) {
  if (test_catalog.empty()) throw DataError("test catalog is empty");
  TemplateBank bank;
  const Eigen::Index d = provider.dim();
  const auto m = static_cast<Eigen::Index>(test_catalog.size());
  bank.image_templates.resize(m, d);

  std::set<std::int64_t> cats;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& s = test_catalog[static_cast<std::size_t>(i)];
    try {
      bank.image_templates.row(i) = provider.image_embedding(s.image_id).transpose();
    } catch (const Error& e) {
      throw DataError("template build failed for image " +
                      std::to_string(s.image_id) + " (" + s.image_ref +
                      "): " + e.what());
    }
    bank.image_ids.push_back(s.image_id);
    cats.insert(s.category_id);
  }

  bank.category_templates.resize(static_cast<Eigen::Index>(cats.size()), d);
  Eigen::Index r = 0;
  for (auto cat : cats) {
    try {
      bank.category_templates.row(r) =
          provider.coarse_text_embedding(cat).transpose();
    } catch (const Error& e) {
      throw DataError("template build failed for category " +
                      std::to_string(cat) + ": " + e.what());
    }
    bank.category_ids.push_back(cat);
    ++r;
  }

  bank.provider_fingerprint = provider.fingerprint();
  bank.validate();
  return bank;
}

std::vector<RetrievalResult> rank_against(
    const Mat& queries, const std::vector<std::int64_t>& query_ids,
    const Mat& templates, const std::vector<std::int64_t>& template_ids) {
  if (queries.cols() != templates.cols())
    throw DataError("query dimension does not match templates");
  if (static_cast<Eigen::Index>(query_ids.size()) != queries.rows())
    throw DataError("query ids do not match query count");

  Mat tn(templates.rows(), templates.cols());
  for (Eigen::Index r = 0; r < templates.rows(); ++r) {
    const double norm = templates.row(r).norm();
    if (norm < 1e-12) throw NumericError("zero-norm template row");
    tn.row(r) = templates.row(r) / norm;
  }

  std::vector<RetrievalResult> out;
  out.reserve(static_cast<std::size_t>(queries.rows()));
  const auto n = templates.rows();
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    const double qnorm = queries.row(q).norm();
    if (qnorm < 1e-12)
      throw NumericError("zero-norm query row makes cosine similarity undefined");
    Vec scores = tn * (queries.row(q).transpose() / qnorm);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return template_ids[static_cast<std::size_t>(a)] <
             template_ids[static_cast<std::size_t>(b)];
    });

    RetrievalResult r;
    r.query_id = query_ids[static_cast<std::size_t>(q)];
    for (auto i : order) {
      r.ranked_ids.push_back(template_ids[static_cast<std::size_t>(i)]);
      r.scores.push_back(scores[i]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RetrievalResult> retrieve(const EmbeddingBatch& zv_hat,
                                      const TemplateBank& bank) {
  zv_hat.validate();
  return rank_against(zv_hat.data, zv_hat.ids, bank.image_templates,
                      bank.image_ids);
}

std::vector<RetrievalResult> classify(const EmbeddingBatch& zs_hat,
                                      const TemplateBank& bank) {
  zs_hat.validate();
  return rank_against(zs_hat.data, zs_hat.ids, bank.category_templates,
                      bank.category_ids);
}

double TopKReport::topk(std::int64_t k) const {
  if (ranks.empty()) return 0.0;
  std::int64_t hits = 0;
  for (auto r : ranks)
    if (r <= k) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

TopKReport topk_accuracy(const std::vector<RetrievalResult>& results,
                         const std::vector<std::int64_t>& truth,
                         const std::string& task) {
  if (results.size() != truth.size())
    throw DataError("result/truth count mismatch");
  if (results.empty()) throw DataError("no queries to score");
  TopKReport rep;
  rep.task = task;
  rep.n_queries = static_cast<std::int64_t>(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& ranked = results[i].ranked_ids;
    auto it = std::find(ranked.begin(), ranked.end(), truth[i]);
    if (it == ranked.end())
      throw DataError("ground-truth id " + std::to_string(truth[i]) +
                      " missing from the template bank");
    rep.ranks.push_back(static_cast<std::int64_t>(it - ranked.begin()) + 1);
  }
  rep.top1 = rep.topk(1);
  rep.top5 = rep.topk(5);
  return rep;
}

}  // namespace neuvis
