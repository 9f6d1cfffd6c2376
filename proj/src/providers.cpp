#include "neuvis/providers.hpp"

#include <set>

#include "neuvis/errors.hpp"
#include "neuvis/tensor_file.hpp"

namespace neuvis {

std::string EmbeddingTable::fingerprint() const {
  Hasher h;
  h.str("embed-v1");
  for (auto v : image_ids) h.i64(v);
  for (auto v : image_category) h.i64(v);
  for (auto v : category_ids) h.i64(v);
  h.mat(image_embeddings);
  h.mat(fine_embeddings);
  h.mat(category_embeddings);
  return hex64(h.digest());
}

void EmbeddingTable::validate() const {
  const auto m = static_cast<Eigen::Index>(image_ids.size());
  const auto k = static_cast<Eigen::Index>(category_ids.size());
  if (m == 0 || k == 0) throw DataError("embedding table is empty");
  if (static_cast<Eigen::Index>(image_category.size()) != m)
    throw DataError("embedding table: image_category length mismatch");
  if (image_embeddings.rows() != m || fine_embeddings.rows() != m)
    throw DataError("embedding table: image row count mismatch");
  if (category_embeddings.rows() != k)
    throw DataError("embedding table: category row count mismatch");
  const Eigen::Index d = image_embeddings.cols();
  if (fine_embeddings.cols() != d || category_embeddings.cols() != d)
    throw DataError("embedding table: inconsistent embedding dimension");
  std::set<std::int64_t> cats(category_ids.begin(), category_ids.end());
  if (static_cast<Eigen::Index>(cats.size()) != k)
    throw DataError("embedding table: duplicate category ids");
  std::set<std::int64_t> imgs(image_ids.begin(), image_ids.end());
  if (static_cast<Eigen::Index>(imgs.size()) != m)
    throw DataError("embedding table: duplicate image ids");
  for (auto c : image_category)
    if (!cats.count(c))
      throw DataError("embedding table: image references unknown category " +
                      std::to_string(c));
}

void EmbeddingTable::save(const std::string& path) const {
  validate();
  TensorFile tf;
  tf.set_meta("format", "embed-v1");
  tf.set_meta("dim", std::to_string(dim()));
  tf.set_meta("fingerprint", fingerprint());
  tf.add_i64("image_ids", image_ids);
  tf.add_i64("image_category", image_category);
  tf.add_i64("category_ids", category_ids);
  tf.add_matrix("image_embeddings", image_embeddings);
  tf.add_matrix("fine_embeddings", fine_embeddings);
  tf.add_matrix("category_embeddings", category_embeddings);
  tf.save(path);
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  TensorFile tf = TensorFile::load(path);
  if (tf.meta_get_or("format", "") != "embed-v1")
    throw DataError("not an embedding table: " + path);
  EmbeddingTable t;
  t.image_ids = tf.get("image_ids").as_i64();
  t.image_category = tf.get("image_category").as_i64();
  t.category_ids = tf.get("category_ids").as_i64();
  t.image_embeddings = tf.get("image_embeddings").as_matrix();
  t.fine_embeddings = tf.get("fine_embeddings").as_matrix();
  t.category_embeddings = tf.get("category_embeddings").as_matrix();
  t.validate();
  if (t.fingerprint() != tf.meta_get("fingerprint"))
    throw DataError("embedding table fingerprint mismatch: " + path);
  return t;
}

TableEmbeddingProvider::TableEmbeddingProvider(EmbeddingTable table)
    : table_(std::move(table)) {
  table_.validate();
  fingerprint_ = table_.fingerprint();
  for (std::size_t i = 0; i < table_.image_ids.size(); ++i)
    image_index_[table_.image_ids[i]] = static_cast<Eigen::Index>(i);
  for (std::size_t i = 0; i < table_.category_ids.size(); ++i)
    category_index_[table_.category_ids[i]] = static_cast<Eigen::Index>(i);
}

Eigen::Index TableEmbeddingProvider::dim() const { return table_.dim(); }

Eigen::Index TableEmbeddingProvider::image_row(std::int64_t image_id) const {
  auto it = image_index_.find(image_id);
  if (it == image_index_.end())
    throw DataError("no embedding for image " + std::to_string(image_id));
  return it->second;
}

Eigen::Index TableEmbeddingProvider::category_row(std::int64_t category_id) const {
  auto it = category_index_.find(category_id);
  if (it == category_index_.end())
    throw DataError("no embedding for category " + std::to_string(category_id));
  return it->second;
}

Vec TableEmbeddingProvider::image_embedding(std::int64_t image_id) const {
  return table_.image_embeddings.row(image_row(image_id)).transpose();
}

Vec TableEmbeddingProvider::fine_text_embedding(std::int64_t image_id) const {
  return table_.fine_embeddings.row(image_row(image_id)).transpose();
}

Vec TableEmbeddingProvider::coarse_text_embedding(std::int64_t category_id) const {
  return table_.category_embeddings.row(category_row(category_id)).transpose();
}

std::int64_t TableEmbeddingProvider::category_of(std::int64_t image_id) const {
  return table_.image_category[static_cast<std::size_t>(image_row(image_id))];
}

std::vector<std::int64_t> TableEmbeddingProvider::image_ids() const {
  return table_.image_ids;
}

std::vector<std::int64_t> TableEmbeddingProvider::category_ids() const {
  return table_.category_ids;
}

std::string TableEmbeddingProvider::fingerprint() const { return fingerprint_; }

std::unique_ptr<EmbeddingProvider> open_embedding_provider(
    const std::string& path) {
  return std::make_unique<TableEmbeddingProvider>(EmbeddingTable::load(path));
}

}  // namespace neuvis
