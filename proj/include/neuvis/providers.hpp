#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "neuvis/common.hpp"

namespace neuvis {

// Precomputed embedding tables standing in for frozen vision/text towers.
// One row per image (visual + fine caption) and one per category (coarse
// label text).
struct EmbeddingTable {
  std::vector<std::int64_t> image_ids;
  std::vector<std::int64_t> image_category;  // category per image row
  std::vector<std::int64_t> category_ids;
  Mat image_embeddings;     // M x d
  Mat fine_embeddings;      // M x d
  Mat category_embeddings;  // K x d

  Eigen::Index dim() const { return image_embeddings.cols(); }
  std::string fingerprint() const;  // content hash, stable across reloads
  void validate() const;
  void save(const std::string& path) const;
  static EmbeddingTable load(const std::string& path);
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Vec image_embedding(std::int64_t image_id) const = 0;
  virtual Vec fine_text_embedding(std::int64_t image_id) const = 0;
  virtual Vec coarse_text_embedding(std::int64_t category_id) const = 0;
  virtual std::int64_t category_of(std::int64_t image_id) const = 0;
  virtual std::vector<std::int64_t> image_ids() const = 0;
  virtual std::vector<std::int64_t> category_ids() const = 0;
  virtual std::string fingerprint() const = 0;
};

class TableEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit TableEmbeddingProvider(EmbeddingTable table);

  Eigen::Index dim() const override;
  Vec image_embedding(std::int64_t image_id) const override;
  Vec fine_text_embedding(std::int64_t image_id) const override;
  Vec coarse_text_embedding(std::int64_t category_id) const override;
  std::int64_t category_of(std::int64_t image_id) const override;
  std::vector<std::int64_t> image_ids() const override;
  std::vector<std::int64_t> category_ids() const override;
  std::string fingerprint() const override;

  const EmbeddingTable& table() const { return table_; }

 private:
  Eigen::Index image_row(std::int64_t image_id) const;
  Eigen::Index category_row(std::int64_t category_id) const;

  EmbeddingTable table_;
  std::string fingerprint_;
  std::unordered_map<std::int64_t, Eigen::Index> image_index_;
  std::unordered_map<std::int64_t, Eigen::Index> category_index_;
};

std::unique_ptr<EmbeddingProvider> open_embedding_provider(
    const std::string& path);

}  // namespace neuvis
