#pragma once

#include <string>

#include "neuvis/encoder.hpp"
#include "neuvis/templates.hpp"

namespace neuvis {

// Encode a full trial set in fixed-size chunks (bounded graph memory).
Mat encode_features(const AlignModel& model, const TrialSet& ts,
                    Eigen::Index chunk = 64);

struct ZeroshotReport {
  TopKReport retrieval;       // neural-visual vs image templates
  TopKReport classification;  // neural-semantic vs category-text templates
};

// Full zero-shot protocol on a preprocessed (repetition-averaged) test set:
// templates from the test catalog, queries from the encoded trials.
ZeroshotReport evaluate_zeroshot(const AlignModel& model, const TrialSet& test_ts,
                                 const EmbeddingProvider& provider);

// Retrieval among the evaluation set's own images: each trial's projected
// visual embedding is ranked against the image embeddings of every image
// present in the set.
TopKReport validation_retrieval(const AlignModel& model, const TrialSet& val_ts,
                                const EmbeddingProvider& provider);

// Tab-separated summary (one row per report) for human inspection.
std::string report_tsv_row(const std::string& label, const TopKReport& r);
std::string report_tsv_header();

}  // namespace neuvis
