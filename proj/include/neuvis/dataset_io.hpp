#pragma once

#include <string>

#include "neuvis/types.hpp"

namespace neuvis {

// On-disk dataset layout, rooted at a directory:
//
//   <root>/meta.txt                   format = dataset-v1
//   <root>/train/meta.txt             split, sample_rate_hz, channel_names
//   <root>/train/catalog.tsv          image_id  category_id  image_ref  coarse_text  fine_text
//   <root>/train/trials_<subject>.nvt float32 [n_trials, C, T] + i64 index arrays
//   <root>/test/...                   same shape
//
// Loading the test split cross-checks category disjointness against the
// train split when one is present.

void save_split(const TrialSet& ts, const std::string& dir);
TrialSet load_split(const std::string& dir);

void save_dataset(const TrialSet& train, const TrialSet& test,
                  const std::string& root);
TrialSet load_trialset(const std::string& root, Split split);

}  // namespace neuvis
