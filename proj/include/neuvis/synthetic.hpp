#pragma once

#include <string>

#include "neuvis/providers.hpp"
#include "neuvis/types.hpp"

namespace neuvis {

// Synthetic trials with analytically known structure.
//
// Every image i of category k gets a latent u_i = [v_k ; w_i]: the first
// half identifies the category (unit norm), the second half the individual
// image (norm 0.5). The clean signal is the linear-temporal encoding
//
//   S_i = A * diag(u_i) * Phi
//
// with a fixed random spatial map A (C x d) and temporal basis Phi (d x T),
// plus optional iid Gaussian noise per repetition. The map u -> S is linear
// and injective for C*T >= d, so a linear decoder recovers u_i exactly at
// zero noise and downstream retrieval/classification have a guaranteed
// 100% ceiling.
//
// The informative support can be restricted to a time window (Phi columns
// outside it are zeroed) and to a channel subset (A rows outside it are
// zeroed), giving temporal and spatial ablations a known ground truth.
//
// Train categories get ids 0..n_categories-1 with images_per_category
// images each; test categories follow with one image each, disjoint ids.
struct SyntheticData {
  TrialSet train;
  TrialSet test;
  SyntheticOracle oracle;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

void save_oracle(const SyntheticOracle& oracle, const std::string& path);
SyntheticOracle load_oracle(const std::string& path);

// Embedding tables a frozen vision/text tower would produce for this data:
//   image embedding       = normalize(u_i)
//   fine text embedding   = normalize(u_i)
//   coarse text embedding = normalize([v_k ; 0])
EmbeddingTable build_embedding_table(const SyntheticOracle& oracle);

}  // namespace neuvis
