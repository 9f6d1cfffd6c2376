#pragma once

#include <string>
#include <vector>

#include "neuvis/eval.hpp"
#include "neuvis/train.hpp"

namespace neuvis {

enum class AblationMode { expanding, sliding, decreasing, spatial };

const char* ablation_mode_name(AblationMode m);
AblationMode ablation_mode_from_name(const std::string& s);

// Grid cells retrain by default: restricting the window or the montage
// changes the encoder input shape, so reusing a fixed model is not the same
// experiment. The cheaper alternative zeroes the excluded samples/channels
// and reuses one full-input model; its cells carry a non-equivalence note.
enum class CellStrategy { retrain, mask_and_reuse };

struct AblationCell {
  std::string label;
  double window_start_ms = 0.0;  // offsets from the first sample, [start, end)
  double window_end_ms = 0.0;
  std::vector<std::string> regions;  // spatial mode only
  bool evaluated = false;            // false: skipped, see note
  std::string note;
  TopKReport retrieval;
  TopKReport classification;
};

struct AblationGrid {
  AblationMode mode = AblationMode::expanding;
  CellStrategy strategy = CellStrategy::retrain;
  std::vector<AblationCell> cells;

  std::string tsv() const;
};

// Shared per-cell recipe. encoder.channels/encoder.samples are overwritten
// from the windowed data; everything else (and the training config, seeds
// included) is identical across cells, so cells are order-independent.
struct AblationSetup {
  EncoderConfig encoder;
  AlignmentConfig align;
  CellStrategy strategy = CellStrategy::retrain;
  double sliding_width_ms = 100.0;
};

// Temporal grids over a uniform step grid of t (offsets from the first
// sample, in ms):
//   expanding   [0, t)            for t = step, 2*step, ..., duration
//   sliding     [t - width, t)    over the same t grid; too-early windows
//                                 are recorded as skipped cells
//   decreasing  [t, duration)     for t = 0, step, ...
// Each evaluated cell trains its own model on the windowed training set and
// runs the zero-shot protocol on the identically windowed test set.
AblationGrid temporal_ablation(const TrialSet& train, const TrialSet& test,
                               const EmbeddingProvider& provider,
                               const AblationSetup& setup, AblationMode mode,
                               double step_ms);

// One cell per region set; channels restricted via the group map.
AblationGrid spatial_ablation(const TrialSet& train, const TrialSet& test,
                              const EmbeddingProvider& provider,
                              const AblationSetup& setup,
                              const std::vector<std::vector<std::string>>& region_sets,
                              const ChannelGroupMap& map);

// The unablated reference: the same train+eval recipe a cell uses, on the
// data as given. The expanding grid's final cell reproduces this exactly.
ZeroshotReport train_eval_full(const TrialSet& train, const TrialSet& test,
                               const EmbeddingProvider& provider,
                               const AblationSetup& setup);

// Per-query rank dump ("query_id<TAB>rank", 1-based) for reanalysis.
std::string rank_dump_tsv(const std::vector<RetrievalResult>& results,
                          const std::vector<std::int64_t>& truth);

}  // namespace neuvis
