#include "neuvis/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <utility>

#include "neuvis/errors.hpp"
#include "neuvis/preprocess.hpp"

namespace neuvis {

namespace {

constexpr const char* kMaskNote =
    "mask-and-reuse: zeroed inputs on a fixed full-input model; "
    "not equivalent to retraining";

std::string format_ms(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string window_label(double a_ms, double b_ms) {
  return format_ms(a_ms) + "-" + format_ms(b_ms) + " ms";
}

std::string join_regions(const std::vector<std::string>& regions) {
  std::string out;
  for (const auto& r : regions) {
    if (!out.empty()) out += "+";
    out += r;
  }
  return out;
}

std::string format_acc(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

Eigen::Index sample_index(double ms, double rate_hz) {
  return static_cast<Eigen::Index>(std::llround(ms * rate_hz / 1000.0));
}

// Zero every column outside [start, end); shape is unchanged.
TrialSet mask_outside_window(TrialSet ts, double start_ms, double end_ms) {
  const double rate = ts.sample_rate_hz();
  const Eigen::Index i0 = sample_index(start_ms, rate);
  const Eigen::Index i1 = sample_index(end_ms, rate);
  for (auto& trial : ts.trials) {
    const Eigen::Index t = trial.signal.cols();
    if (i0 > 0) trial.signal.leftCols(std::min(i0, t)).setZero();
    if (i1 < t) trial.signal.rightCols(t - i1).setZero();
  }
  return ts;
}

// Zero every channel whose name is not in `keep`; shape is unchanged.
TrialSet mask_outside_channels(TrialSet ts, const std::set<std::string>& keep) {
  for (Eigen::Index c = 0; c < ts.channels(); ++c) {
    if (keep.count(ts.channel_names[static_cast<std::size_t>(c)])) continue;
    for (auto& trial : ts.trials) trial.signal.row(c).setZero();
  }
  return ts;
}

AlignModel train_cell_model(const TrialSet& train,
                            const EmbeddingProvider& provider,
                            const AblationSetup& setup) {
  EncoderConfig enc = setup.encoder;
  enc.channels = train.channels();
  enc.samples = train.samples();
  enc.validate();
  auto [tr, val] = split_validation(train, setup.align.val_count, setup.align.seed);
  auto state = train_alignment(init_train_state(enc, setup.align), tr, val,
                               provider);
  return state.best_model();
}

ZeroshotReport run_recipe(const TrialSet& train, const TrialSet& test,
                          const EmbeddingProvider& provider,
                          const AblationSetup& setup) {
  AlignModel model = train_cell_model(train, provider, setup);
  return evaluate_zeroshot(model, test, provider);
}

void fill_cell(AblationCell& cell, const ZeroshotReport& report) {
  cell.retrieval = report.retrieval;
  cell.classification = report.classification;
  cell.evaluated = true;
}

struct WindowPlan {
  double start_ms = 0.0;
  double end_ms = 0.0;
  bool valid = false;
  std::string reason;
};

WindowPlan plan_window(double a_ms, double b_ms, double duration_ms,
                       double rate_hz) {
  WindowPlan p;
  p.start_ms = a_ms;
  p.end_ms = b_ms;
  if (a_ms < -1e-9) {
    p.reason = "window starts before the data";
    return p;
  }
  if (b_ms > duration_ms + 1e-9) {
    p.reason = "window ends after the data";
    return p;
  }
  if (sample_index(b_ms, rate_hz) - sample_index(a_ms, rate_hz) < 1) {
    p.reason = "window contains no samples";
    return p;
  }
  p.valid = true;
  return p;
}

void check_matching_shapes(const TrialSet& train, const TrialSet& test) {
  if (train.trials.empty() || test.trials.empty())
    throw DataError("ablation needs non-empty train and test sets");
  if (train.channels() != test.channels() ||
      train.samples() != test.samples() ||
      train.sample_rate_hz() != test.sample_rate_hz())
    throw DataError("train and test sets disagree on signal shape");
}

}  // namespace

const char* ablation_mode_name(AblationMode m) {
  switch (m) {
    case AblationMode::expanding: return "expanding";
    case AblationMode::sliding: return "sliding";
    case AblationMode::decreasing: return "decreasing";
    case AblationMode::spatial: return "spatial";
  }
  throw ConfigError("unknown ablation mode");
}

AblationMode ablation_mode_from_name(const std::string& s) {
  if (s == "expanding") return AblationMode::expanding;
  if (s == "sliding") return AblationMode::sliding;
  if (s == "decreasing") return AblationMode::decreasing;
  if (s == "spatial") return AblationMode::spatial;
  throw ConfigError("unknown ablation mode: " + s);
}

std::string AblationGrid::tsv() const {
  std::string out =
      "label\tmode\tstart_ms\tend_ms\tregions\tevaluated\t"
      "retrieval_top1\tretrieval_top5\tclassification_top1\t"
      "classification_top5\tn_queries\tnote\n";
  for (const auto& c : cells) {
    out += c.label;
    out += "\t";
    out += ablation_mode_name(mode);
    out += "\t";
    if (mode == AblationMode::spatial) {
      out += "-\t-\t" + join_regions(c.regions);
    } else {
      out += format_ms(c.window_start_ms) + "\t" + format_ms(c.window_end_ms) +
             "\t-";
    }
    out += c.evaluated ? "\t1" : "\t0";
    if (c.evaluated) {
      out += "\t" + format_acc(c.retrieval.top1);
      out += "\t" + format_acc(c.retrieval.top5);
      out += "\t" + format_acc(c.classification.top1);
      out += "\t" + format_acc(c.classification.top5);
      out += "\t" + std::to_string(c.retrieval.n_queries);
    } else {
      out += "\t-\t-\t-\t-\t-";
    }
    out += "\t" + c.note + "\n";
  }
  return out;
}

ZeroshotReport train_eval_full(const TrialSet& train, const TrialSet& test,
                               const EmbeddingProvider& provider,
                               const AblationSetup& setup) {
  check_matching_shapes(train, test);
  return run_recipe(train, test, provider, setup);
}

AblationGrid temporal_ablation(const TrialSet& train, const TrialSet& test,
                               const EmbeddingProvider& provider,
                               const AblationSetup& setup, AblationMode mode,
                               double step_ms) {
  if (mode == AblationMode::spatial)
    throw ConfigError("temporal_ablation does not handle the spatial mode");
  if (!(step_ms > 0.0) || !std::isfinite(step_ms))
    throw ConfigError("step_ms must be positive and finite");
  check_matching_shapes(train, test);

  const double rate = train.sample_rate_hz();
  const double duration_ms =
      static_cast<double>(train.samples()) / rate * 1000.0;

  // Uniform grid of t. Expanding/sliding cells end at t and always include a
  // final cell at the full duration; decreasing cells start at t from 0.
  std::vector<double> grid;
  if (mode == AblationMode::decreasing) {
    for (double t = 0.0; t < duration_ms - 1e-9; t += step_ms) grid.push_back(t);
  } else {
    for (double t = step_ms; t < duration_ms - 1e-9; t += step_ms)
      grid.push_back(t);
    grid.push_back(duration_ms);
  }

  AblationGrid out;
  out.mode = mode;
  out.strategy = setup.strategy;

  AlignModel reused;
  if (setup.strategy == CellStrategy::mask_and_reuse)
    reused = train_cell_model(train, provider, setup);

  for (double t : grid) {
    double a = 0.0;
    double b = duration_ms;
    if (mode == AblationMode::expanding) b = t;
    if (mode == AblationMode::sliding) { a = t - setup.sliding_width_ms; b = t; }
    if (mode == AblationMode::decreasing) a = t;

    AblationCell cell;
    cell.window_start_ms = a;
    cell.window_end_ms = b;
    cell.label = window_label(a, b);

    WindowPlan plan = plan_window(a, b, duration_ms, rate);
    if (!plan.valid) {
      cell.note = plan.reason + "; skipped";
      out.cells.push_back(std::move(cell));
      continue;
    }

    try {
      if (setup.strategy == CellStrategy::mask_and_reuse) {
        fill_cell(cell, evaluate_zeroshot(reused, mask_outside_window(test, a, b),
                                          provider));
        cell.note = kMaskNote;
      } else {
        fill_cell(cell, run_recipe(crop_time_window(train, a, b),
                                   crop_time_window(test, a, b), provider,
                                   setup));
      }
    } catch (const ConfigError& e) {
      cell.note = std::string(e.what()) + "; skipped";
    } catch (const NumericError& e) {
      cell.note = std::string("training failed: ") + e.what() + "; skipped";
    }
    out.cells.push_back(std::move(cell));
  }
  return out;
}

AblationGrid spatial_ablation(const TrialSet& train, const TrialSet& test,
                              const EmbeddingProvider& provider,
                              const AblationSetup& setup,
                              const std::vector<std::vector<std::string>>& region_sets,
                              const ChannelGroupMap& map) {
  if (region_sets.empty()) throw ConfigError("no region sets given");
  check_matching_shapes(train, test);

  AblationGrid out;
  out.mode = AblationMode::spatial;
  out.strategy = setup.strategy;

  AlignModel reused;
  if (setup.strategy == CellStrategy::mask_and_reuse)
    reused = train_cell_model(train, provider, setup);

  for (const auto& set : region_sets) {
    if (set.empty()) throw ConfigError("empty region set");
    AblationCell cell;
    cell.regions = set;
    cell.label = join_regions(set);

    if (setup.strategy == CellStrategy::mask_and_reuse) {
      std::set<std::string> keep;
      for (const auto& region : set) {
        const auto* names = map.find(region);
        if (!names) throw ConfigError("unknown channel region: " + region);
        keep.insert(names->begin(), names->end());
      }
      fill_cell(cell,
                evaluate_zeroshot(reused, mask_outside_channels(test, keep),
                                  provider));
      cell.note = kMaskNote;
    } else {
      fill_cell(cell, run_recipe(select_channels(train, set, map),
                                 select_channels(test, set, map), provider,
                                 setup));
    }
    out.cells.push_back(std::move(cell));
  }
  return out;
}

std::string rank_dump_tsv(const std::vector<RetrievalResult>& results,
                          const std::vector<std::int64_t>& truth) {
  TopKReport report = topk_accuracy(results, truth, "rank_dump");
  std::string out = "query_id\trank\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    out += std::to_string(results[i].query_id) + "\t" +
           std::to_string(report.ranks[i]) + "\n";
  }
  return out;
}

}  // namespace neuvis
