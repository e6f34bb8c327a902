#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "recapfx/evaluation.hpp"
#include "recapfx/market_data.hpp"
#include "recapfx/recurrent.hpp"
#include "recapfx/trees.hpp"

namespace recapfx::recap {

/// Min-max to [0, 1]; an all-equal vector maps to 0.5 everywhere.
trees::ImportanceVector normalize_scores(const trees::ImportanceVector& v);

/// final(f) = sum_m norm_m(f) / rmse_m. All vectors must share one feature
/// universe; every rmse must be positive.
std::vector<double> recap_scores(const std::array<trees::ImportanceVector, 3>& normalized,
                                 const std::array<double, 3>& rmses);

/// Indices of the k best scores; ties go to the smaller name.
std::vector<std::size_t> top_k(const std::vector<std::string>& names, const std::vector<double>& scores,
                               std::size_t k);

/// Splits `name(t)` / `name(t-j)` into base name and lag. DataError otherwise.
std::pair<std::string, std::size_t> parse_lagged_name(const std::string& lagged);

/// Strips lag suffixes and deduplicates, keeping first-selected order.
std::vector<std::string> collapse_to_base(const std::vector<std::string>& lagged);

/// The three tree learners, in the order used by every report.
enum class TreeModel { newton_boost, forest, hist_boost };
inline constexpr std::array<TreeModel, 3> kTreeModels = {TreeModel::newton_boost, TreeModel::forest,
                                                        TreeModel::hist_boost};
std::string to_string(TreeModel m);
trees::ImportanceKind importance_kind(TreeModel m);

struct SequenceSettings {
  recurrent::Architecture arch;
  recurrent::TrainConfig train;
  /// Trailing share of the training rows (by time) held out for early
  /// stopping.
  double early_stop_fraction = 0.1;
};

struct RecapSettings {
  std::size_t lookback = 5;
  trees::BoostParams newton_boost;
  trees::BoostParams hist_boost;
  trees::ForestParams forest;
  SequenceSettings sequence;
  /// Also train the all-features sequence model for comparison.
  bool baseline = true;
  /// No row of either frame may fall in this range.
  std::optional<TimeRange> forbidden;
  unsigned threads = 1;
};

struct SequenceFit {
  std::vector<std::string> features;
  evaluation::Metrics metrics;  // on the held-out frame, original units
  std::size_t best_epoch = 0;
  std::vector<recurrent::EpochRecord> history;
  recurrent::RnnRegressor model;
  std::vector<double> predictions;
  std::vector<Timestamp> prediction_index;
};

/// Trains the configured sequence model on `features` (taken in frame column
/// order) with early stopping on the trailing share of `train`, and scores it
/// on `heldout`. The first lookback-1 rows of `heldout` only serve as context.
SequenceFit fit_sequence(const FeatureFrame& train, const FeatureFrame& heldout,
                         const std::vector<std::string>& features, const RecapSettings& settings);

/// Same with an explicit early-stopping frame; an empty `stop` trains for the
/// configured epoch count.
SequenceFit fit_sequence(const FeatureFrame& train, const FeatureFrame& stop, const FeatureFrame& heldout,
                         const std::vector<std::string>& features, const RecapSettings& settings);

struct ModelStep {
  TreeModel model = TreeModel::newton_boost;
  std::vector<std::string> top_lagged;
  std::vector<std::string> base;
  SequenceFit fit;
};

struct RecapResult {
  std::size_t k = 0;
  std::array<ModelStep, 3> steps;
  std::array<double, 3> rmses{};
  std::vector<double> final_scores;  // aligned with RecapRun::lagged_names
  std::vector<std::string> selected_lagged;
  std::vector<std::string> selected_base;
  SequenceFit final_fit;
};

struct Importances {
  std::vector<std::string> lagged_names;
  std::array<trees::ImportanceVector, 3> raw;
  std::array<trees::ImportanceVector, 3> normalized;
};

/// Step 1 alone: the three tree models on the windowed frame.
Importances fit_importances(const FeatureFrame& train, const RecapSettings& settings);

struct RecapRun {
  std::vector<std::string> lagged_names;
  std::array<trees::ImportanceVector, 3> raw;
  std::array<trees::ImportanceVector, 3> normalized;
  std::optional<SequenceFit> baseline;
  std::vector<RecapResult> results;
};

/// Step 1 fits the tree models on the windowed `train` frame; Step 2 scores
/// each model's top-k with the sequence model on `heldout`; Step 3 fuses the
/// scores and refits on the final selection. Both frames must be cleaned and
/// labelled. Step 1 is skipped when `importances` is given.
RecapRun run_recap(const FeatureFrame& train, const FeatureFrame& heldout, const std::vector<std::size_t>& ks,
                   const RecapSettings& settings, const Importances* importances = nullptr);

nlohmann::json to_json(const SequenceFit& fit);
nlohmann::json to_json(const RecapRun& run);
/// `k,rank,feature,newton_boost,forest,hist_boost,final`, best first.
std::string scores_csv(const RecapRun& run);

/// Stationary frame with `high`, `informative` AR(1) columns that drive the
/// next bar's high, and `noise` AR(1) columns that do not. Labelled with the
/// highest high over the next `horizon` bars and cleaned.
struct PlantedFrameParams {
  std::size_t n = 20000;
  std::size_t informative = 5;
  std::size_t noise = 64;
  double persistence = 0.9;
  double signal = 1e-3;
  double noise_scale = 1e-3;
  std::size_t horizon = 5;
  std::uint64_t seed = 1;
  Timestamp start = std::chrono::sys_days{std::chrono::year{2014} / 6 / 1};
  std::chrono::seconds step = std::chrono::minutes(15);
};
FeatureFrame generate_planted_frame(const PlantedFrameParams& params);

}  // namespace recapfx::recap
