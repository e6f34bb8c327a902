#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "recapfx/evaluation.hpp"
#include "recapfx/market_data.hpp"

namespace recapfx::stacking {

/// Layer-one learners in fixed column order.
enum class BaseModel { newton_boost, hist_boost, forest, lstm, gru };
inline constexpr std::array<BaseModel, 5> kBaseModels = {BaseModel::newton_boost, BaseModel::hist_boost,
                                                         BaseModel::forest, BaseModel::lstm, BaseModel::gru};
std::string to_string(BaseModel m);

struct MetaFrame {
  std::vector<Timestamp> index;
  std::array<std::vector<double>, 5> predictions;
  std::vector<double> label;

  std::size_t rows() const { return index.size(); }
};

/// Throws DataError on length mismatch or a non-finite prediction (naming
/// the model).
MetaFrame build_meta_frame(std::array<std::vector<double>, 5> predictions, std::vector<double> label,
                           std::vector<Timestamp> index);

/// Members sorted in column order.
using Combination = std::vector<BaseModel>;

/// All 31 nonempty subsets, by size, then lexicographically by member order.
std::vector<Combination> enumerate_combinations();
std::string combination_name(const Combination& c);

struct MetaSplits {
  MetaFrame train;
  MetaFrame validation;
  MetaFrame test;
};
/// Throws ParameterError on an invalid spec, DataError on an empty part.
MetaSplits split_meta(const MetaFrame& frame, const SplitSpec& spec);

struct MetaNetConfig {
  std::size_t hidden = 16;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;

  void validate() const;
};

/// One ReLU hidden layer and a linear output, on inputs and label min-max
/// scaled over meta-train.
struct MetaModel {
  Combination combo;
  Eigen::MatrixXd W1;  // hidden x inputs
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;
  std::vector<double> input_min;
  std::vector<double> input_max;
  double label_min = 0.0;
  double label_max = 1.0;
  std::size_t best_epoch = 0;
};

/// Adam on squared error with early stopping on meta-validation RMSE.
MetaModel train_meta_nn(const MetaFrame& train, const MetaFrame& validation, const Combination& combo,
                        std::uint64_t seed, const MetaNetConfig& config = {});
std::vector<double> predict_meta(const MetaModel& model, const MetaFrame& frame);

struct StackingRow {
  std::size_t id = 0;
  Combination members;
  evaluation::Metrics validation;
  evaluation::Metrics test;
};

struct StackingReport {
  std::vector<StackingRow> rows;
  std::size_t selected = 0;
  /// True when selection used meta-test RMSE instead of meta-validation.
  bool selected_on_test = false;
};

/// Trains one meta model per combination with seed derived from (seed, id)
/// and picks the minimum RMSE on meta-validation (or meta-test when asked).
StackingReport run_stacking_search(const MetaFrame& frame, const SplitSpec& spec, std::uint64_t seed,
                                   const MetaNetConfig& config = {}, bool select_on_test = false,
                                   unsigned threads = 1);

/// `id,rmse,mae,combination` with meta-test metrics.
std::string stacking_csv(const StackingReport& report);
nlohmann::json to_json(const StackingReport& report);
nlohmann::json to_json(const MetaModel& model);

}  // namespace recapfx::stacking
