#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "recapfx/market_data.hpp"

namespace recapfx::recurrent {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class CellKind { gru, lstm };
std::string to_string(CellKind kind);
CellKind parse_cell(const std::string& text);

struct GruWeights {
  MatrixXd W_z, W_r, W_h;  // hidden x input
  MatrixXd U_z, U_r, U_h;  // hidden x hidden
  VectorXd b_z, b_r, b_h;
  std::size_t hidden_size = 0;
  std::size_t input_size = 0;

  static GruWeights zeros(std::size_t hidden, std::size_t input);
};

struct LstmWeights {
  MatrixXd W_i, W_f, W_o, W_c;
  MatrixXd U_i, U_f, U_o, U_c;
  VectorXd b_i, b_f, b_o, b_c;
  std::size_t hidden_size = 0;
  std::size_t input_size = 0;

  static LstmWeights zeros(std::size_t hidden, std::size_t input);
};

struct LstmState {
  VectorXd h;
  VectorXd c;
};

/// z = s(W_z x + U_z h + b_z), r likewise, h~ = tanh(W_h x + r*(U_h h) + b_h),
/// h' = z*h + (1-z)*h~. The update gate keeps the old state.
VectorXd gru_cell_forward(const VectorXd& x, const VectorXd& h_prev, const GruWeights& w);

/// Standard LSTM with input, forget and output gates.
LstmState lstm_cell_forward(const VectorXd& x, const LstmState& state, const LstmWeights& w);

/// Per-feature min-max fitted on a training split; the label is scaled the
/// same way. Constant columns map to 0.5. No clipping outside the fit range.
struct MinMaxScaler {
  std::vector<std::string> feature_names;
  std::vector<double> min;
  std::vector<double> max;
  double label_min = 0.0;
  double label_max = 1.0;

  double transform(std::size_t feature, double v) const;
  double transform_label(double v) const;
  double inverse_label(double v) const;
};

MinMaxScaler fit_scaler(const SequenceDataset& train);
/// Throws DataError when the dataset's features differ from the scaler's.
SequenceDataset apply_scaler(const MinMaxScaler& scaler, const SequenceDataset& data);

struct Architecture {
  CellKind cell = CellKind::gru;
  std::size_t hidden = 32;
};

enum class Optimizer { adam, sgd };

struct TrainConfig {
  std::size_t batch_size = 256;
  double learning_rate = 1e-5;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Recurrent layer plus a linear scalar head over the last hidden state.
/// Parameters live in one flat vector; see parameter_count() for layout.
struct RnnRegressor {
  Architecture arch;
  std::size_t input_size = 0;
  VectorXd params;
  MinMaxScaler scaler;

  GruWeights gru_weights() const;
  LstmWeights lstm_weights() const;
};

std::size_t parameter_count(const Architecture& arch, std::size_t input_size);

/// Glorot-uniform matrices, zero biases.
RnnRegressor init_regressor(const Architecture& arch, std::size_t input_size, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_rmse = 0.0;
  double val_rmse = 0.0;  // NaN without a validation set
};

struct TrainResult {
  RnnRegressor model;
  std::vector<EpochRecord> history;  // epoch 0 = before any update
  std::size_t best_epoch = 0;
};

/// Fits the scaler on `train`, then minibatch BPTT on mean squared error.
/// Early stopping on validation RMSE (original units) with `patience`; the
/// best-validation weights are returned. An empty `val` disables early
/// stopping and returns the final weights. Throws TrainingError on a
/// non-finite loss.
TrainResult train_rnn(const SequenceDataset& train, const SequenceDataset& val, const Architecture& arch,
                      const TrainConfig& cfg);

/// Applies the model's scaler to raw sequences and returns one prediction per
/// row in original label units.
std::vector<double> predict_rnn(const RnnRegressor& model, const SequenceDataset& data);

/// Mean squared error on already scaled inputs and its gradient with respect
/// to every parameter.
double loss_and_gradient(const Architecture& arch, std::size_t input_size, const VectorXd& params,
                         const std::vector<MatrixXd>& steps, const VectorXd& target, VectorXd* grad);

struct GradientCheckOptions {
  std::size_t input_size = 3;
  std::size_t sequence_length = 6;
  std::size_t batch = 4;
  double step = 1e-6;
  bool zero_weights = false;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  VectorXd analytic;
  VectorXd numeric;
  VectorXd targets;
};

/// Compares BPTT gradients against central finite differences on a random
/// small problem. Relative error is |a-n| / max(|a|+|n|, 1e-5). Requires
/// hidden <= 8 and sequence length <= 20.
GradientCheckReport gradient_check(const Architecture& arch, std::uint64_t seed,
                                   const GradientCheckOptions& options = {});

nlohmann::json to_json(const RnnRegressor& model);
RnnRegressor regressor_from_json(const nlohmann::json& doc);
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace recapfx::recurrent
