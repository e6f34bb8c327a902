#include "recapfx/recurrent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "recapfx/error.hpp"
#include "recapfx/random.hpp"

namespace recapfx::recurrent {
namespace {

constexpr int kFormatVersion = 1;
using Eigen::Index;
using Eigen::Map;

std::size_t gate_count(CellKind kind) { return kind == CellKind::gru ? 3 : 4; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

MatrixXd sigmoid(const MatrixXd& a) { return a.unaryExpr([](double v) { return sigmoid(v); }); }
MatrixXd tanh_m(const MatrixXd& a) { return a.array().tanh().matrix(); }

/// Views into the flat parameter vector: stacked gates W (GH x I),
/// U (GH x H), b (GH), head w (H), head b.
template <class Vec>
struct Layout {
  Index G, H, I;
  Vec* p;

  auto W() const { return Map<std::conditional_t<std::is_const_v<Vec>, const MatrixXd, MatrixXd>>(p->data(), G * H, I); }
  auto U() const {
    return Map<std::conditional_t<std::is_const_v<Vec>, const MatrixXd, MatrixXd>>(p->data() + G * H * I, G * H, H);
  }
  auto b() const {
    return Map<std::conditional_t<std::is_const_v<Vec>, const VectorXd, VectorXd>>(p->data() + G * H * (I + H), G * H);
  }
  auto head_w() const {
    return Map<std::conditional_t<std::is_const_v<Vec>, const VectorXd, VectorXd>>(p->data() + G * H * (I + H + 1), H);
  }
  double& head_b() const requires(!std::is_const_v<Vec>) { return (*p)[G * H * (I + H + 1) + H]; }
  double head_b_value() const { return (*p)[G * H * (I + H + 1) + H]; }
};

template <class Vec>
Layout<Vec> layout(const Architecture& arch, std::size_t input, Vec& params) {
  return {static_cast<Index>(gate_count(arch.cell)), static_cast<Index>(arch.hidden), static_cast<Index>(input),
          &params};
}

/// Forward over all steps; returns predictions (1 x B) and, when `grad` is
/// given, accumulates d(mean sq error)/dparams.
VectorXd run(const Architecture& arch, std::size_t input, const VectorXd& params, const std::vector<MatrixXd>& steps,
             const VectorXd* target, VectorXd* grad, double* loss) {
  const auto L = layout(arch, input, params);
  const Index H = L.H, B = steps.empty() ? 0 : steps[0].cols();
  const auto T = steps.size();
  const auto W = L.W();
  const auto U = L.U();
  const auto b = L.b();

  std::vector<MatrixXd> hs(T + 1, MatrixXd::Zero(H, B));
  std::vector<MatrixXd> cs;
  // Cached activations per step.
  std::vector<MatrixXd> g1(T), g2(T), g3(T), g4(T), uh(T);
  if (arch.cell == CellKind::lstm) cs.assign(T + 1, MatrixXd::Zero(H, B));

  for (std::size_t t = 0; t < T; ++t) {
    const MatrixXd wx = (W * steps[t]).colwise() + b;
    const MatrixXd uhp = U * hs[t];
    if (arch.cell == CellKind::gru) {
      g1[t] = sigmoid(wx.topRows(H) + uhp.topRows(H));               // z
      g2[t] = sigmoid(wx.middleRows(H, H) + uhp.middleRows(H, H));   // r
      uh[t] = uhp.bottomRows(H);                                     // U_h h
      g3[t] = tanh_m(wx.bottomRows(H) + g2[t].cwiseProduct(uh[t]));  // h~
      hs[t + 1] = g1[t].cwiseProduct(hs[t]) + (1.0 - g1[t].array()).matrix().cwiseProduct(g3[t]);
    } else {
      const MatrixXd a = wx + uhp;
      g1[t] = sigmoid(a.topRows(H));            // i
      g2[t] = sigmoid(a.middleRows(H, H));      // f
      g3[t] = sigmoid(a.middleRows(2 * H, H));  // o
      g4[t] = tanh_m(a.bottomRows(H));          // c~
      cs[t + 1] = g2[t].cwiseProduct(cs[t]) + g1[t].cwiseProduct(g4[t]);
      hs[t + 1] = g3[t].cwiseProduct(tanh_m(cs[t + 1]));
    }
  }
  VectorXd pred = (L.head_w().transpose() * hs[T]).transpose();
  pred.array() += L.head_b_value();
  if (!target) return pred;

  const VectorXd diff = pred - *target;
  if (loss) *loss = diff.squaredNorm() / static_cast<double>(B);
  if (!grad) return pred;

  grad->setZero(params.size());
  auto G = layout(arch, input, *grad);
  auto dW = G.W();
  auto dU = G.U();
  auto db = G.b();
  const VectorXd dy = diff * (2.0 / static_cast<double>(B));
  G.head_w() = hs[T] * dy;
  G.head_b() = dy.sum();
  MatrixXd dh = L.head_w() * dy.transpose();
  MatrixXd dc = MatrixXd::Zero(H, B);
  MatrixXd dA(W.rows(), B);
  for (std::size_t t = T; t-- > 0;) {
    const MatrixXd& hp = hs[t];
    if (arch.cell == CellKind::gru) {
      const auto& z = g1[t];
      const auto& r = g2[t];
      const auto& ht = g3[t];
      const MatrixXd dz = dh.cwiseProduct(hp - ht);
      const MatrixXd dht = dh.cwiseProduct((1.0 - z.array()).matrix());
      const MatrixXd dah = dht.cwiseProduct((1.0 - ht.array().square()).matrix());
      const MatrixXd dr = dah.cwiseProduct(uh[t]);
      dA.topRows(H) = dz.cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
      dA.middleRows(H, H) = dr.cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
      dA.bottomRows(H) = dah;
      dW.noalias() += dA * steps[t].transpose();
      db += dA.rowwise().sum();
      // The candidate's recurrent term is gated by r.
      dA.bottomRows(H) = dah.cwiseProduct(r);
      dU.noalias() += dA * hp.transpose();
      dh = dh.cwiseProduct(z) + U.transpose() * dA;
    } else {
      const auto& i = g1[t];
      const auto& f = g2[t];
      const auto& o = g3[t];
      const auto& cc = g4[t];
      const MatrixXd tc = tanh_m(cs[t + 1]);
      dc += dh.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix());
      dA.topRows(H) = dc.cwiseProduct(cc).cwiseProduct(i.cwiseProduct((1.0 - i.array()).matrix()));
      dA.middleRows(H, H) = dc.cwiseProduct(cs[t]).cwiseProduct(f.cwiseProduct((1.0 - f.array()).matrix()));
      dA.middleRows(2 * H, H) = dh.cwiseProduct(tc).cwiseProduct(o.cwiseProduct((1.0 - o.array()).matrix()));
      dA.bottomRows(H) = dc.cwiseProduct(i).cwiseProduct((1.0 - cc.array().square()).matrix());
      dW.noalias() += dA * steps[t].transpose();
      dU.noalias() += dA * hp.transpose();
      db += dA.rowwise().sum();
      dh = U.transpose() * dA;
      dc = dc.cwiseProduct(f);
    }
  }
  return pred;
}

/// Step matrices (features x batch) for the given rows of a scaled dataset.
std::vector<MatrixXd> gather(const SequenceDataset& d, const std::size_t* rows, std::size_t count) {
  std::vector<MatrixXd> steps(d.lookback, MatrixXd(static_cast<Index>(d.features), static_cast<Index>(count)));
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t r = rows[b];
    for (std::size_t s = 0; s < d.lookback; ++s)
      for (std::size_t f = 0; f < d.features; ++f)
        steps[s](static_cast<Index>(f), static_cast<Index>(b)) = d.at(r, s, f);
  }
  return steps;
}

constexpr std::size_t kPredictChunk = 256;

/// Predictions in scaled label units, fixed chunking.
std::vector<double> predict_scaled(const RnnRegressor& m, const SequenceDataset& scaled) {
  std::vector<double> out(scaled.rows);
  std::vector<std::size_t> idx(scaled.rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t start = 0; start < scaled.rows; start += kPredictChunk) {
    const std::size_t n = std::min(kPredictChunk, scaled.rows - start);
    const auto steps = gather(scaled, idx.data() + start, n);
    const VectorXd p = run(m.arch, m.input_size, m.params, steps, nullptr, nullptr, nullptr);
    for (std::size_t i = 0; i < n; ++i) out[start + i] = p[static_cast<Index>(i)];
  }
  return out;
}

double rmse_original(const RnnRegressor& m, const SequenceDataset& scaled, const std::vector<double>& y_raw) {
  const auto p = predict_scaled(m, scaled);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = m.scaler.inverse_label(p[i]) - y_raw[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(p.size()));
}

nlohmann::json matrix_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

MatrixXd matrix_from_json(const nlohmann::json& j, Index rows, Index cols) {
  if (static_cast<Index>(j.size()) != rows) throw DataError("weight matrix has wrong row count");
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Index>(row.size()) != cols) throw DataError("weight matrix has wrong column count");
    for (Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

}  // namespace

std::string to_string(CellKind kind) { return kind == CellKind::gru ? "gru" : "lstm"; }

CellKind parse_cell(const std::string& text) {
  if (text == "gru") return CellKind::gru;
  if (text == "lstm") return CellKind::lstm;
  throw ParameterError("unknown recurrent cell `" + text + "`");
}

GruWeights GruWeights::zeros(std::size_t hidden, std::size_t input) {
  const auto H = static_cast<Index>(hidden), I = static_cast<Index>(input);
  GruWeights w;
  w.W_z = w.W_r = w.W_h = MatrixXd::Zero(H, I);
  w.U_z = w.U_r = w.U_h = MatrixXd::Zero(H, H);
  w.b_z = w.b_r = w.b_h = VectorXd::Zero(H);
  w.hidden_size = hidden;
  w.input_size = input;
  return w;
}

LstmWeights LstmWeights::zeros(std::size_t hidden, std::size_t input) {
  const auto H = static_cast<Index>(hidden), I = static_cast<Index>(input);
  LstmWeights w;
  w.W_i = w.W_f = w.W_o = w.W_c = MatrixXd::Zero(H, I);
  w.U_i = w.U_f = w.U_o = w.U_c = MatrixXd::Zero(H, H);
  w.b_i = w.b_f = w.b_o = w.b_c = VectorXd::Zero(H);
  w.hidden_size = hidden;
  w.input_size = input;
  return w;
}

VectorXd gru_cell_forward(const VectorXd& x, const VectorXd& h, const GruWeights& w) {
  if (x.size() != static_cast<Index>(w.input_size) || h.size() != static_cast<Index>(w.hidden_size))
    throw DataError("gru_cell_forward: shape mismatch");
  const VectorXd z = sigmoid(w.W_z * x + w.U_z * h + w.b_z);
  const VectorXd r = sigmoid(w.W_r * x + w.U_r * h + w.b_r);
  const VectorXd candidate = tanh_m(w.W_h * x + r.cwiseProduct(w.U_h * h) + w.b_h);
  return z.cwiseProduct(h) + (1.0 - z.array()).matrix().cwiseProduct(candidate);
}

LstmState lstm_cell_forward(const VectorXd& x, const LstmState& s, const LstmWeights& w) {
  if (x.size() != static_cast<Index>(w.input_size) || s.h.size() != static_cast<Index>(w.hidden_size) ||
      s.c.size() != static_cast<Index>(w.hidden_size))
    throw DataError("lstm_cell_forward: shape mismatch");
  const VectorXd i = sigmoid(w.W_i * x + w.U_i * s.h + w.b_i);
  const VectorXd f = sigmoid(w.W_f * x + w.U_f * s.h + w.b_f);
  const VectorXd o = sigmoid(w.W_o * x + w.U_o * s.h + w.b_o);
  const VectorXd g = tanh_m(w.W_c * x + w.U_c * s.h + w.b_c);
  LstmState out;
  out.c = f.cwiseProduct(s.c) + i.cwiseProduct(g);
  out.h = o.cwiseProduct(tanh_m(out.c));
  return out;
}

double MinMaxScaler::transform(std::size_t f, double v) const {
  const double range = max[f] - min[f];
  return range == 0.0 ? 0.5 : (v - min[f]) / range;
}

double MinMaxScaler::transform_label(double v) const {
  const double range = label_max - label_min;
  return range == 0.0 ? 0.5 : (v - label_min) / range;
}

double MinMaxScaler::inverse_label(double v) const {
  const double range = label_max - label_min;
  return range == 0.0 ? label_min : label_min + v * range;
}

MinMaxScaler fit_scaler(const SequenceDataset& train) {
  if (train.rows == 0) throw DataError("cannot fit a scaler on an empty training set");
  MinMaxScaler s;
  s.feature_names = train.feature_names;
  s.min.assign(train.features, std::numeric_limits<double>::infinity());
  s.max.assign(train.features, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < train.rows; ++r)
    for (std::size_t t = 0; t < train.lookback; ++t)
      for (std::size_t f = 0; f < train.features; ++f) {
        const double v = train.at(r, t, f);
        s.min[f] = std::min(s.min[f], v);
        s.max[f] = std::max(s.max[f], v);
      }
  const auto [lo, hi] = std::minmax_element(train.y.begin(), train.y.end());
  s.label_min = *lo;
  s.label_max = *hi;
  return s;
}

SequenceDataset apply_scaler(const MinMaxScaler& scaler, const SequenceDataset& data) {
  if (data.feature_names != scaler.feature_names)
    throw DataError("scaler mismatch: dataset features differ from the scaler's training features");
  SequenceDataset out = data;
  for (std::size_t r = 0; r < data.rows; ++r)
    for (std::size_t t = 0; t < data.lookback; ++t)
      for (std::size_t f = 0; f < data.features; ++f) {
        const std::size_t k = (r * data.lookback + t) * data.features + f;
        out.X[k] = scaler.transform(f, data.X[k]);
      }
  for (auto& v : out.y) v = scaler.transform_label(v);
  return out;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ParameterError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
  if (max_epochs == 0) throw ParameterError("max_epochs must be >= 1");
}

std::size_t parameter_count(const Architecture& arch, std::size_t input) {
  const std::size_t G = gate_count(arch.cell), H = arch.hidden;
  return G * H * (input + H + 1) + H + 1;
}

GruWeights RnnRegressor::gru_weights() const {
  if (arch.cell != CellKind::gru) throw ParameterError("model is not a GRU");
  const auto L = layout(arch, input_size, params);
  const Index H = L.H;
  GruWeights w;
  w.hidden_size = arch.hidden;
  w.input_size = input_size;
  w.W_z = L.W().topRows(H);
  w.W_r = L.W().middleRows(H, H);
  w.W_h = L.W().bottomRows(H);
  w.U_z = L.U().topRows(H);
  w.U_r = L.U().middleRows(H, H);
  w.U_h = L.U().bottomRows(H);
  w.b_z = L.b().head(H);
  w.b_r = L.b().segment(H, H);
  w.b_h = L.b().tail(H);
  return w;
}

LstmWeights RnnRegressor::lstm_weights() const {
  if (arch.cell != CellKind::lstm) throw ParameterError("model is not an LSTM");
  const auto L = layout(arch, input_size, params);
  const Index H = L.H;
  LstmWeights w;
  w.hidden_size = arch.hidden;
  w.input_size = input_size;
  w.W_i = L.W().topRows(H);
  w.W_f = L.W().middleRows(H, H);
  w.W_o = L.W().middleRows(2 * H, H);
  w.W_c = L.W().bottomRows(H);
  w.U_i = L.U().topRows(H);
  w.U_f = L.U().middleRows(H, H);
  w.U_o = L.U().middleRows(2 * H, H);
  w.U_c = L.U().bottomRows(H);
  w.b_i = L.b().head(H);
  w.b_f = L.b().segment(H, H);
  w.b_o = L.b().segment(2 * H, H);
  w.b_c = L.b().tail(H);
  return w;
}

RnnRegressor init_regressor(const Architecture& arch, std::size_t input_size, std::uint64_t seed) {
  if (arch.hidden == 0) throw ParameterError("hidden size must be >= 1");
  if (input_size == 0) throw ParameterError("recurrent model needs at least one input feature");
  RnnRegressor m;
  m.arch = arch;
  m.input_size = input_size;
  m.params = VectorXd::Zero(static_cast<Index>(parameter_count(arch, input_size)));
  Rng rng(derive_seed(seed, "rnn_init"));
  auto L = layout(arch, input_size, m.params);
  const double h = static_cast<double>(arch.hidden), in = static_cast<double>(input_size);
  const double w_lim = std::sqrt(6.0 / (in + h)), u_lim = std::sqrt(6.0 / (h + h)), o_lim = std::sqrt(6.0 / (h + 1.0));
  auto W = L.W();
  for (Index c = 0; c < W.cols(); ++c)
    for (Index r = 0; r < W.rows(); ++r) W(r, c) = rng.uniform(-w_lim, w_lim);
  auto U = L.U();
  for (Index c = 0; c < U.cols(); ++c)
    for (Index r = 0; r < U.rows(); ++r) U(r, c) = rng.uniform(-u_lim, u_lim);
  auto hw = L.head_w();
  for (Index r = 0; r < hw.size(); ++r) hw[r] = rng.uniform(-o_lim, o_lim);
  return m;
}

double loss_and_gradient(const Architecture& arch, std::size_t input_size, const VectorXd& params,
                         const std::vector<MatrixXd>& steps, const VectorXd& target, VectorXd* grad) {
  double loss = 0.0;
  run(arch, input_size, params, steps, &target, grad, &loss);
  return loss;
}

TrainResult train_rnn(const SequenceDataset& train, const SequenceDataset& val, const Architecture& arch,
                      const TrainConfig& cfg) {
  cfg.validate();
  if (train.rows == 0) throw DataError("train_rnn: empty training set");
  if (val.rows > 0 && (val.features != train.features || val.lookback != train.lookback))
    throw DataError("train_rnn: validation shape differs from training shape");

  TrainResult result;
  RnnRegressor model = init_regressor(arch, train.features, cfg.seed);
  model.scaler = fit_scaler(train);
  const auto tr = apply_scaler(model.scaler, train);
  const SequenceDataset va = val.rows > 0 ? apply_scaler(model.scaler, val) : SequenceDataset{};
  const bool has_val = val.rows > 0;

  auto record = [&](std::size_t epoch) {
    EpochRecord rec{epoch, rmse_original(model, tr, train.y),
                    has_val ? rmse_original(model, va, val.y) : std::numeric_limits<double>::quiet_NaN()};
    if (!std::isfinite(rec.train_rmse) || (has_val && !std::isfinite(rec.val_rmse)))
      throw TrainingError("training diverged: non-finite RMSE at epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    return rec;
  };
  record(0);
  RnnRegressor best = model;
  double best_score = has_val ? result.history[0].val_rmse : std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  VectorXd m1 = VectorXd::Zero(model.params.size()), m2 = VectorXd::Zero(model.params.size());
  VectorXd grad;
  std::uint64_t step = 0;
  Rng shuffler(derive_seed(cfg.seed, "rnn_shuffle"));
  std::vector<std::size_t> order(tr.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  VectorXd target;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffler.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < tr.rows; start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, tr.rows - start);
      const auto steps = gather(tr, order.data() + start, n);
      target.resize(static_cast<Index>(n));
      for (std::size_t i = 0; i < n; ++i) target[static_cast<Index>(i)] = tr.y[order[start + i]];
      const double loss = loss_and_gradient(arch, model.input_size, model.params, steps, target, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      ++step;
      if (cfg.optimizer == Optimizer::sgd) {
        model.params -= cfg.learning_rate * grad;
      } else {
        m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
        m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        model.params.array() -=
            cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.epsilon);
      }
    }
    const auto rec = record(epoch);
    if (!has_val) {
      best = model;
      result.best_epoch = epoch;
      continue;
    }
    if (rec.val_rmse < best_score) {
      best_score = rec.val_rmse;
      best = model;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale > cfg.patience) {
      break;
    }
  }
  result.model = std::move(best);
  return result;
}

std::vector<double> predict_rnn(const RnnRegressor& model, const SequenceDataset& data) {
  if (data.features != model.input_size) throw DataError("predict_rnn: feature count mismatch");
  const auto scaled = apply_scaler(model.scaler, data);
  auto out = predict_scaled(model, scaled);
  for (auto& v : out) v = model.scaler.inverse_label(v);
  return out;
}

GradientCheckReport gradient_check(const Architecture& arch, std::uint64_t seed, const GradientCheckOptions& o) {
  if (arch.hidden == 0 || arch.hidden > 8) throw ParameterError("gradient check needs 1 <= hidden <= 8");
  if (o.sequence_length == 0 || o.sequence_length > 20)
    throw ParameterError("gradient check needs 1 <= sequence length <= 20");
  Rng rng(derive_seed(seed, "gradient_check"));
  VectorXd params = VectorXd::Zero(static_cast<Index>(parameter_count(arch, o.input_size)));
  if (!o.zero_weights)
    for (Index i = 0; i < params.size(); ++i) params[i] = rng.uniform(-0.5, 0.5);
  std::vector<MatrixXd> steps(o.sequence_length, MatrixXd(static_cast<Index>(o.input_size), static_cast<Index>(o.batch)));
  for (auto& s : steps)
    for (Index c = 0; c < s.cols(); ++c)
      for (Index r = 0; r < s.rows(); ++r) s(r, c) = rng.normal();
  VectorXd target(static_cast<Index>(o.batch));
  for (Index i = 0; i < target.size(); ++i) target[i] = rng.normal();

  GradientCheckReport rep;
  rep.targets = target;
  loss_and_gradient(arch, o.input_size, params, steps, target, &rep.analytic);
  rep.numeric.resize(params.size());
  for (Index i = 0; i < params.size(); ++i) {
    VectorXd plus = params, minus = params;
    plus[i] += o.step;
    minus[i] -= o.step;
    const double lp = loss_and_gradient(arch, o.input_size, plus, steps, target, nullptr);
    const double lm = loss_and_gradient(arch, o.input_size, minus, steps, target, nullptr);
    rep.numeric[i] = (lp - lm) / (2.0 * o.step);
    const double a = rep.analytic[i], n = rep.numeric[i];
    rep.max_relative_error = std::max(rep.max_relative_error, std::abs(a - n) / std::max(std::abs(a) + std::abs(n), 1e-5));
  }
  return rep;
}

nlohmann::json to_json(const RnnRegressor& m) {
  nlohmann::json weights;
  if (m.arch.cell == CellKind::gru) {
    const auto w = m.gru_weights();
    weights = {{"W_z", matrix_json(w.W_z)}, {"W_r", matrix_json(w.W_r)}, {"W_h", matrix_json(w.W_h)},
               {"U_z", matrix_json(w.U_z)}, {"U_r", matrix_json(w.U_r)}, {"U_h", matrix_json(w.U_h)},
               {"b_z", matrix_json(w.b_z)}, {"b_r", matrix_json(w.b_r)}, {"b_h", matrix_json(w.b_h)}};
  } else {
    const auto w = m.lstm_weights();
    weights = {{"W_i", matrix_json(w.W_i)}, {"W_f", matrix_json(w.W_f)}, {"W_o", matrix_json(w.W_o)},
               {"W_c", matrix_json(w.W_c)}, {"U_i", matrix_json(w.U_i)}, {"U_f", matrix_json(w.U_f)},
               {"U_o", matrix_json(w.U_o)}, {"U_c", matrix_json(w.U_c)}, {"b_i", matrix_json(w.b_i)},
               {"b_f", matrix_json(w.b_f)}, {"b_o", matrix_json(w.b_o)}, {"b_c", matrix_json(w.b_c)}};
  }
  const auto L = layout(m.arch, m.input_size, m.params);
  std::vector<double> head(L.head_w().data(), L.head_w().data() + L.H);
  return {{"format_version", kFormatVersion},
          {"type", "rnn"},
          {"cell", to_string(m.arch.cell)},
          {"hidden_size", m.arch.hidden},
          {"input_size", m.input_size},
          {"weights", weights},
          {"head_w", head},
          {"head_b", L.head_b_value()},
          {"scaler",
           {{"feature_names", m.scaler.feature_names},
            {"min", m.scaler.min},
            {"max", m.scaler.max},
            {"label_min", m.scaler.label_min},
            {"label_max", m.scaler.label_max}}}};
}

RnnRegressor regressor_from_json(const nlohmann::json& doc) {
  if (doc.value("format_version", 0) != kFormatVersion || doc.value("type", "") != "rnn")
    throw DataError("unsupported recurrent model document");
  RnnRegressor m;
  m.arch.cell = parse_cell(doc.at("cell").get<std::string>());
  m.arch.hidden = doc.at("hidden_size").get<std::size_t>();
  m.input_size = doc.at("input_size").get<std::size_t>();
  m.params = VectorXd::Zero(static_cast<Index>(parameter_count(m.arch, m.input_size)));
  auto L = layout(m.arch, m.input_size, m.params);
  const Index H = L.H, I = L.I;
  const auto& w = doc.at("weights");
  const std::vector<std::string> gates =
      m.arch.cell == CellKind::gru ? std::vector<std::string>{"z", "r", "h"} : std::vector<std::string>{"i", "f", "o", "c"};
  for (std::size_t g = 0; g < gates.size(); ++g) {
    const auto off = static_cast<Index>(g) * H;
    L.W().middleRows(off, H) = matrix_from_json(w.at("W_" + gates[g]), H, I);
    L.U().middleRows(off, H) = matrix_from_json(w.at("U_" + gates[g]), H, H);
    L.b().segment(off, H) = matrix_from_json(w.at("b_" + gates[g]), H, 1);
  }
  const auto head = doc.at("head_w").get<std::vector<double>>();
  if (static_cast<Index>(head.size()) != H) throw DataError("head weight has wrong size");
  for (Index i = 0; i < H; ++i) L.head_w()[i] = head[static_cast<std::size_t>(i)];
  L.head_b() = doc.at("head_b").get<double>();
  const auto& s = doc.at("scaler");
  m.scaler.feature_names = s.at("feature_names").get<std::vector<std::string>>();
  m.scaler.min = s.at("min").get<std::vector<double>>();
  m.scaler.max = s.at("max").get<std::vector<double>>();
  m.scaler.label_min = s.at("label_min").get<double>();
  m.scaler.label_max = s.at("label_max").get<double>();
  return m;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_rmse,val_rmse\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << r.train_rmse << ',';
    if (std::isnan(r.val_rmse))
      out << "NaN";
    else
      out << r.val_rmse;
    out << '\n';
  }
  return out.str();
}

}  // namespace recapfx::recurrent
