#include <doctest.h>

#include <cmath>

#include "recapfx/error.hpp"
#include "recapfx/random.hpp"
#include "recapfx/recurrent.hpp"
#include "support.hpp"

using namespace recapfx;
using namespace recapfx::recurrent;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill(MatrixXd& m, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-0.8, 0.8);
}
void fill(VectorXd& v, Rng& rng) {
  for (Eigen::Index r = 0; r < v.size(); ++r) v[r] = rng.uniform(-0.8, 0.8);
}

double dot_row(const MatrixXd& M, std::size_t r, const VectorXd& v) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < M.cols(); ++c) s += M(r, c) * v[c];
  return s;
}

// Sequence dataset from explicit rows; lookback 1 unless given.
SequenceDataset make_sequences(std::size_t rows, std::size_t lookback, std::size_t features, std::uint64_t seed,
                               double noise = 0.0) {
  Rng rng(seed);
  SequenceDataset d;
  d.rows = rows;
  d.lookback = lookback;
  d.features = features;
  for (std::size_t f = 0; f < features; ++f) d.feature_names.push_back("x" + std::to_string(f));
  d.X.resize(rows * lookback * features);
  for (auto& v : d.X) v = rng.uniform(-1.0, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t t = 0; t < lookback; ++t) s += d.at(r, t, 0);
    d.y.push_back(2.0 + 0.5 * s + noise * rng.normal());
    d.row_timestamps.push_back(testing_support::at(2018, 1, 1) + std::chrono::minutes(15) * static_cast<int>(r));
  }
  return d;
}

SequenceDataset take(const SequenceDataset& d, std::size_t from, std::size_t count) {
  SequenceDataset o = d;
  o.rows = count;
  const std::size_t w = d.lookback * d.features;
  o.X.assign(d.X.begin() + from * w, d.X.begin() + (from + count) * w);
  o.y.assign(d.y.begin() + from, d.y.begin() + from + count);
  o.row_timestamps.assign(d.row_timestamps.begin() + from, d.row_timestamps.begin() + from + count);
  return o;
}

}  // namespace

TEST_CASE("GRU cell") {
  SUBCASE("zero weights, unit state") {
    const auto w = GruWeights::zeros(3, 2);
    const VectorXd h = gru_cell_forward(VectorXd::Zero(2), VectorXd::Ones(3), w);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(h[i] == 0.5);
  }
  SUBCASE("saturated update gate keeps the state") {
    auto w = GruWeights::zeros(2, 2);
    w.b_z.setConstant(60.0);
    w.W_h.setConstant(3.0);
    const VectorXd prev = (VectorXd(2) << 0.3, -0.7).finished();
    const VectorXd h = gru_cell_forward(VectorXd::Ones(2), prev, w);
    CHECK(std::abs(h[0] - prev[0]) < 1e-12);
    CHECK(std::abs(h[1] - prev[1]) < 1e-12);
  }
  SUBCASE("matches a scalar loop") {
    Rng rng(1);
    const std::size_t H = 4, I = 3;
    auto w = GruWeights::zeros(H, I);
    for (auto* m : {&w.W_z, &w.W_r, &w.W_h, &w.U_z, &w.U_r, &w.U_h}) fill(*m, rng);
    for (auto* v : {&w.b_z, &w.b_r, &w.b_h}) fill(*v, rng);
    VectorXd x(I), h(H);
    fill(x, rng);
    fill(h, rng);
    const VectorXd got = gru_cell_forward(x, h, w);
    for (std::size_t j = 0; j < H; ++j) {
      const double z = sig(dot_row(w.W_z, j, x) + dot_row(w.U_z, j, h) + w.b_z[j]);
      const double r = sig(dot_row(w.W_r, j, x) + dot_row(w.U_r, j, h) + w.b_r[j]);
      const double cand = std::tanh(dot_row(w.W_h, j, x) + r * dot_row(w.U_h, j, h) + w.b_h[j]);
      CHECK(std::abs(got[j] - (z * h[j] + (1 - z) * cand)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(gru_cell_forward(VectorXd::Zero(5), VectorXd::Zero(3), GruWeights::zeros(3, 2)), DataError);
}

TEST_CASE("LSTM cell") {
  SUBCASE("zero weights halve the cell") {
    const auto w = LstmWeights::zeros(3, 2);
    const LstmState s{VectorXd::Zero(3), (VectorXd(3) << 1.0, -2.0, 0.4).finished()};
    const auto out = lstm_cell_forward(VectorXd::Ones(2), s, w);
    for (Eigen::Index i = 0; i < 3; ++i) {
      CHECK(out.c[i] == doctest::Approx(0.5 * s.c[i]).epsilon(1e-15));
      CHECK(out.h[i] == doctest::Approx(0.5 * std::tanh(out.c[i])).epsilon(1e-15));
    }
  }
  SUBCASE("open forget, closed input keeps the cell") {
    auto w = LstmWeights::zeros(2, 2);
    w.b_f.setConstant(60.0);
    w.b_i.setConstant(-60.0);
    w.W_c.setConstant(2.0);
    const LstmState s{VectorXd::Ones(2), (VectorXd(2) << 0.9, -0.1).finished()};
    const auto out = lstm_cell_forward(VectorXd::Ones(2), s, w);
    CHECK(std::abs(out.c[0] - 0.9) < 1e-12);
    CHECK(std::abs(out.c[1] + 0.1) < 1e-12);
  }
  SUBCASE("matches a scalar loop") {
    Rng rng(2);
    const std::size_t H = 3, I = 4;
    auto w = LstmWeights::zeros(H, I);
    for (auto* m : {&w.W_i, &w.W_f, &w.W_o, &w.W_c, &w.U_i, &w.U_f, &w.U_o, &w.U_c}) fill(*m, rng);
    for (auto* v : {&w.b_i, &w.b_f, &w.b_o, &w.b_c}) fill(*v, rng);
    VectorXd x(I), h(H), c(H);
    fill(x, rng);
    fill(h, rng);
    fill(c, rng);
    const auto got = lstm_cell_forward(x, {h, c}, w);
    for (std::size_t j = 0; j < H; ++j) {
      const double ig = sig(dot_row(w.W_i, j, x) + dot_row(w.U_i, j, h) + w.b_i[j]);
      const double fg = sig(dot_row(w.W_f, j, x) + dot_row(w.U_f, j, h) + w.b_f[j]);
      const double og = sig(dot_row(w.W_o, j, x) + dot_row(w.U_o, j, h) + w.b_o[j]);
      const double g = std::tanh(dot_row(w.W_c, j, x) + dot_row(w.U_c, j, h) + w.b_c[j]);
      const double cn = fg * c[j] + ig * g;
      CHECK(std::abs(got.c[j] - cn) < 1e-12);
      CHECK(std::abs(got.h[j] - og * std::tanh(cn)) < 1e-12);
    }
  }
}

TEST_CASE("min-max scaler") {
  SequenceDataset d;
  d.rows = 2;
  d.lookback = 1;
  d.features = 2;
  d.feature_names = {"a", "b"};
  d.X = {0.0, 3.0, 10.0, 3.0};
  d.y = {1.0, 2.0};
  const auto s = fit_scaler(d);
  const auto t = apply_scaler(s, d);
  CHECK(t.X[0] == 0.0);
  CHECK(t.X[2] == 1.0);
  CHECK(t.X[1] == 0.5);
  CHECK(t.X[3] == 0.5);
  CHECK(s.transform(0, 20.0) == 2.0);
  CHECK(s.transform(0, -5.0) == -0.5);
  CHECK(t.y[0] == 0.0);
  CHECK(s.inverse_label(s.transform_label(1.7)) == doctest::Approx(1.7));
  SequenceDataset other = d;
  other.feature_names = {"a", "c"};
  CHECK_THROWS_AS(apply_scaler(s, other), DataError);
  CHECK_THROWS_AS(fit_scaler(SequenceDataset{}), DataError);
}

TEST_CASE("gradient check") {
  for (auto cell : {CellKind::gru, CellKind::lstm}) {
    CAPTURE(to_string(cell));
    const Architecture arch{cell, 5};
    CHECK(gradient_check(arch, 1).max_relative_error < 1e-4);
    GradientCheckOptions o;
    o.zero_weights = true;
    const auto rep = gradient_check(arch, 1, o);
    // Zero weights: the output is the head bias, so only its gradient is
    // nonzero and it equals -2 * mean(target).
    const auto last = rep.analytic.size() - 1;
    CHECK(rep.analytic[last] == doctest::Approx(-2.0 * rep.targets.mean()).epsilon(1e-12));
    for (Eigen::Index i = 0; i < last; ++i) REQUIRE(rep.analytic[i] == 0.0);
    CHECK((rep.analytic - rep.numeric).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("training") {
  const auto data = make_sequences(260, 3, 2, 4, 0.05);
  const auto train = take(data, 0, 200), val = take(data, 200, 60);
  SUBCASE("learns a linear signal") {
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.learning_rate = 1e-2;
    cfg.max_epochs = 200;
    cfg.seed = 3;
    const auto r = train_rnn(train, {}, {CellKind::gru, 8}, cfg);
    REQUIRE(r.history.size() == 201);
    CHECK(r.history.back().train_rmse < 0.5 * r.history.front().train_rmse);
    for (const auto& e : r.history) CHECK(std::isfinite(e.train_rmse));
  }
  SUBCASE("patience 0 stops at the first non-improving epoch") {
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    cfg.max_epochs = 100;
    cfg.patience = 0;
    const auto r = train_rnn(train, val, {CellKind::lstm, 4}, cfg);
    const auto& h = r.history;
    REQUIRE(h.size() >= 2);
    if (h.size() < 101) {
      CHECK(h.back().val_rmse >= h[h.size() - 2].val_rmse);
      for (std::size_t i = 1; i + 1 < h.size(); ++i) CHECK(h[i].val_rmse < h[i - 1].val_rmse);
    }
    CHECK(r.best_epoch == h.size() - 2 + (h.size() == 101 ? 1 : 0));
  }
  SUBCASE("same seed gives identical weights") {
    TrainConfig cfg;
    cfg.batch_size = 50;
    cfg.learning_rate = 1e-2;
    cfg.max_epochs = 5;
    cfg.seed = 9;
    const auto a = train_rnn(train, val, {CellKind::gru, 4}, cfg);
    const auto b = train_rnn(train, val, {CellKind::gru, 4}, cfg);
    CHECK(a.model.params == b.model.params);
    CHECK(a.best_epoch == b.best_epoch);
  }
  SUBCASE("divergence is reported") {
    TrainConfig cfg;
    cfg.optimizer = Optimizer::sgd;
    cfg.learning_rate = 1e300;
    cfg.max_epochs = 3;
    CHECK_THROWS_AS(train_rnn(train, val, {CellKind::gru, 4}, cfg), TrainingError);
  }
  SUBCASE("config validation") {
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ParameterError);
    cfg.batch_size = 1;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ParameterError);
  }
}

TEST_CASE("prediction") {
  const auto data = make_sequences(300, 4, 3, 5);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.learning_rate = 1e-2;
  auto model = train_rnn(data, {}, {CellKind::lstm, 6}, cfg).model;
  SUBCASE("batch equals row by row") {
    const auto all = predict_rnn(model, data);
    for (std::size_t r = 0; r < data.rows; r += 37) CHECK(predict_rnn(model, take(data, r, 1))[0] == all[r]);
  }
  SUBCASE("row permutation permutes outputs") {
    const auto all = predict_rnn(model, data);
    SequenceDataset rev = data;
    const std::size_t w = data.lookback * data.features;
    for (std::size_t r = 0; r < data.rows; ++r)
      std::copy(data.X.begin() + r * w, data.X.begin() + (r + 1) * w, rev.X.begin() + (data.rows - 1 - r) * w);
    const auto p = predict_rnn(model, rev);
    for (std::size_t r = 0; r < data.rows; ++r) REQUIRE(p[data.rows - 1 - r] == all[r]);
  }
  SUBCASE("zero head gives the bias") {
    const std::size_t n = model.params.size();
    const std::size_t H = model.arch.hidden;
    model.params.segment(n - 1 - H, H).setZero();
    model.params[n - 1] = 0.25;
    for (double v : predict_rnn(model, data)) CHECK(v == doctest::Approx(model.scaler.inverse_label(0.25)).epsilon(1e-14));
  }
  SUBCASE("JSON round trip") {
    const auto back = regressor_from_json(to_json(model));
    CHECK(back.params == model.params);
    CHECK(predict_rnn(back, data) == predict_rnn(model, data));
  }
  CHECK(history_csv({{0, 1.0, 2.0}}).rfind("epoch,train_rmse,val_rmse\n", 0) == 0);
}
