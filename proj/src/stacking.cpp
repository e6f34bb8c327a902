#include "recapfx/stacking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "recapfx/error.hpp"
#include "recapfx/parallel.hpp"
#include "recapfx/random.hpp"

namespace recapfx::stacking {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MetaFrame slice(const MetaFrame& f, const TimeRange& r) {
  MetaFrame out;
  for (std::size_t i = 0; i < f.rows(); ++i) {
    if (!r.contains(f.index[i])) continue;
    out.index.push_back(f.index[i]);
    for (std::size_t m = 0; m < 5; ++m) out.predictions[m].push_back(f.predictions[m][i]);
    out.label.push_back(f.label[i]);
  }
  return out;
}

double scale(double v, double lo, double hi) { return hi == lo ? 0.5 : (v - lo) / (hi - lo); }

/// Inputs x rows, scaled with the model's ranges.
MatrixXd inputs(const MetaModel& m, const MetaFrame& f) {
  MatrixXd X(static_cast<Index>(m.combo.size()), static_cast<Index>(f.rows()));
  for (std::size_t j = 0; j < m.combo.size(); ++j) {
    const auto& col = f.predictions[static_cast<std::size_t>(m.combo[j])];
    for (std::size_t i = 0; i < f.rows(); ++i)
      X(static_cast<Index>(j), static_cast<Index>(i)) = scale(col[i], m.input_min[j], m.input_max[j]);
  }
  return X;
}

VectorXd forward(const MetaModel& m, const MatrixXd& X) {
  const MatrixXd H = ((m.W1 * X).colwise() + m.b1).cwiseMax(0.0);
  VectorXd out = (m.w2.transpose() * H).transpose();
  out.array() += m.b2;
  return out;
}

double rmse_original(const MetaModel& m, const MatrixXd& X, const std::vector<double>& y) {
  const VectorXd p = forward(m, X);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = m.label_min + p[static_cast<Index>(i)] * (m.label_max - m.label_min) - y[i];
    s += v * v;
  }
  return std::sqrt(s / static_cast<double>(y.size()));
}

}  // namespace

std::string to_string(BaseModel m) {
  switch (m) {
    case BaseModel::newton_boost: return "newton_boost";
    case BaseModel::hist_boost: return "hist_boost";
    case BaseModel::forest: return "forest";
    case BaseModel::lstm: return "lstm";
    case BaseModel::gru: return "gru";
  }
  return "?";
}

MetaFrame build_meta_frame(std::array<std::vector<double>, 5> predictions, std::vector<double> label,
                           std::vector<Timestamp> index) {
  const std::size_t n = index.size();
  if (label.size() != n) throw DataError("meta frame: label length differs from the index");
  for (std::size_t m = 0; m < 5; ++m) {
    const auto name = to_string(kBaseModels[m]);
    if (predictions[m].size() != n)
      throw DataError("meta frame: " + name + " has " + std::to_string(predictions[m].size()) +
                      " predictions for " + std::to_string(n) + " rows");
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(predictions[m][i]))
        throw DataError("meta frame: " + name + " prediction at row " + std::to_string(i) + " is not finite");
  }
  for (double v : label)
    if (!std::isfinite(v)) throw DataError("meta frame: non-finite label");
  MetaFrame f;
  f.index = std::move(index);
  f.predictions = std::move(predictions);
  f.label = std::move(label);
  return f;
}

std::vector<Combination> enumerate_combinations() {
  std::vector<Combination> out;
  for (std::size_t size = 1; size <= 5; ++size) {
    // Lexicographic k-subsets of {0..4}.
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    while (true) {
      Combination c;
      for (auto i : idx) c.push_back(kBaseModels[i]);
      out.push_back(std::move(c));
      std::size_t pos = size;
      while (pos > 0 && idx[pos - 1] == 5 - size + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t j = pos; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  return out;
}

std::string combination_name(const Combination& c) {
  std::string out;
  for (auto m : c) out += (out.empty() ? "" : "+") + to_string(m);
  return out;
}

MetaSplits split_meta(const MetaFrame& frame, const SplitSpec& spec) {
  if (!spec.valid()) throw ParameterError("meta split ranges must be valid, disjoint and ordered");
  MetaSplits s{slice(frame, spec.train), slice(frame, spec.validation), slice(frame, spec.test)};
  if (s.train.rows() == 0) throw DataError("meta split: no rows in " + format_range(spec.train));
  if (s.validation.rows() == 0) throw DataError("meta split: no rows in " + format_range(spec.validation));
  if (s.test.rows() == 0) throw DataError("meta split: no rows in " + format_range(spec.test));
  return s;
}

void MetaNetConfig::validate() const {
  if (hidden == 0) throw ParameterError("meta network hidden width must be >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("meta network learning rate must be > 0");
  if (batch_size == 0 || max_epochs == 0) throw ParameterError("meta network batch size and epochs must be >= 1");
}

MetaModel train_meta_nn(const MetaFrame& train, const MetaFrame& validation, const Combination& combo,
                        std::uint64_t seed, const MetaNetConfig& cfg) {
  cfg.validate();
  if (combo.empty()) throw ParameterError("empty combination");
  if (train.rows() == 0 || validation.rows() == 0) throw DataError("meta network needs train and validation rows");
  const auto I = static_cast<Index>(combo.size()), H = static_cast<Index>(cfg.hidden);

  MetaModel m;
  m.combo = combo;
  for (auto b : combo) {
    const auto& col = train.predictions[static_cast<std::size_t>(b)];
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    m.input_min.push_back(*lo);
    m.input_max.push_back(*hi);
  }
  const auto [lo, hi] = std::minmax_element(train.label.begin(), train.label.end());
  m.label_min = *lo;
  m.label_max = *hi;

  Rng rng(derive_seed(seed, "meta_init"));
  m.W1.resize(H, I);
  const double lim1 = std::sqrt(6.0 / static_cast<double>(I));
  for (Index c = 0; c < I; ++c)
    for (Index r = 0; r < H; ++r) m.W1(r, c) = rng.uniform(-lim1, lim1);
  m.b1 = VectorXd::Zero(H);
  m.w2.resize(H);
  const double lim2 = std::sqrt(6.0 / static_cast<double>(H + 1));
  for (Index r = 0; r < H; ++r) m.w2[r] = rng.uniform(-lim2, lim2);

  const MatrixXd Xt = inputs(m, train), Xv = inputs(m, validation);
  VectorXd yt(static_cast<Index>(train.rows()));
  for (std::size_t i = 0; i < train.rows(); ++i) yt[static_cast<Index>(i)] = scale(train.label[i], m.label_min, m.label_max);

  // Flat Adam state over [W1, b1, w2, b2].
  const Index P = H * I + H + H + 1;
  VectorXd m1 = VectorXd::Zero(P), m2 = VectorXd::Zero(P), g(P);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t step = 0;

  MetaModel best = m;
  double best_rmse = rmse_original(m, Xv, validation.label);
  std::size_t stale = 0;
  Rng shuffler(derive_seed(seed, "meta_shuffle"));
  std::vector<Index> order(train.rows());
  std::iota(order.begin(), order.end(), Index{0});

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffler.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto B = static_cast<Index>(std::min(cfg.batch_size, order.size() - start));
      MatrixXd X(I, B);
      VectorXd y(B);
      for (Index b = 0; b < B; ++b) {
        X.col(b) = Xt.col(order[start + static_cast<std::size_t>(b)]);
        y[b] = yt[order[start + static_cast<std::size_t>(b)]];
      }
      const MatrixXd A = (m.W1 * X).colwise() + m.b1;
      const MatrixXd Hd = A.cwiseMax(0.0);
      VectorXd p = (m.w2.transpose() * Hd).transpose();
      p.array() += m.b2;
      const VectorXd dy = (p - y) * (2.0 / static_cast<double>(B));
      const VectorXd dw2 = Hd * dy;
      const double db2 = dy.sum();
      const MatrixXd dA = (m.w2 * dy.transpose()).cwiseProduct((A.array() > 0.0).cast<double>().matrix());
      const MatrixXd dW1 = dA * X.transpose();
      const VectorXd db1 = dA.rowwise().sum();
      g << Eigen::Map<const VectorXd>(dW1.data(), H * I), db1, dw2, db2;
      if (!g.allFinite()) throw TrainingError("meta network diverged on " + combination_name(combo));

      ++step;
      m1 = beta1 * m1 + (1.0 - beta1) * g;
      m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      const VectorXd delta = (cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps)).matrix();
      Eigen::Map<VectorXd>(m.W1.data(), H * I) -= delta.head(H * I);
      m.b1 -= delta.segment(H * I, H);
      m.w2 -= delta.segment(H * I + H, H);
      m.b2 -= delta[P - 1];
    }
    const double v = rmse_original(m, Xv, validation.label);
    if (!std::isfinite(v)) throw TrainingError("meta network diverged on " + combination_name(combo));
    if (v < best_rmse) {
      best_rmse = v;
      best = m;
      best.best_epoch = epoch;
      stale = 0;
    } else if (++stale > cfg.patience) {
      break;
    }
  }
  return best;
}

std::vector<double> predict_meta(const MetaModel& model, const MetaFrame& frame) {
  const VectorXd p = forward(model, inputs(model, frame));
  std::vector<double> out(frame.rows());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = model.label_min + p[static_cast<Index>(i)] * (model.label_max - model.label_min);
  return out;
}

StackingReport run_stacking_search(const MetaFrame& frame, const SplitSpec& spec, std::uint64_t seed,
                                   const MetaNetConfig& config, bool select_on_test, unsigned threads) {
  const auto parts = split_meta(frame, spec);
  const auto combos = enumerate_combinations();
  StackingReport report;
  report.selected_on_test = select_on_test;
  report.rows.resize(combos.size());
  parallel_for(combos.size(), threads, [&](std::size_t id) {
    const auto model = train_meta_nn(parts.train, parts.validation, combos[id], derive_seed(seed, id), config);
    auto& row = report.rows[id];
    row.id = id;
    row.members = combos[id];
    row.validation = evaluation::compute_metrics(predict_meta(model, parts.validation), parts.validation.label);
    row.test = evaluation::compute_metrics(predict_meta(model, parts.test), parts.test.label);
  });
  for (std::size_t id = 1; id < report.rows.size(); ++id) {
    const auto& r = report.rows[id];
    const auto& b = report.rows[report.selected];
    const double a = select_on_test ? r.test.rmse : r.validation.rmse;
    const double c = select_on_test ? b.test.rmse : b.validation.rmse;
    if (a < c) report.selected = id;
  }
  return report;
}

std::string stacking_csv(const StackingReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "id,rmse,mae,combination\n";
  for (const auto& r : report.rows)
    out << r.id << ',' << r.test.rmse << ',' << r.test.mae << ',' << combination_name(r.members) << '\n';
  return out.str();
}

nlohmann::json to_json(const StackingReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"id", r.id},
                    {"combination", combination_name(r.members)},
                    {"validation", evaluation::to_json(r.validation)},
                    {"test", evaluation::to_json(r.test)},
                    {"selected", r.id == report.selected}});
  return {{"rows", rows},
          {"selected", report.selected},
          {"selected_combination", combination_name(report.rows.at(report.selected).members)},
          {"selection_split", report.selected_on_test ? "test" : "validation"}};
}

nlohmann::json to_json(const MetaModel& m) {
  nlohmann::json W1 = nlohmann::json::array();
  for (Index r = 0; r < m.W1.rows(); ++r) {
    std::vector<double> row;
    for (Index c = 0; c < m.W1.cols(); ++c) row.push_back(m.W1(r, c));
    W1.push_back(row);
  }
  return {{"format_version", 1},
          {"type", "meta_mlp"},
          {"combination", combination_name(m.combo)},
          {"W1", W1},
          {"b1", std::vector<double>(m.b1.data(), m.b1.data() + m.b1.size())},
          {"w2", std::vector<double>(m.w2.data(), m.w2.data() + m.w2.size())},
          {"b2", m.b2},
          {"input_min", m.input_min},
          {"input_max", m.input_max},
          {"label_min", m.label_min},
          {"label_max", m.label_max},
          {"best_epoch", m.best_epoch}};
}

}  // namespace recapfx::stacking
