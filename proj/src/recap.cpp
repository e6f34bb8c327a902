#include "recapfx/recap.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "recapfx/error.hpp"
#include "recapfx/parallel.hpp"
#include "recapfx/random.hpp"

namespace recapfx::recap {
namespace {

using trees::ImportanceVector;

/// Rows [0, cut) and [cut, n) of a frame.
std::pair<FeatureFrame, FeatureFrame> split_tail(const FeatureFrame& frame, std::size_t cut) {
  std::vector<bool> head(frame.rows(), false), tail(frame.rows(), false);
  for (std::size_t i = 0; i < frame.rows(); ++i) (i < cut ? head : tail)[i] = true;
  return {frame.filter_rows(head), frame.filter_rows(tail)};
}

void check_range(const FeatureFrame& frame, const TimeRange& forbidden, const char* what) {
  for (const auto& t : frame.index())
    if (forbidden.contains(t))
      throw ParameterError(std::string("leakage guard: recap ") + what + " frame has a row at " +
                           format_timestamp(t) + " inside the protected range " + format_range(forbidden));
}

}  // namespace

ImportanceVector normalize_scores(const ImportanceVector& v) {
  if (v.scores.empty()) throw ParameterError("cannot normalise an empty importance vector");
  ImportanceVector out = v;
  const auto [lo, hi] = std::minmax_element(v.scores.begin(), v.scores.end());
  const double min = *lo, range = *hi - *lo;
  for (auto& s : out.scores) s = range == 0.0 ? 0.5 : (s - min) / range;
  return out;
}

std::vector<double> recap_scores(const std::array<ImportanceVector, 3>& normalized,
                                 const std::array<double, 3>& rmses) {
  for (double r : rmses)
    if (!(r > 0.0) || !std::isfinite(r)) throw ParameterError("recap scores need positive finite RMSEs");
  const auto& names = normalized[0].feature_names;
  for (const auto& v : normalized)
    if (v.feature_names != names || v.scores.size() != names.size())
      throw ParameterError("recap scores: importance vectors cover different features");
  std::vector<double> out(names.size(), 0.0);
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t f = 0; f < names.size(); ++f) out[f] += normalized[m].scores[f] / rmses[m];
  return out;
}

std::vector<std::size_t> top_k(const std::vector<std::string>& names, const std::vector<double>& scores,
                               std::size_t k) {
  if (names.size() != scores.size()) throw ParameterError("top_k: names and scores differ in length");
  if (k == 0) throw ParameterError("k must be >= 1");
  if (k > names.size())
    throw ParameterError("k = " + std::to_string(k) + " exceeds the " + std::to_string(names.size()) +
                         " available features");
  std::vector<std::size_t> idx(names.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return names[a] < names[b];
  });
  idx.resize(k);
  return idx;
}

std::pair<std::string, std::size_t> parse_lagged_name(const std::string& lagged) {
  const auto open = lagged.rfind('(');
  auto bad = [&] { return DataError("malformed lagged column name `" + lagged + "`"); };
  if (open == std::string::npos || open == 0 || lagged.back() != ')') throw bad();
  const std::string suffix = lagged.substr(open + 1, lagged.size() - open - 2);
  std::size_t lag = 0;
  if (suffix != "t") {
    if (suffix.size() < 3 || suffix.compare(0, 2, "t-") != 0) throw bad();
    const char* first = suffix.data() + 2;
    const char* last = suffix.data() + suffix.size();
    const auto [ptr, ec] = std::from_chars(first, last, lag);
    if (ec != std::errc() || ptr != last || lag == 0) throw bad();
  }
  return {lagged.substr(0, open), lag};
}

std::vector<std::string> collapse_to_base(const std::vector<std::string>& lagged) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& name : lagged) {
    auto base = parse_lagged_name(name).first;
    if (seen.insert(base).second) out.push_back(std::move(base));
  }
  return out;
}

std::string to_string(TreeModel m) {
  switch (m) {
    case TreeModel::newton_boost: return "newton_boost";
    case TreeModel::forest: return "forest";
    case TreeModel::hist_boost: return "hist_boost";
  }
  return "?";
}

trees::ImportanceKind importance_kind(TreeModel m) {
  switch (m) {
    case TreeModel::newton_boost: return trees::ImportanceKind::gain;
    case TreeModel::forest: return trees::ImportanceKind::impurity_decrease;
    case TreeModel::hist_boost: return trees::ImportanceKind::split_count;
  }
  return trees::ImportanceKind::gain;
}

namespace {

std::vector<std::string> frame_order(const FeatureFrame& frame, const std::vector<std::string>& features) {
  const std::set<std::string> wanted(features.begin(), features.end());
  std::vector<std::string> ordered;
  for (const auto& name : frame.feature_names())
    if (wanted.count(name)) ordered.push_back(name);
  if (ordered.size() != wanted.size()) throw DataError("sequence model: requested feature missing from frame");
  return ordered;
}

SequenceFit fit_sequence_impl(const SequenceDataset& fit_rows, const SequenceDataset& stop_rows,
                              const FeatureFrame& heldout, const std::vector<std::string>& ordered,
                              const RecapSettings& settings) {
  const auto hold = to_sequences(heldout.select_features(ordered), settings.lookback);
  auto trained = recurrent::train_rnn(fit_rows, stop_rows, settings.sequence.arch, settings.sequence.train);
  SequenceFit out;
  out.features = ordered;
  out.predictions = recurrent::predict_rnn(trained.model, hold);
  out.prediction_index = hold.row_timestamps;
  out.metrics = evaluation::compute_metrics(out.predictions, hold.y);
  out.best_epoch = trained.best_epoch;
  out.history = std::move(trained.history);
  out.model = std::move(trained.model);
  return out;
}

}  // namespace

SequenceFit fit_sequence(const FeatureFrame& train, const FeatureFrame& heldout,
                         const std::vector<std::string>& features, const RecapSettings& settings) {
  const auto ordered = frame_order(train, features);
  const auto sub = train.select_features(ordered);
  const double frac = settings.sequence.early_stop_fraction;
  if (frac < 0.0 || frac >= 1.0) throw ParameterError("early_stop_fraction must be in [0, 1)");
  const auto tail = static_cast<std::size_t>(std::floor(static_cast<double>(sub.rows()) * frac));
  if (tail > settings.lookback) {
    const auto [head, rest] = split_tail(sub, sub.rows() - tail);
    return fit_sequence_impl(to_sequences(head, settings.lookback), to_sequences(rest, settings.lookback), heldout,
                             ordered, settings);
  }
  return fit_sequence_impl(to_sequences(sub, settings.lookback), {}, heldout, ordered, settings);
}

SequenceFit fit_sequence(const FeatureFrame& train, const FeatureFrame& stop, const FeatureFrame& heldout,
                         const std::vector<std::string>& features, const RecapSettings& settings) {
  const auto ordered = frame_order(train, features);
  const auto fit_rows = to_sequences(train.select_features(ordered), settings.lookback);
  const auto stop_rows =
      stop.rows() > 0 ? to_sequences(stop.select_features(ordered), settings.lookback) : SequenceDataset{};
  return fit_sequence_impl(fit_rows, stop_rows, heldout, ordered, settings);
}

Importances fit_importances(const FeatureFrame& train, const RecapSettings& settings) {
  Importances imp;
  const auto windowed = to_windowed(train, settings.lookback);
  imp.lagged_names = windowed.feature_names;
  const trees::MatrixView X(windowed.X, windowed.rows, windowed.cols);
  {
    const auto booster = trees::newton_boost_fit(X, windowed.y, settings.newton_boost, imp.lagged_names);
    imp.raw[0] = trees::importance(booster, importance_kind(TreeModel::newton_boost));
  }
  {
    auto fp = settings.forest;
    fp.threads = std::max(fp.threads, settings.threads);
    const auto forest = trees::fit_random_forest(X, windowed.y, fp, imp.lagged_names);
    imp.raw[1] = trees::importance(forest, importance_kind(TreeModel::forest));
  }
  {
    const auto booster = trees::newton_boost_fit(X, windowed.y, settings.hist_boost, imp.lagged_names);
    imp.raw[2] = trees::importance(booster, importance_kind(TreeModel::hist_boost));
  }
  for (std::size_t m = 0; m < 3; ++m) imp.normalized[m] = normalize_scores(imp.raw[m]);
  return imp;
}

RecapRun run_recap(const FeatureFrame& train, const FeatureFrame& heldout, const std::vector<std::size_t>& ks,
                   const RecapSettings& settings, const Importances* importances) {
  if (ks.empty()) throw ParameterError("recap needs at least one k");
  if (settings.forbidden) {
    check_range(train, *settings.forbidden, "training");
    check_range(heldout, *settings.forbidden, "held-out");
  }
  if (!train.index().empty() && !heldout.index().empty() && heldout.index().back() <= train.index().back())
    throw ParameterError("recap held-out rows must come after the recap training rows");

  const Importances imp = importances ? *importances : fit_importances(train, settings);
  RecapRun run;
  run.lagged_names = imp.lagged_names;
  run.raw = imp.raw;
  run.normalized = imp.normalized;
  for (auto k : ks)
    if (k == 0 || k > run.lagged_names.size())
      throw ParameterError("recap k = " + std::to_string(k) + " must be in [1, " +
                           std::to_string(run.lagged_names.size()) + "]");

  // Identical base sets give identical fits, so each distinct set trains once.
  std::map<std::vector<std::string>, SequenceFit> cache;
  auto fit_all = [&](const std::vector<std::vector<std::string>>& sets) {
    std::vector<std::vector<std::string>> todo;
    for (const auto& s : sets) {
      auto key = s;
      std::sort(key.begin(), key.end());
      if (!cache.count(key) && std::find(todo.begin(), todo.end(), key) == todo.end()) todo.push_back(key);
    }
    std::vector<SequenceFit> fits(todo.size());
    parallel_for(todo.size(), settings.threads,
                 [&](std::size_t i) { fits[i] = fit_sequence(train, heldout, todo[i], settings); });
    for (std::size_t i = 0; i < todo.size(); ++i) cache.emplace(todo[i], std::move(fits[i]));
  };
  auto lookup = [&](std::vector<std::string> s) {
    std::sort(s.begin(), s.end());
    return cache.at(s);
  };

  if (settings.baseline) {
    const auto all = train.feature_names();
    fit_all({all});
    run.baseline = lookup(all);
  }

  for (auto k : ks) {
    RecapResult res;
    res.k = k;
    std::vector<std::vector<std::string>> sets;
    for (std::size_t m = 0; m < 3; ++m) {
      auto& step = res.steps[m];
      step.model = kTreeModels[m];
      for (auto i : top_k(run.lagged_names, run.raw[m].scores, k)) step.top_lagged.push_back(run.lagged_names[i]);
      step.base = collapse_to_base(step.top_lagged);
      sets.push_back(step.base);
    }
    fit_all(sets);
    for (std::size_t m = 0; m < 3; ++m) {
      res.steps[m].fit = lookup(res.steps[m].base);
      res.rmses[m] = res.steps[m].fit.metrics.rmse;
      if (!(res.rmses[m] > 0.0))
        throw TrainingError("recap: " + to_string(kTreeModels[m]) + " sequence model has zero held-out RMSE");
    }
    res.final_scores = recap_scores(run.normalized, res.rmses);
    for (auto i : top_k(run.lagged_names, res.final_scores, k)) res.selected_lagged.push_back(run.lagged_names[i]);
    res.selected_base = collapse_to_base(res.selected_lagged);
    fit_all({res.selected_base});
    res.final_fit = lookup(res.selected_base);
    run.results.push_back(std::move(res));
  }
  return run;
}

nlohmann::json to_json(const SequenceFit& fit) {
  return {{"features", fit.features}, {"metrics", evaluation::to_json(fit.metrics)}, {"best_epoch", fit.best_epoch}};
}

nlohmann::json to_json(const RecapRun& run) {
  nlohmann::json models = nlohmann::json::object();
  for (std::size_t m = 0; m < 3; ++m)
    models[to_string(kTreeModels[m])] = {{"importance_kind", trees::to_string(run.raw[m].kind)},
                                         {"raw", run.raw[m].scores},
                                         {"normalized", run.normalized[m].scores}};
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : run.results) {
    nlohmann::json steps = nlohmann::json::object();
    for (std::size_t m = 0; m < 3; ++m)
      steps[to_string(kTreeModels[m])] = {{"top_lagged", r.steps[m].top_lagged},
                                          {"base", r.steps[m].base},
                                          {"rmse", r.rmses[m]},
                                          {"fit", to_json(r.steps[m].fit)}};
    results.push_back({{"k", r.k},
                       {"steps", steps},
                       {"final_scores", r.final_scores},
                       {"selected_lagged", r.selected_lagged},
                       {"selected_base", r.selected_base},
                       {"final", to_json(r.final_fit)}});
  }
  nlohmann::json j = {{"lagged_names", run.lagged_names}, {"models", models}, {"results", results}};
  j["baseline"] = run.baseline ? to_json(*run.baseline) : nlohmann::json(nullptr);
  return j;
}

std::string scores_csv(const RecapRun& run) {
  std::ostringstream out;
  out.precision(17);
  out << "k,rank,feature,newton_boost,forest,hist_boost,final\n";
  for (const auto& r : run.results) {
    const auto order = top_k(run.lagged_names, r.final_scores, run.lagged_names.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      const auto f = order[rank];
      out << r.k << ',' << rank + 1 << ',' << run.lagged_names[f];
      for (std::size_t m = 0; m < 3; ++m) out << ',' << run.normalized[m].scores[f];
      out << ',' << r.final_scores[f] << '\n';
    }
  }
  return out.str();
}

FeatureFrame generate_planted_frame(const PlantedFrameParams& p) {
  if (p.n <= p.horizon + 1) throw ParameterError("planted frame needs more rows than the horizon");
  if (std::abs(p.persistence) >= 1.0) throw ParameterError("persistence must be in (-1, 1)");
  if (p.horizon == 0) throw ParameterError("horizon must be >= 1");
  Rng rng(derive_seed(p.seed, "planted_frame"));
  const std::size_t cols = p.informative + p.noise;
  const double shock = std::sqrt(1.0 - p.persistence * p.persistence);

  std::vector<std::vector<double>> state(cols, std::vector<double>(p.n));
  std::vector<double> high(p.n);
  for (std::size_t c = 0; c < cols; ++c) state[c][0] = rng.normal();
  high[0] = 1.0 + p.noise_scale * rng.normal();
  for (std::size_t t = 1; t < p.n; ++t) {
    double drive = 0.0;
    for (std::size_t c = 0; c < p.informative; ++c) drive += state[c][t - 1];
    high[t] = 1.0 + p.signal * drive + p.noise_scale * rng.normal();
    for (std::size_t c = 0; c < cols; ++c) state[c][t] = p.persistence * state[c][t - 1] + shock * rng.normal();
  }

  std::vector<Timestamp> index(p.n);
  for (std::size_t t = 0; t < p.n; ++t) index[t] = p.start + p.step * static_cast<long long>(t);
  FeatureFrame frame(std::move(index));
  const auto label = compute_highest_high(high, p.horizon);
  frame.set_column("high", std::move(high));
  for (std::size_t c = 0; c < cols; ++c)
    frame.set_column((c < p.informative ? "planted_" + std::to_string(c) : "noise_" + std::to_string(c - p.informative)),
                     std::move(state[c]));
  frame.set_column("highest_high", label);
  frame.set_label("highest_high");
  return clean(frame).frame;
}

}  // namespace recapfx::recap
