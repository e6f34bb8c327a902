#include "recapfx/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "recapfx/arima.hpp"
#include "recapfx/error.hpp"
#include "recapfx/evaluation.hpp"
#include "recapfx/indicators.hpp"
#include "recapfx/random.hpp"
#include "recapfx/recap.hpp"
#include "recapfx/stacking.hpp"

namespace recapfx {
namespace {

namespace fs = std::filesystem;
using recurrent::CellKind;

constexpr std::array<CellKind, 2> kCells = {CellKind::lstm, CellKind::gru};
const std::string kLabel = "highest_high";

[[noreturn]] void rethrow_in_stage(Stage stage, const Error& e) {
  const std::string msg = "stage " + to_string(stage) + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::config: throw ParameterError(msg);
    case ErrorKind::data: throw DataError(msg);
    case ErrorKind::training: throw TrainingError(msg);
  }
  throw DataError(msg);
}

class Artifacts {
 public:
  explicit Artifacts(fs::path staging) : staging_(std::move(staging)) {
    fs::remove_all(staging_);
    fs::create_directories(staging_ / "models");
  }
  ~Artifacts() {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }

  fs::path path(const std::string& rel) {
    if (std::find(names_.begin(), names_.end(), rel) == names_.end()) names_.push_back(rel);
    return staging_ / rel;
  }

  void write(const std::string& rel, const std::string& text) {
    std::ofstream out(path(rel), std::ios::binary);
    out << text;
    if (!out) throw DataError("cannot write artifact " + rel);
  }

  void write_json(const std::string& rel, const nlohmann::json& j) { write(rel, j.dump(2) + "\n"); }

  /// Moves every staged file into `dir`.
  void commit(const fs::path& dir) {
    fs::create_directories(dir / "models");
    for (const auto& rel : names_) fs::rename(staging_ / rel, dir / rel);
  }

  const std::vector<std::string>& names() const { return names_; }

 private:
  fs::path staging_;
  std::vector<std::string> names_;
};

/// Rows whose timestamps fall in `range` plus the lookback-1 rows before,
/// which serve only as window context.
FeatureFrame with_context(const FeatureFrame& frame, const TimeRange& range, std::size_t lookback) {
  const auto& idx = frame.index();
  std::vector<bool> keep(frame.rows(), false);
  std::size_t first = frame.rows();
  for (std::size_t i = 0; i < frame.rows(); ++i)
    if (range.contains(idx[i])) {
      first = std::min(first, i);
      keep[i] = true;
    }
  if (first == frame.rows()) throw DataError("no rows in " + format_range(range));
  for (std::size_t i = first >= lookback - 1 ? first - (lookback - 1) : 0; i < first; ++i) keep[i] = true;
  return frame.filter_rows(keep);
}

struct Context {
  const PipelineConfig& cfg;
  Artifacts& out;
  nlohmann::json& report;

  CandleSeries series;
  /// Synthetic hook columns, appended to the features.
  std::vector<std::pair<std::string, std::vector<double>>> planted;
  FeatureFrame clean;
  /// Timestamp of the last bar each row's label looks at.
  std::map<Timestamp, Timestamp> label_end;

  FeatureFrame train, validation;
  recap::RecapSettings settings;
  std::map<CellKind, recap::RecapRun> recaps;
  std::map<CellKind, std::vector<std::string>> final_base;
  std::map<CellKind, std::size_t> final_epochs;

  std::array<std::vector<double>, 5> test_predictions;
  std::vector<double> test_label;
  std::vector<Timestamp> test_index;
};

/// Drops rows whose label reads any bar at or after `boundary`.
FeatureFrame purge(const Context& ctx, const FeatureFrame& frame, Timestamp boundary) {
  std::vector<bool> keep(frame.rows());
  for (std::size_t i = 0; i < frame.rows(); ++i) keep[i] = ctx.label_end.at(frame.index()[i]) < boundary;
  return frame.filter_rows(keep);
}

recap::RecapSettings make_settings(const PipelineConfig& c) {
  recap::RecapSettings s;
  s.lookback = c.lookback;
  s.newton_boost = c.newton_boost;
  s.newton_boost.seed = derive_seed(c.seed, "newton_boost");
  s.newton_boost.tree.seed = derive_seed(c.seed, "newton_boost_tree");
  s.hist_boost = c.hist_boost;
  s.hist_boost.seed = derive_seed(c.seed, "hist_boost");
  s.hist_boost.tree.seed = derive_seed(c.seed, "hist_boost_tree");
  s.forest = c.forest;
  s.forest.seed = derive_seed(c.seed, "forest");
  s.sequence.arch = c.rnn_arch;
  s.sequence.train = c.rnn_train;
  s.sequence.train.seed = derive_seed(c.seed, "rnn");
  s.sequence.early_stop_fraction = c.rnn_early_stop_fraction;
  s.threads = c.threads;
  return s;
}

recap::RecapSettings for_cell(recap::RecapSettings s, CellKind cell) {
  s.sequence.arch.cell = cell;
  return s;
}

void stage_ingest(Context& ctx) {
  const auto& c = ctx.cfg;
  std::size_t dropped = 0;
  if (c.source == "csv") {
    auto loaded = load_ohlc_csv(c.csv_path);
    ctx.series = std::move(loaded.series);
    dropped = loaded.dropped;
  } else {
    auto p = c.synthetic;
    if (!c.echo.count("data.synthetic.seed")) p.seed = derive_seed(c.seed, "synthetic");
    auto data = generate_synthetic_ohlc(p);
    ctx.series = std::move(data.series);
    ctx.planted = std::move(data.planted);
  }
  write_ohlc_csv(ctx.series, ctx.out.path("candles.csv"));
  ctx.report["ingest"] = {{"source", c.source},
                          {"bars", ctx.series.size()},
                          {"dropped_rows", dropped},
                          {"first", format_timestamp(ctx.series[0].timestamp)},
                          {"last", format_timestamp(ctx.series[ctx.series.size() - 1].timestamp)}};
}

void stage_features(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto& s = ctx.series;
  if (s.size() <= c.horizon) throw DataError("series too short for the label horizon");
  for (std::size_t i = 0; i + c.horizon < s.size(); ++i) ctx.label_end[s[i].timestamp] = s[i + c.horizon].timestamp;
  for (std::size_t i = s.size() - c.horizon; i < s.size(); ++i) ctx.label_end[s[i].timestamp] = Timestamp::max();

  auto extras = ctx.planted;
  nlohmann::json arima_json = nlohmann::json::object();
  if (c.arima_enabled) {
    if (c.arima_fit_bars >= s.size()) throw DataError("arima.fit_bars exceeds the series length");
    if (!c.train || !c.train->contains(s[c.arima_fit_bars - 1].timestamp) || !c.train->contains(s[0].timestamp))
      throw ParameterError("arima fit window must lie inside split.train");
    for (const auto& col : c.arima_columns) {
      std::vector<double> values = col == "open"   ? s.opens()
                                   : col == "high" ? s.highs()
                                   : col == "low"  ? s.lows()
                                                   : s.closes();
      arima::SearchGrid grid{c.arima_p_max, c.arima_d_set, c.arima_q_max};
      const auto search =
          arima::select_order(std::span<const double>(values).first(c.arima_fit_bars), grid, 1.0, c.threads);
      auto feature = arima::rolling_forecast_feature(values, search.selected, 0, c.arima_fit_bars, c.arima_refit_every);
      nlohmann::json cells = nlohmann::json::array();
      for (const auto& g : search.grid) {
        nlohmann::json cell = {{"p", g.order.p}, {"d", g.order.d}, {"q", g.order.q}, {"ok", g.ok}};
        cell["aic"] = g.ok ? nlohmann::json(g.aic) : nlohmann::json(nullptr);
        if (!g.ok) cell["error"] = g.error;
        cells.push_back(cell);
      }
      arima_json[col] = {{"selected", {{"p", search.selected.p}, {"d", search.selected.d}, {"q", search.selected.q}}},
                         {"grid", cells}};
      extras.emplace_back("arima_" + col, std::move(feature.values));
    }
  }
  auto frame = indicators::compute_features(s, c.indicators, extras);
  frame.set_column(kLabel, compute_highest_high(s, c.horizon));
  frame.set_label(kLabel);
  auto cleaned = clean(frame);
  ctx.clean = std::move(cleaned.frame);
  write_frame_csv(ctx.clean, ctx.out.path("features.csv"));

  nlohmann::json cleaning = {{"input_rows", frame.rows()},
                             {"output_rows", ctx.clean.rows()},
                             {"removed", cleaned.removed},
                             {"feature_columns", ctx.clean.feature_names()}};
  ctx.out.write_json("cleaning_report.json", cleaning);
  ctx.report["cleaning"] = cleaning;
  ctx.report["arima"] = arima_json;
}

void split_main(Context& ctx) {
  const auto& c = ctx.cfg;
  const SplitSpec spec{*c.train, *c.validation, *c.test};
  auto parts = split_by_dates(ctx.clean, spec);
  ctx.train = purge(ctx, parts.train, c.validation->start);
  ctx.validation = purge(ctx, parts.validation, c.test->start);
  ctx.settings = make_settings(c);
}

bool guarded(const PipelineConfig& c) { return c.leakage_guard && !c.paper_mode; }

void stage_recap(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto rt = effective_recap_train(c);
  const auto rh = effective_recap_heldout(c);
  auto recap_train = purge(ctx, slice_by_range(ctx.clean, rt), rh.start);
  auto heldout = with_context(ctx.clean, rh, c.lookback);
  auto settings = ctx.settings;
  if (guarded(c)) {
    heldout = purge(ctx, heldout, c.test->start);
    settings.forbidden = *c.test;
  }
  if (recap_train.rows() == 0) throw DataError("recap training window " + format_range(rt) + " has no rows");

  const auto importances = recap::fit_importances(recap_train, settings);
  nlohmann::json j = nlohmann::json::object();
  std::string csv;
  for (auto cell : kCells) {
    auto run = recap::run_recap(recap_train, heldout, c.recap_k, for_cell(settings, cell), &importances);
    j[recurrent::to_string(cell)] = recap::to_json(run);
    std::istringstream lines(recap::scores_csv(run));
    std::string line;
    std::getline(lines, line);
    if (csv.empty()) csv = "cell," + line + "\n";
    while (std::getline(lines, line)) csv += recurrent::to_string(cell) + "," + line + "\n";
    ctx.recaps.emplace(cell, std::move(run));
  }
  ctx.out.write("recap_scores.csv", csv);
  j["windows"] = {{"train", format_range(rt)}, {"heldout", format_range(rh)}};
  ctx.report["recap"] = j;
}

void stage_train(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto test_ctx = with_context(ctx.clean, *c.test, c.lookback);
  std::vector<evaluation::NamedMetrics> table;
  nlohmann::json metrics = nlohmann::json::array();

  for (auto cell : kCells) {
    const auto settings = for_cell(ctx.settings, cell);
    const auto& run = ctx.recaps.at(cell);
    std::map<std::vector<std::string>, recap::SequenceFit> cache;
    auto fit = [&](std::vector<std::string> features) -> const recap::SequenceFit& {
      std::sort(features.begin(), features.end());
      auto it = cache.find(features);
      if (it == cache.end())
        it = cache.emplace(features, recap::fit_sequence(ctx.train, ctx.validation, test_ctx, features, settings))
                 .first;
      return it->second;
    };
    auto add = [&](const std::string& row, const recap::SequenceFit& f) {
      const auto name = recurrent::to_string(cell) + " " + row;
      table.push_back({name, f.metrics});
      metrics.push_back({{"name", name}, {"features", f.features}, {"best_epoch", f.best_epoch},
                         {"metrics", evaluation::to_json(f.metrics)}});
    };
    add("All features", fit(ctx.train.feature_names()));
    for (const auto& r : run.results) {
      for (const auto& step : r.steps) add(recap::to_string(step.model) + " " + std::to_string(r.k), fit(step.base));
      const auto& final_fit = fit(r.selected_base);
      add("Final " + std::to_string(r.k), final_fit);
      if (r.k == c.stacking_k) {
        ctx.final_base[cell] = r.selected_base;
        ctx.final_epochs[cell] = std::max<std::size_t>(1, final_fit.best_epoch);
      }
    }
  }
  ctx.out.write("metrics_table.csv", evaluation::format_results_table(table));
  ctx.report["metrics"] = metrics;

  // Layer-one models on train+validation with the recap selection.
  const auto fit_range = TimeRange{c.train->start, c.validation->end};
  const auto fit_frame = purge(ctx, slice_by_range(ctx.clean, fit_range), c.test->start);

  std::set<std::string> union_set;
  for (auto cell : kCells) union_set.insert(ctx.final_base[cell].begin(), ctx.final_base[cell].end());
  std::vector<std::string> tree_features;
  for (const auto& n : ctx.clean.feature_names())
    if (union_set.count(n)) tree_features.push_back(n);

  const auto train_w = to_windowed(fit_frame.select_features(tree_features), c.lookback);
  const auto test_w = to_windowed(test_ctx.select_features(tree_features), c.lookback);
  const trees::MatrixView Xtr(train_w.X, train_w.rows, train_w.cols);
  const trees::MatrixView Xte(test_w.X, test_w.rows, test_w.cols);
  ctx.test_index = test_w.row_timestamps;
  ctx.test_label = test_w.y;

  nlohmann::json base = nlohmann::json::object();
  auto record = [&](stacking::BaseModel m, std::vector<double> pred, const std::vector<Timestamp>& index) {
    if (index != ctx.test_index) throw DataError("layer-one predictions are misaligned");
    base[stacking::to_string(m)] = {{"test", evaluation::to_json(evaluation::compute_metrics(pred, ctx.test_label))}};
    ctx.test_predictions[static_cast<std::size_t>(m)] = std::move(pred);
  };
  {
    const auto model = trees::newton_boost_fit(Xtr, train_w.y, ctx.settings.newton_boost, train_w.feature_names);
    ctx.out.write_json("models/newton_boost.json", trees::to_json(model));
    record(stacking::BaseModel::newton_boost, trees::predict(model, Xte), test_w.row_timestamps);
  }
  {
    const auto model = trees::newton_boost_fit(Xtr, train_w.y, ctx.settings.hist_boost, train_w.feature_names);
    ctx.out.write_json("models/hist_boost.json", trees::to_json(model));
    record(stacking::BaseModel::hist_boost, trees::predict(model, Xte), test_w.row_timestamps);
  }
  {
    auto fp = ctx.settings.forest;
    fp.threads = std::max(fp.threads, c.threads);
    const auto model = trees::fit_random_forest(Xtr, train_w.y, fp, train_w.feature_names);
    ctx.out.write_json("models/forest.json", trees::to_json(model));
    record(stacking::BaseModel::forest, trees::predict(model, Xte), test_w.row_timestamps);
  }
  for (auto cell : kCells) {
    auto settings = for_cell(ctx.settings, cell);
    settings.sequence.train.max_epochs = ctx.final_epochs.at(cell);
    const auto f = recap::fit_sequence(fit_frame, FeatureFrame{}, test_ctx, ctx.final_base.at(cell), settings);
    ctx.out.write_json("models/" + recurrent::to_string(cell) + ".json", recurrent::to_json(f.model));
    record(cell == CellKind::lstm ? stacking::BaseModel::lstm : stacking::BaseModel::gru, f.predictions,
           f.prediction_index);
    base[recurrent::to_string(cell)]["epochs"] = settings.sequence.train.max_epochs;
  }
  base["tree_features"] = tree_features;
  ctx.report["base_models"] = base;
}

void stage_stack(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto frame = stacking::build_meta_frame(ctx.test_predictions, ctx.test_label, ctx.test_index);
  const SplitSpec spec{*c.meta_train, *c.meta_validation, *c.meta_test};
  const auto seed = derive_seed(c.seed, "stacking");
  const auto report = stacking::run_stacking_search(frame, spec, seed, c.meta, c.paper_mode, c.threads);
  ctx.out.write("stacking_report.csv", stacking::stacking_csv(report));
  const auto parts = stacking::split_meta(frame, spec);
  const auto& winner = report.rows.at(report.selected);
  const auto model =
      stacking::train_meta_nn(parts.train, parts.validation, winner.members, derive_seed(seed, winner.id), c.meta);
  ctx.out.write_json("models/meta_selected.json", stacking::to_json(model));
  ctx.report["stacking"] = stacking::to_json(report);
}

nlohmann::json config_echo(const PipelineConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  // Thread count and output location do not affect results.
  for (const auto& [k, v] : c.echo)
    if (k != "threads" && k != "output.dir") j[k] = v;
  j["seed"] = std::to_string(c.seed);
  j["paper_mode"] = c.paper_mode ? "true" : "false";
  j["leakage_guard"] = c.leakage_guard ? "true" : "false";
  return j;
}

}  // namespace

std::string to_string(Stage s) {
  switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::features: return "features";
    case Stage::recap: return "recap";
    case Stage::train: return "train";
    case Stage::stack: return "stack";
  }
  return "?";
}

RunReport run_pipeline(const PipelineConfig& config, Stage until) {
  RunReport result;
  result.findings = validate_config(config);
  std::string errors;
  for (const auto& f : result.findings)
    if (f.severity == Finding::Severity::error) errors += "\n  " + f.key + ": " + f.message;
  if (!errors.empty()) throw ParameterError("invalid configuration:" + errors);

  const fs::path out_dir = config.output_dir;
  fs::path staging = out_dir;
  staging += ".partial";
  Artifacts artifacts(staging);

  nlohmann::json report = {{"toolkit", {{"name", "recapfx"}, {"version", kToolkitVersion}}},
                           {"config", config_echo(config)}};
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& f : result.findings) warnings.push_back({{"key", f.key}, {"message", f.message}});
  report["warnings"] = warnings;

  Context ctx{config, artifacts, report, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}};
  nlohmann::json timings = nlohmann::json::object();
  auto run_stage = [&](Stage stage, auto&& fn) {
    if (static_cast<int>(stage) > static_cast<int>(until)) return;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const Error& e) {
      rethrow_in_stage(stage, e);
    } catch (const std::filesystem::filesystem_error& e) {
      throw DataError("stage " + to_string(stage) + ": " + e.what());
    }
    timings[to_string(stage)] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  run_stage(Stage::ingest, [&] { stage_ingest(ctx); });
  run_stage(Stage::features, [&] { stage_features(ctx); });
  run_stage(Stage::recap, [&] {
    split_main(ctx);
    stage_recap(ctx);
  });
  run_stage(Stage::train, [&] { stage_train(ctx); });
  run_stage(Stage::stack, [&] { stage_stack(ctx); });

  report["stages_completed"] = to_string(until);
  std::vector<std::string> names = artifacts.names();
  names.push_back("report.json");
  names.push_back("timings.json");
  report["artifacts"] = names;
  artifacts.write_json("report.json", report);
  artifacts.write_json("timings.json", timings);
  artifacts.commit(out_dir);

  result.report = std::move(report);
  result.timings = std::move(timings);
  result.artifacts = artifacts.names();
  return result;
}

}  // namespace recapfx
