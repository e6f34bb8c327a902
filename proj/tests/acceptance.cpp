// Acceptance runner: one PASS/FAIL line per criterion, exit 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "recapfx/arima.hpp"
#include "recapfx/config.hpp"
#include "recapfx/evaluation.hpp"
#include "recapfx/indicators.hpp"
#include "recapfx/market_data.hpp"
#include "recapfx/pipeline.hpp"
#include "recapfx/recap.hpp"
#include "recapfx/recurrent.hpp"
#include "recapfx/stacking.hpp"
#include "recapfx/trees.hpp"
#include "small_config.hpp"
#include "support.hpp"

using namespace recapfx;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (s >= budget_s) {
    o.pass = false;
    o.detail += " [over time budget]";
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-22s %7.2f s / %5.0f s  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), s, budget_s,
              o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<double> col(const indicators::IndicatorColumn& c) { return c.values; }

Outcome indicator_oracles() {
  const auto bars = oracle::random_bars(1000, 2024);
  const auto o = bars.opens(), h = bars.highs(), l = bars.lows(), c = bars.closes();
  double worst = 0.0;
  std::string worst_name;
  auto cmp = [&](const std::string& name, const std::vector<double>& got, const std::vector<double>& want) {
    const double d = oracle::max_abs_diff(got, want);
    if (!(d <= worst)) {
      worst = d;
      worst_name = name;
    }
  };
  for (std::size_t n : {2u, 5u, 10u, 30u}) {
    const auto sn = std::to_string(n);
    cmp("sma" + sn, col(indicators::sma(c, n)), oracle::sma(c, n));
    cmp("ema" + sn, col(indicators::ema(c, n)), oracle::ema(c, n));
    cmp("wma" + sn, col(indicators::wma(c, n)), oracle::wma(c, n));
    cmp("dema" + sn, col(indicators::dema(c, n)), oracle::dema(c, n));
    cmp("tema" + sn, col(indicators::tema(c, n)), oracle::tema(c, n));
    cmp("trima" + sn, col(indicators::trima(c, n)), oracle::trima(c, n));
    cmp("willr" + sn, col(indicators::willr(bars, n)), oracle::willr(bars, n));
    cmp("bop" + sn, col(indicators::bop(bars, n)), oracle::bop(bars, n));
    cmp("rsi" + sn, col(indicators::rsi(c, n)), oracle::rsi(c, n));

    const auto r = indicators::true_range_atr(bars, n);
    const auto atr = oracle::atr(bars, n);
    std::vector<double> natr(atr.size());
    for (std::size_t i = 0; i < atr.size(); ++i) natr[i] = 100.0 * atr[i] / c[i];
    cmp("trange", col(r.trange), oracle::trange(bars));
    cmp("atr" + sn, col(r.atr), atr);
    cmp("natr" + sn, col(r.natr), natr);

    std::vector<double> mom(c.size(), oracle::nan), roc(c.size(), oracle::nan);
    for (std::size_t i = n; i < c.size(); ++i) {
      mom[i] = c[i] - c[i - n];
      roc[i] = (c[i] / c[i - n] - 1.0) * 100.0;
    }
    cmp("mom" + sn, col(indicators::mom(c, n)), mom);
    cmp("roc" + sn, col(indicators::roc(c, n)), roc);
  }
  for (std::size_t n : {5u, 20u}) {
    const auto b = indicators::bbands(c, n, 2.0);
    const auto ob = oracle::bbands(c, n, 2.0);
    cmp("bbands.upper", col(b.upper), ob.upper);
    cmp("bbands.middle", col(b.middle), ob.middle);
    cmp("bbands.lower", col(b.lower), ob.lower);
  }
  {
    const auto m = indicators::macd(c, 12, 26, 9);
    const auto fast = oracle::ema(c, 12), slow = oracle::ema(c, 26);
    std::vector<double> line(c.size(), oracle::nan);
    for (std::size_t i = 0; i < c.size(); ++i)
      if (!std::isnan(slow[i])) line[i] = fast[i] - slow[i];
    const auto sig = oracle::ema(line, 9);
    std::vector<double> hist(c.size(), oracle::nan);
    for (std::size_t i = 0; i < c.size(); ++i)
      if (!std::isnan(sig[i])) hist[i] = line[i] - sig[i];
    cmp("macd", col(m.macd), line);
    cmp("macdsignal", col(m.signal), sig);
    cmp("macdhist", col(m.hist), hist);
  }
  {
    const auto p = indicators::price_transforms(bars);
    std::vector<double> avg(c.size()), med(c.size()), typ(c.size()), wcl(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      avg[i] = (o[i] + h[i] + l[i] + c[i]) / 4.0;
      med[i] = (h[i] + l[i]) / 2.0;
      typ[i] = (h[i] + l[i] + c[i]) / 3.0;
      wcl[i] = (h[i] + l[i] + 2.0 * c[i]) / 4.0;
    }
    cmp("avgprice", col(p.avgprice), avg);
    cmp("medprice", col(p.medprice), med);
    cmp("typprice", col(p.typprice), typ);
    cmp("wclprice", col(p.wclprice), wcl);
  }
  return {worst <= 1e-9, "max abs error " + fmt("%.3g", worst) + " (" + worst_name + ")"};
}

Outcome leakage_suite() {
  const auto bars = oracle::random_bars(1000, 77);
  std::vector<std::string> broken;

  const auto highs = bars.highs();
  const auto lab = compute_highest_high(bars, 5);
  const auto want = oracle::highest_high(highs, 5);
  for (std::size_t i = 0; i < lab.size(); ++i)
    if (!(lab[i] == want[i] || (std::isnan(lab[i]) && std::isnan(want[i])))) {
      broken.push_back("label brute force");
      break;
    }

  // Features: a change at bar t (and after) leaves every earlier row intact.
  const auto specs = indicators::default_specs();
  const auto base = indicators::compute_features(bars, specs);
  for (std::size_t t : {100u, 500u, 900u}) {
    std::vector<Candle> mod(bars.bars().begin(), bars.bars().end());
    for (std::size_t i = t; i < mod.size(); ++i) {
      mod[i].open *= 1.3;
      mod[i].high *= 1.35;
      mod[i].low *= 1.25;
      mod[i].close *= 1.3;
    }
    const auto f = indicators::compute_features(CandleSeries(mod), specs);
    for (std::size_t c = 0; c < base.cols(); ++c) {
      std::size_t i = 0;
      while (i < t && (base.column(c)[i] == f.column(c)[i] || (std::isnan(base.column(c)[i]) && std::isnan(f.column(c)[i]))))
        ++i;
      if (i < t) {
        broken.push_back("feature " + base.column_names()[c] + " row " + std::to_string(i));
        break;
      }
    }
  }

  // Label: bumping high[t] moves only labels t-5 .. t-1.
  for (std::size_t t : {10u, 400u, 997u}) {
    auto hi = highs;
    hi[t] += 1.0;
    const auto g = compute_highest_high(hi, 5);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const bool inside = i + 5 >= t && i < t && i + 5 < g.size();
      const bool same = g[i] == lab[i] || (std::isnan(g[i]) && std::isnan(lab[i]));
      if (inside == same) {
        broken.push_back("label locality at " + std::to_string(i));
        break;
      }
    }
  }

  // Windows: row r only reads frame rows r-L+1 .. r.
  auto frame = clean(base).frame;
  frame.set_column("highest_high", std::vector<double>(frame.rows(), 1.0));
  frame.set_label("highest_high");
  const auto w0 = to_windowed(frame, 5);
  const std::size_t t = frame.rows() / 2;
  auto bumped = frame;
  auto closes = frame.column("close");
  closes[t] += 1.0;
  bumped.set_column("close", closes);
  const auto w1 = to_windowed(bumped, 5);
  for (std::size_t r = 0; r < w0.rows; ++r) {
    const bool reads_t = w0.row_timestamps[r] >= frame.index()[t] && w0.row_timestamps[r] <= frame.index()[t + 4];
    bool same = true;
    for (std::size_t c = 0; c < w0.cols; ++c) same = same && w0.at(r, c) == w1.at(r, c);
    if (reads_t == same) {
      broken.push_back("window row " + std::to_string(r));
      break;
    }
  }

  // Rolling ARIMA forecasts never see the bar they forecast.
  const auto c = bars.closes();
  const auto fa = arima::rolling_forecast_feature(c, {1, 0, 0}, 0, 300, 100);
  auto cm = c;
  for (std::size_t i = 600; i < cm.size(); ++i) cm[i] += 0.5;
  const auto fb = arima::rolling_forecast_feature(cm, {1, 0, 0}, 0, 300, 100);
  for (std::size_t i = 0; i <= 600; ++i)
    if (!(fa.values[i] == fb.values[i] || (std::isnan(fa.values[i]) && std::isnan(fb.values[i])))) {
      broken.push_back("arima forecast " + std::to_string(i));
      break;
    }

  std::string detail = broken.empty() ? "label exact, features/label/windows/arima causal" : "broken: ";
  for (const auto& b : broken) detail += b + "; ";
  return {broken.empty(), detail};
}

Outcome boosting_math() {
  std::vector<std::string> bad;
  if (trees::leaf_weight(4, 3, 1) != -1.0) bad.push_back("leaf_weight");
  if (trees::split_gain(2, 1, -2, 1, 0, 0) != 4.0) bad.push_back("split_gain");
  if (trees::split_gain(2, 1, -2, 1, 0, 0.75) != 3.25) bad.push_back("split_gain gamma");

  Rng rng(8);
  const std::size_t n = 500, f = 20;
  std::vector<double> X(n * f), y(n);
  for (auto& v : X) v = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::sin(3 * X[i * f]) + X[i * f + 1] * X[i * f + 2] + 0.1 * rng.normal();
  trees::BoostParams bp;
  bp.n_trees = 100;
  bp.learning_rate = 0.3;
  bp.tree.gamma = 0.0;
  const auto m = trees::newton_boost_fit({X, n, f}, y, bp);
  double worst_rise = 0.0;
  for (std::size_t i = 1; i < m.objective_history.size(); ++i)
    worst_rise = std::max(worst_rise, m.objective_history[i] - m.objective_history[i - 1]);
  if (m.objective_history.size() != 101) bad.push_back("history length");
  if (worst_rise > 0.0) bad.push_back("objective rose by " + fmt("%.3g", worst_rise));

  const std::size_t k = 20;
  std::vector<double> Xs(k), ys(k);
  for (std::size_t i = 0; i < k; ++i) {
    Xs[i] = static_cast<double>(i) + 0.5 * rng.uniform();
    ys[i] = rng.normal();
  }
  trees::BoostParams one;
  one.n_trees = 1;
  one.learning_rate = 1.0;
  one.tree.lambda = 0.0;
  one.tree.max_depth = 0;
  const auto single = trees::newton_boost_fit({Xs, k, 1}, ys, one);
  const auto p = trees::predict(single, {Xs, k, 1});
  const double rmse = evaluation::compute_metrics(p, ys).rmse;
  if (!(rmse < 1e-10)) bad.push_back("interpolation rmse " + fmt("%.3g", rmse));

  std::string detail = "max objective rise " + fmt("%.3g", worst_rise) + ", interpolation rmse " + fmt("%.3g", rmse);
  for (const auto& b : bad) detail += "; " + b;
  return {bad.empty(), detail};
}

Outcome recurrent_math() {
  double worst = 0.0;
  for (auto cell : {recurrent::CellKind::gru, recurrent::CellKind::lstm})
    for (std::size_t hidden : {3u, 8u})
      for (std::uint64_t seed : {1u, 2u}) {
        recurrent::GradientCheckOptions o;
        o.sequence_length = seed == 1 ? 6 : 20;
        worst = std::max(worst, recurrent::gradient_check({cell, hidden}, seed, o).max_relative_error);
      }
  return {worst < 1e-4, "max relative error " + fmt("%.3g", worst)};
}

std::vector<double> simulate_ar2(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(2200, 0.0);
  for (std::size_t t = 2; t < x.size(); ++t) x[t] = 0.6 * x[t - 1] - 0.3 * x[t - 2] + rng.normal();
  return {x.begin() + 200, x.end()};
}

Outcome arima_selection() {
  int hits = 0;
  std::string picks;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = arima::select_order(simulate_ar2(seed), {5, {0, 1}, 2});
    const auto& s = r.selected;
    if ((s.p == 2 || s.p == 3) && s.q == 0) ++hits;
    picks += "(" + std::to_string(s.p) + "," + std::to_string(s.d) + "," + std::to_string(s.q) + ") ";
  }
  return {hits >= 4, std::to_string(hits) + "/5 seeds; picks " + picks};
}

Outcome recap_effectiveness() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    recap::PlantedFrameParams pp;
    pp.n = 20000;
    pp.informative = 5;
    pp.noise = 64;
    pp.seed = seed;
    const auto frame = recap::generate_planted_frame(pp);
    const std::size_t n = frame.rows(), a = n * 6 / 10, b = n * 8 / 10;
    std::vector<bool> tr(n), ho(n), te(n);
    for (std::size_t i = 0; i < n; ++i) (i < a ? tr : i < b ? ho : te)[i] = true;
    const auto train = frame.filter_rows(tr), heldout = frame.filter_rows(ho), test = frame.filter_rows(te);

    recap::RecapSettings s;
    s.lookback = 5;
    s.newton_boost.n_trees = 30;
    s.newton_boost.tree.max_depth = 4;
    s.newton_boost.seed = seed;
    s.hist_boost = s.newton_boost;
    s.hist_boost.tree.splitter = trees::Splitter::histogram;
    s.hist_boost.tree.growth = trees::Growth::leaf_wise;
    s.hist_boost.tree.max_leaves = 15;
    s.hist_boost.tree.max_depth = 0;
    s.hist_boost.goss = trees::Goss{};
    s.forest.n_trees = 20;
    s.forest.max_depth = 8;
    s.forest.seed = seed;
    s.sequence.arch = {recurrent::CellKind::gru, 16};
    s.sequence.train.batch_size = 256;
    s.sequence.train.learning_rate = 3e-3;
    s.sequence.train.max_epochs = 15;
    s.sequence.train.patience = 3;
    s.sequence.train.seed = seed;
    s.baseline = false;
    const auto run = recap::run_recap(train, heldout, {20}, s);
    const auto& sel = run.results[0].selected_base;
    std::size_t planted = 0;
    for (const auto& name : sel)
      if (name.rfind("planted_", 0) == 0) ++planted;

    const auto chosen = recap::fit_sequence(train, heldout, test, sel, s);
    const auto all = recap::fit_sequence(train, heldout, test, train.feature_names(), s);
    const bool ok = planted >= 4 && chosen.metrics.rmse <= all.metrics.rmse;
    if (ok) ++wins;
    detail += "seed " + std::to_string(seed) + ": planted " + std::to_string(planted) + "/5 in top 20, rmse " +
              fmt("%.4g", chosen.metrics.rmse) + " vs " + fmt("%.4g", all.metrics.rmse) + (ok ? " ok" : " miss") +
              "; ";
  }
  return {wins >= 2, std::to_string(wins) + "/3 seeds; " + detail};
}

Outcome recap_arithmetic() {
  Rng rng(31);
  std::array<trees::ImportanceVector, 3> v;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < 40; ++i) names.push_back("f" + std::to_string(i) + "(t)");
  for (auto& x : v) {
    x.feature_names = names;
    for (std::size_t i = 0; i < names.size(); ++i) x.scores.push_back(rng.uniform());
  }
  const std::array<double, 3> r{7.3e-4, 8.1e-4, 1.2e-3};
  const auto s = recap::recap_scores(v, r);
  bool exact = true;
  for (std::size_t i = 0; i < names.size(); ++i) {
    double e = 0.0;
    for (std::size_t m = 0; m < 3; ++m) e += v[m].scores[i] / r[m];
    exact = exact && e == s[i];
  }
  bool invariant = true;
  for (double c : {1e-3, 0.5, 3.0, 1e4}) {
    const auto t = recap::recap_scores(v, {r[0] * c, r[1] * c, r[2] * c});
    invariant = invariant && recap::top_k(names, t, 20) == recap::top_k(names, s, 20);
  }
  return {exact && invariant,
          std::string(exact ? "exact" : "NOT exact") + ", top-20 " + (invariant ? "scale invariant" : "changed")};
}

Outcome stacking_structure() {
  const auto combos = stacking::enumerate_combinations();
  std::vector<int> hist(6, 0);
  for (const auto& c : combos) ++hist[c.size()];
  const bool shape = combos.size() == 31 && hist == std::vector<int>{0, 5, 10, 10, 5, 1};

  Rng rng(5);
  const std::size_t n = 5000;
  std::array<std::vector<double>, 5> p;
  std::vector<double> y(n);
  std::vector<Timestamp> idx;
  double level = 0.75;
  const double noise[5] = {0.004, 0.003, 0.005, 0.0035, 0.003};
  for (std::size_t i = 0; i < n; ++i) {
    level += 0.001 * rng.normal();
    y[i] = level;
    for (std::size_t m = 0; m < 5; ++m) p[m].push_back(level + noise[m] * rng.normal());
    idx.push_back(testing_support::at(2020, 1, 1) + std::chrono::minutes(15) * static_cast<int>(i));
  }
  const auto frame = stacking::build_meta_frame(p, y, idx);
  const SplitSpec spec{{idx[0], idx[2500]}, {idx[2500], idx[3750]}, {idx[3750], idx.back() + std::chrono::hours(1)}};
  const auto rep = stacking::run_stacking_search(frame, spec, 11);
  const auto& chosen = rep.rows[rep.selected];
  bool below = true;
  for (const auto& r : rep.rows)
    if (r.members.size() == 1) below = below && chosen.validation.rmse <= r.validation.rmse;
  return {shape && below && rep.rows.size() == 31,
          std::string("histogram ") + (shape ? "{5,10,10,5,1}" : "WRONG") + ", selected " +
              stacking::combination_name(chosen.members) + " val rmse " + fmt("%.4g", chosen.validation.rmse) +
              (below ? " <= every singleton" : " ABOVE a singleton")};
}

Outcome metrics_suite() {
  Rng rng(99);
  double worst_rel = 0.0;
  bool mae_ok = true, mape_ok = true;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.below(100);
    std::vector<double> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.normal();
      y[i] = rng.uniform() < 0.05 ? 0.0 : rng.normal();
    }
    const auto m = evaluation::compute_metrics(p, y);
    if (m.mse > 0) worst_rel = std::max(worst_rel, std::abs(m.rmse * m.rmse - m.mse) / m.mse);
    mae_ok = mae_ok && m.mae <= m.rmse;
    const bool zero = std::find(y.begin(), y.end(), 0.0) != y.end();
    mape_ok = mape_ok && (zero != m.mape.has_value());
  }
  evaluation::Metrics m;
  m.rmse = 7.563e-4;
  m.mae = 5.12345e-4;
  m.mape = 6.1e-4;
  const auto back = evaluation::parse_results_table(evaluation::format_results_table({{"Final 20", m}}));
  const bool rt = back.size() == 1 && std::abs(back[0].metrics.rmse - m.rmse) < 1e-7 &&
                  std::abs(back[0].metrics.mae - m.mae) < 1e-7 && std::abs(*back[0].metrics.mape - *m.mape) < 1e-7;
  return {worst_rel <= 1e-12 && mae_ok && mape_ok && rt,
          "rmse^2 vs mse rel " + fmt("%.3g", worst_rel) + (mae_ok ? ", mae<=rmse" : ", MAE>RMSE") +
              (mape_ok ? ", mape rule ok" : ", MAPE RULE BROKEN") + (rt ? ", table round trip ok" : ", ROUND TRIP")};
}

Outcome determinism() {
  testing_support::TempDir dir;
  std::string reports[2];
  const unsigned threads[2] = {1, 4};
  for (int i = 0; i < 2; ++i) {
    auto c = parse_config(KeyValues::parse_text(small_config_text(threads[i])));
    c.output_dir = dir.path() / ("t" + std::to_string(threads[i]));
    run_pipeline(c);
    reports[i] = testing_support::read_file(c.output_dir / "report.json");
  }
  const bool same = !reports[0].empty() && reports[0] == reports[1];
  return {same, "report.json " + std::string(same ? "identical" : "DIFFERS") + " at threads 1 and 4 (" +
                    std::to_string(reports[0].size()) + " bytes)"};
}

}  // namespace

int main() {
  criterion("indicator_oracles", 5, indicator_oracles);
  criterion("leakage", 5, leakage_suite);
  criterion("boosting_math", 60, boosting_math);
  criterion("recurrent_gradients", 30, recurrent_math);
  criterion("arima_order_search", 10, arima_selection);
  criterion("recap_effectiveness", 600, recap_effectiveness);
  criterion("recap_arithmetic", 5, recap_arithmetic);
  criterion("stacking_structure", 300, stacking_structure);
  criterion("metrics", 5, metrics_suite);
  criterion("determinism", 300, determinism);
  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
