#include <doctest.h>

#include <cmath>

#include "recapfx/error.hpp"
#include "recapfx/recap.hpp"
#include "support.hpp"

using namespace recapfx;
using namespace recapfx::recap;

namespace {

trees::ImportanceVector iv(std::vector<double> scores) {
  trees::ImportanceVector v;
  for (std::size_t i = 0; i < scores.size(); ++i) v.feature_names.push_back("f" + std::to_string(i) + "(t)");
  v.scores = std::move(scores);
  return v;
}

RecapSettings tiny_settings() {
  RecapSettings s;
  s.lookback = 2;
  s.newton_boost.n_trees = 10;
  s.newton_boost.tree.max_depth = 3;
  s.hist_boost = s.newton_boost;
  s.hist_boost.tree.splitter = trees::Splitter::histogram;
  s.hist_boost.tree.bins = 32;
  s.forest.n_trees = 10;
  s.forest.max_depth = 4;
  s.sequence.arch = {recurrent::CellKind::gru, 4};
  s.sequence.train.max_epochs = 3;
  s.sequence.train.batch_size = 64;
  s.sequence.train.learning_rate = 1e-2;
  return s;
}

std::pair<FeatureFrame, FeatureFrame> planted_split(std::size_t n) {
  PlantedFrameParams p;
  p.n = n;
  p.informative = 2;
  p.noise = 3;
  const auto f = generate_planted_frame(p);
  std::vector<bool> head(f.rows()), tail(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) (i < f.rows() * 3 / 4 ? head : tail)[i] = true;
  return {f.filter_rows(head), f.filter_rows(tail)};
}

}  // namespace

TEST_CASE("normalize_scores") {
  const auto n = normalize_scores(iv({0.0, 5.0, 10.0}));
  CHECK(n.scores == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(n.feature_names == iv({0, 0, 0}).feature_names);
  CHECK(normalize_scores(iv({3.0, 3.0})).scores == std::vector<double>{0.5, 0.5});
  const auto shifted = normalize_scores(iv({7.0, 12.0, 17.0}));
  CHECK(shifted.scores == n.scores);
}

TEST_CASE("recap_scores") {
  SUBCASE("sum of normalized over rmse") {
    const std::array<trees::ImportanceVector, 3> ones{iv({1.0, 0.0}), iv({1.0, 0.0}), iv({1.0, 0.0})};
    const auto s = recap_scores(ones, {0.5, 1.0, 2.0});
    CHECK(s[0] == 3.5);
    CHECK(s[1] == 0.0);
  }
  SUBCASE("halving every rmse doubles the scores") {
    const std::array<trees::ImportanceVector, 3> v{iv({0.1, 0.9, 0.4}), iv({1.0, 0.0, 0.3}), iv({0.2, 0.2, 0.7})};
    const auto a = recap_scores(v, {0.3, 0.7, 1.1});
    const auto b = recap_scores(v, {0.15, 0.35, 0.55});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(2.0 * a[i]).epsilon(1e-15));
    const std::vector<std::string> names = v[0].feature_names;
    CHECK(top_k(names, a, 2) == top_k(names, b, 2));
  }
  SUBCASE("errors") {
    const std::array<trees::ImportanceVector, 3> v{iv({1.0}), iv({1.0}), iv({1.0})};
    CHECK_THROWS_AS(recap_scores(v, {0.0, 1.0, 1.0}), ParameterError);
    CHECK_THROWS_AS(recap_scores(v, {1.0, -1.0, 1.0}), ParameterError);
    std::array<trees::ImportanceVector, 3> w = v;
    w[2] = iv({1.0, 2.0});
    CHECK_THROWS(recap_scores(w, {1.0, 1.0, 1.0}));
  }
}

TEST_CASE("top_k") {
  const std::vector<std::string> names{"d", "b", "c", "a"};
  CHECK(top_k(names, {1.0, 2.0, 2.0, 0.5}, 2) == std::vector<std::size_t>{1, 2});
  CHECK(top_k(names, {1.0, 1.0, 1.0, 1.0}, 3) == std::vector<std::size_t>{3, 1, 2});
  CHECK(top_k(names, {1.0, 2.0, 3.0, 4.0}, 4).size() == 4);
}

TEST_CASE("lagged names") {
  CHECK(parse_lagged_name("close(t)") == std::pair<std::string, std::size_t>{"close", 0});
  CHECK(parse_lagged_name("arima_high(t-12)") == std::pair<std::string, std::size_t>{"arima_high", 12});
  for (const char* bad : {"close", "close(t+1)", "close(t-)", "(t-1)", "close(t-x)"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_lagged_name(bad), DataError);
  }
  CHECK(collapse_to_base({"close(t)", "close(t-1)", "high(t)"}) == std::vector<std::string>{"close", "high"});
  CHECK(collapse_to_base({"high(t-3)", "close(t)", "high(t)"}) == std::vector<std::string>{"high", "close"});
}

TEST_CASE("thirty selections with repeats collapse to twenty-eight") {
  const std::vector<std::string> bases{"close",  "high",          "wclprice",     "trange", "typprice", "dema",
                                       "upperband", "atr",        "trima30",      "bop",    "sma10",    "willr",
                                       "medprice", "natr",        "fastk",        "plus_dm", "adxr",    "midpoint",
                                       "macdsignalfix", "macdsignalex", "avgprice", "tema",  "slowd",    "ht",
                                       "mom",    "minus_di",      "sma30",        "macdhistext"};
  std::vector<std::string> lagged;
  for (const auto& b : bases) {
    lagged.push_back(b + "(t)");
    if (b == "close" || b == "high") lagged.push_back(b + "(t-1)");
  }
  REQUIRE(lagged.size() == 30);
  CHECK(collapse_to_base(lagged) == bases);
}

TEST_CASE("planted frame") {
  PlantedFrameParams p;
  p.n = 500;
  p.informative = 2;
  p.noise = 3;
  const auto f = generate_planted_frame(p);
  CHECK(f.label_name().has_value());
  CHECK(f.feature_names().size() == 6);
  for (std::size_t c = 0; c < f.cols(); ++c)
    for (double v : f.column(c)) REQUIRE(std::isfinite(v));
  CHECK(generate_planted_frame(p).column("high") == f.column("high"));
}

TEST_CASE("run_recap") {
  const auto [train, heldout] = planted_split(800);
  const auto settings = tiny_settings();
  SUBCASE("k covering every lagged feature reproduces the baseline") {
    const std::size_t all = settings.lookback * train.feature_names().size();
    const auto run = run_recap(train, heldout, {all}, settings);
    REQUIRE(run.baseline);
    REQUIRE(run.results.size() == 1);
    const auto& r = run.results[0];
    CHECK(r.selected_lagged.size() == all);
    CHECK(r.final_fit.metrics.rmse == run.baseline->metrics.rmse);
    for (std::size_t m = 0; m < 3; ++m) CHECK(r.rmses[m] == run.baseline->metrics.rmse);
    CHECK(r.final_scores == recap_scores(run.normalized, r.rmses));
  }
  SUBCASE("fused scores follow the per-model rmses") {
    const auto run = run_recap(train, heldout, {3}, settings);
    const auto& r = run.results[0];
    for (std::size_t i = 0; i < run.lagged_names.size(); ++i) {
      double expect = 0.0;
      for (std::size_t m = 0; m < 3; ++m) expect += run.normalized[m].scores[i] / r.rmses[m];
      CHECK(r.final_scores[i] == doctest::Approx(expect).epsilon(1e-14));
    }
    CHECK(r.selected_lagged.size() == 3);
    CHECK(scores_csv(run).rfind("k,rank,feature,newton_boost,forest,hist_boost,final\n", 0) == 0);
  }
  SUBCASE("rows inside the forbidden range are rejected") {
    auto s = settings;
    s.forbidden = TimeRange{heldout.index().front(), heldout.index().back() + std::chrono::minutes(1)};
    CHECK_THROWS_AS(run_recap(train, heldout, {3}, s), ParameterError);
  }
  SUBCASE("parameter errors") {
    CHECK_THROWS_AS(run_recap(train, heldout, {}, settings), ParameterError);
    CHECK_THROWS_AS(run_recap(train, heldout, {0}, settings), ParameterError);
    CHECK_THROWS_AS(run_recap(heldout, train, {3}, settings), ParameterError);
  }
}
