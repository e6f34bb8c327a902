#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "recapfx/error.hpp"
#include "recapfx/random.hpp"
#include "recapfx/stacking.hpp"
#include "support.hpp"

using namespace recapfx;
using namespace recapfx::stacking;
using testing_support::at;

namespace {

std::vector<Timestamp> hours(std::size_t n) {
  std::vector<Timestamp> idx;
  for (std::size_t i = 0; i < n; ++i) idx.push_back(at(2020, 1, 1) + std::chrono::hours(static_cast<int>(i)));
  return idx;
}

/// Label is the mean of lstm and gru; the other three are noisy copies. The
/// level mean-reverts so later splits stay inside the meta-train range.
MetaFrame mean_of_two(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::array<std::vector<double>, 5> p;
  std::vector<double> y(n);
  double level = 0.75;
  for (std::size_t i = 0; i < n; ++i) {
    level = 0.75 + 0.95 * (level - 0.75) + 0.002 * rng.normal();
    const double a = level + 0.004 * rng.normal(), b = level + 0.004 * rng.normal();
    p[3].push_back(a);
    p[4].push_back(b);
    y[i] = 0.5 * (a + b);
    for (std::size_t m = 0; m < 3; ++m) p[m].push_back(y[i] + 0.01 * rng.normal());
  }
  return build_meta_frame(p, y, hours(n));
}

SplitSpec thirds(const MetaFrame& f) {
  const auto n = f.rows();
  const auto t = [&](std::size_t i) { return f.index[i]; };
  const auto end = f.index.back() + std::chrono::hours(1);
  return {{t(0), t(n / 2)}, {t(n / 2), t(3 * n / 4)}, {t(3 * n / 4), end}};
}

}  // namespace

TEST_CASE("combinations") {
  const auto all = enumerate_combinations();
  REQUIRE(all.size() == 31);
  std::map<std::size_t, int> sizes;
  for (const auto& c : all) {
    ++sizes[c.size()];
    CHECK(std::is_sorted(c.begin(), c.end()));
  }
  CHECK(sizes == std::map<std::size_t, int>{{1, 5}, {2, 10}, {3, 10}, {4, 5}, {5, 1}});
  CHECK(all.front() == Combination{BaseModel::newton_boost});
  CHECK(all.back().size() == 5);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1] != all[i]);
  CHECK(combination_name({BaseModel::hist_boost, BaseModel::lstm}) == "hist_boost+lstm");
}

TEST_CASE("build_meta_frame") {
  std::array<std::vector<double>, 5> p;
  for (auto& v : p) v = {1.0, 2.0, 3.0};
  const auto f = build_meta_frame(p, {1.0, 2.0, 3.0}, hours(3));
  CHECK(f.rows() == 3);
  CHECK(f.predictions[2] == std::vector<double>{1.0, 2.0, 3.0});
  auto bad = p;
  bad[3][1] = std::nan("");
  try {
    build_meta_frame(bad, {1.0, 2.0, 3.0}, hours(3));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("lstm") != std::string::npos);
  }
  auto short_one = p;
  short_one[0].pop_back();
  CHECK_THROWS_AS(build_meta_frame(short_one, {1.0, 2.0, 3.0}, hours(3)), DataError);
  CHECK_THROWS_AS(build_meta_frame(p, {1.0, 2.0}, hours(3)), DataError);
}

TEST_CASE("split_meta") {
  const auto f = mean_of_two(40, 1);
  const auto spec = thirds(f);
  const auto s = split_meta(f, spec);
  CHECK(s.train.rows() + s.validation.rows() + s.test.rows() == 40);
  CHECK(s.train.index.back() < s.validation.index.front());
  CHECK(s.validation.index.back() < s.test.index.front());
  auto overlap = spec;
  overlap.validation.start = spec.train.start;
  CHECK_THROWS_AS(split_meta(f, overlap), ParameterError);
  auto empty = spec;
  empty.test = {f.index.back() + std::chrono::hours(5), f.index.back() + std::chrono::hours(6)};
  CHECK_THROWS_AS(split_meta(f, empty), DataError);
}

TEST_CASE("meta network") {
  const auto f = mean_of_two(1200, 2);
  const auto s = split_meta(f, thirds(f));
  MetaNetConfig cfg;
  cfg.max_epochs = 80;
  cfg.learning_rate = 5e-3;
  SUBCASE("learns the averaging map") {
    const auto m = train_meta_nn(s.train, s.validation, {BaseModel::lstm, BaseModel::gru}, 3, cfg);
    const auto pred = predict_meta(m, s.test);
    double se = 0.0, base = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      se += std::pow(pred[i] - s.test.label[i], 2);
      base += std::pow(s.test.predictions[3][i] - s.test.label[i], 2);
    }
    CHECK(se < base);
  }
  SUBCASE("deterministic") {
    const Combination c{BaseModel::forest, BaseModel::gru};
    CHECK(predict_meta(train_meta_nn(s.train, s.validation, c, 4, cfg), s.test) ==
          predict_meta(train_meta_nn(s.train, s.validation, c, 4, cfg), s.test));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(train_meta_nn(s.train, s.validation, {}, 1, cfg), ParameterError);
    auto bad = cfg;
    bad.hidden = 0;
    CHECK_THROWS_AS(train_meta_nn(s.train, s.validation, {BaseModel::gru}, 1, bad), ParameterError);
  }
}

TEST_CASE("stacking search") {
  MetaNetConfig cfg;
  cfg.max_epochs = 40;
  cfg.learning_rate = 5e-3;
  cfg.hidden = 8;
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto f = mean_of_two(800, 100 + seed);
    const auto rep = run_stacking_search(f, thirds(f), seed, cfg);
    REQUIRE(rep.rows.size() == 31);
    const auto& chosen = rep.rows[rep.selected];
    for (const auto& r : rep.rows) REQUIRE(chosen.validation.rmse <= r.validation.rmse);
    const auto& mem = chosen.members;
    if (std::count(mem.begin(), mem.end(), BaseModel::lstm) && std::count(mem.begin(), mem.end(), BaseModel::gru))
      ++hits;
    if (seed == 1) {
      CHECK(stacking_csv(rep).rfind("id,rmse,mae,combination\n", 0) == 0);
      const auto j = to_json(rep);
      CHECK(j.dump() == to_json(run_stacking_search(f, thirds(f), seed, cfg, false, 2)).dump());
    }
  }
  CHECK(hits >= 4);
}
