#include "recapfx/indicators.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "recapfx/error.hpp"

namespace recapfx::indicators {
namespace {

constexpr std::pair<Kind, const char*> kKindNames[] = {
    {Kind::sma, "sma"},         {Kind::ema, "ema"},           {Kind::wma, "wma"},
    {Kind::dema, "dema"},       {Kind::tema, "tema"},         {Kind::trima, "trima"},
    {Kind::macd, "macd"},       {Kind::willr, "willr"},       {Kind::bop, "bop"},
    {Kind::trange, "trange"},   {Kind::atr, "atr"},           {Kind::natr, "natr"},
    {Kind::avgprice, "avgprice"}, {Kind::medprice, "medprice"}, {Kind::typprice, "typprice"},
    {Kind::wclprice, "wclprice"}, {Kind::bbands, "bbands"},   {Kind::rsi, "rsi"},
    {Kind::mom, "mom"},         {Kind::roc, "roc"}};

void require_period(std::size_t n, std::size_t min, const char* what) {
  if (n < min)
    throw ParameterError(std::string(what) + " period must be >= " + std::to_string(min) + ", got " +
                         std::to_string(n));
}

/// Index of the first defined cell (size() when none).
std::size_t first_defined(std::span<const double> v) {
  std::size_t i = 0;
  while (i < v.size() && is_undefined(v[i])) ++i;
  return i;
}

IndicatorColumn undefined_column(std::size_t size) {
  return {{}, std::vector<double>(size, kUndefined), size};
}

IndicatorColumn finish(std::vector<double> values, std::size_t warmup) {
  warmup = std::min(warmup, values.size());
  for (std::size_t i = 0; i < warmup; ++i) values[i] = kUndefined;
  return {{}, std::move(values), warmup};
}

/// Trailing max/min of a span over n (inclusive of i).
double window_max(std::span<const double> v, std::size_t i, std::size_t n) {
  return *std::max_element(v.begin() + static_cast<std::ptrdiff_t>(i + 1 - n),
                           v.begin() + static_cast<std::ptrdiff_t>(i + 1));
}
double window_min(std::span<const double> v, std::size_t i, std::size_t n) {
  return *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(i + 1 - n),
                           v.begin() + static_cast<std::ptrdiff_t>(i + 1));
}

IndicatorColumn named(IndicatorColumn c, std::string name) {
  c.name = std::move(name);
  return c;
}

}  // namespace

std::string to_string(Kind kind) {
  for (const auto& [k, s] : kKindNames)
    if (k == kind) return s;
  return "unknown";
}

Kind parse_kind(const std::string& text) {
  for (const auto& [k, s] : kKindNames)
    if (text == s) return k;
  throw ParameterError("unknown indicator kind `" + text + "`");
}

double IndicatorSpec::param(const std::string& key, double fallback) const {
  const auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

IndicatorColumn sma(std::span<const double> v, std::size_t n) {
  require_period(n, 1, "sma");
  const std::size_t start = first_defined(v);
  if (start + n > v.size()) return undefined_column(v.size());
  std::vector<double> out(v.size(), kUndefined);
  // Each window summed directly: no drift from running sums on long series.
  for (std::size_t i = start + n - 1; i < v.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = i + 1 - n; j <= i; ++j) s += v[j];
    out[i] = s / static_cast<double>(n);
  }
  return finish(std::move(out), start + n - 1);
}

IndicatorColumn ema(std::span<const double> v, std::size_t n) {
  require_period(n, 1, "ema");
  const std::size_t start = first_defined(v);
  if (start + n > v.size()) return undefined_column(v.size());
  std::vector<double> out(v.size(), kUndefined);
  const double k = 2.0 / (static_cast<double>(n) + 1.0);
  double seed = 0.0;
  for (std::size_t j = start; j < start + n; ++j) seed += v[j];
  double prev = seed / static_cast<double>(n);
  out[start + n - 1] = prev;
  for (std::size_t i = start + n; i < v.size(); ++i) {
    prev = prev + k * (v[i] - prev);
    out[i] = prev;
  }
  return finish(std::move(out), start + n - 1);
}

IndicatorColumn wma(std::span<const double> v, std::size_t n) {
  require_period(n, 1, "wma");
  const std::size_t start = first_defined(v);
  if (start + n > v.size()) return undefined_column(v.size());
  std::vector<double> out(v.size(), kUndefined);
  const double denom = static_cast<double>(n * (n + 1)) / 2.0;
  for (std::size_t i = start + n - 1; i < v.size(); ++i) {
    double s = 0.0;
    for (std::size_t w = 1; w <= n; ++w) s += static_cast<double>(w) * v[i + w - n];
    out[i] = s / denom;
  }
  return finish(std::move(out), start + n - 1);
}

IndicatorColumn dema(std::span<const double> v, std::size_t n) {
  const auto e1 = ema(v, n);
  const auto e2 = ema(e1.values, n);
  std::vector<double> out(v.size(), kUndefined);
  for (std::size_t i = e2.warmup_len; i < v.size(); ++i) out[i] = 2.0 * e1.values[i] - e2.values[i];
  return finish(std::move(out), e2.warmup_len);
}

IndicatorColumn tema(std::span<const double> v, std::size_t n) {
  const auto e1 = ema(v, n);
  const auto e2 = ema(e1.values, n);
  const auto e3 = ema(e2.values, n);
  std::vector<double> out(v.size(), kUndefined);
  for (std::size_t i = e3.warmup_len; i < v.size(); ++i)
    out[i] = 3.0 * e1.values[i] - 3.0 * e2.values[i] + e3.values[i];
  return finish(std::move(out), e3.warmup_len);
}

IndicatorColumn trima(std::span<const double> v, std::size_t n) {
  require_period(n, 2, "trima");
  const std::size_t inner = (n + 2) / 2;  // ceil((n+1)/2)
  const std::size_t outer = n / 2 + 1;
  const auto first = sma(v, inner);
  return sma(first.values, outer);
}

MacdColumns macd(std::span<const double> closes, std::size_t fast, std::size_t slow,
                 std::size_t signal) {
  if (fast >= slow)
    throw ParameterError("macd fast period (" + std::to_string(fast) +
                         ") must be below slow period (" + std::to_string(slow) + ")");
  require_period(fast, 1, "macd fast");
  require_period(signal, 1, "macd signal");
  const auto f = ema(closes, fast);
  const auto s = ema(closes, slow);
  std::vector<double> line(closes.size(), kUndefined);
  for (std::size_t i = s.warmup_len; i < closes.size(); ++i) line[i] = f.values[i] - s.values[i];
  MacdColumns out;
  out.macd = finish(std::move(line), s.warmup_len);
  out.signal = ema(out.macd.values, signal);
  std::vector<double> hist(closes.size(), kUndefined);
  for (std::size_t i = out.signal.warmup_len; i < closes.size(); ++i)
    hist[i] = out.macd.values[i] - out.signal.values[i];
  out.hist = finish(std::move(hist), out.signal.warmup_len);
  return out;
}

IndicatorColumn willr(const CandleSeries& series, std::size_t n) {
  require_period(n, 1, "willr");
  const auto hi = series.highs(), lo = series.lows(), cl = series.closes();
  if (n > hi.size()) return undefined_column(hi.size());
  std::vector<double> out(hi.size(), kUndefined);
  for (std::size_t i = n - 1; i < hi.size(); ++i) {
    const double hh = window_max(hi, i, n);
    const double ll = window_min(lo, i, n);
    out[i] = hh == ll ? -50.0 : -100.0 * (hh - cl[i]) / (hh - ll);
  }
  return finish(std::move(out), n - 1);
}

IndicatorColumn bop(const CandleSeries& series, std::size_t n) {
  std::vector<double> raw(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& b = series[i];
    const double range = b.high - b.low;
    raw[i] = range == 0.0 ? 0.0 : (b.close - b.open) / range;
  }
  return sma(raw, n);
}

RangeColumns true_range_atr(const CandleSeries& series, std::size_t n) {
  require_period(n, 1, "atr");
  const std::size_t size = series.size();
  std::vector<double> tr(size, kUndefined);
  for (std::size_t i = 1; i < size; ++i) {
    const auto& b = series[i];
    const double prev = series[i - 1].close;
    tr[i] = std::max({b.high - b.low, std::abs(b.high - prev), std::abs(b.low - prev)});
  }
  RangeColumns out;
  out.trange = finish(tr, std::min<std::size_t>(1, size));
  out.atr = sma(out.trange.values, n);
  std::vector<double> natr(size, kUndefined);
  for (std::size_t i = out.atr.warmup_len; i < size; ++i)
    natr[i] = 100.0 * out.atr.values[i] / series[i].close;
  out.natr = finish(std::move(natr), out.atr.warmup_len);
  return out;
}

PriceTransforms price_transforms(const CandleSeries& series) {
  const std::size_t n = series.size();
  std::vector<double> avg(n), med(n), typ(n), wcl(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = series[i];
    avg[i] = (b.open + b.high + b.low + b.close) / 4.0;
    med[i] = (b.high + b.low) / 2.0;
    typ[i] = (b.high + b.low + b.close) / 3.0;
    wcl[i] = (2.0 * b.close + b.high + b.low) / 4.0;
  }
  return {{{}, std::move(avg), 0}, {{}, std::move(med), 0}, {{}, std::move(typ), 0},
          {{}, std::move(wcl), 0}};
}

BandColumns bbands(std::span<const double> closes, std::size_t n, double k) {
  require_period(n, 2, "bbands");
  if (!(k > 0.0)) throw ParameterError("bbands width k must be > 0");
  BandColumns out;
  out.middle = sma(closes, n);
  std::vector<double> up(closes.size(), kUndefined), lo(closes.size(), kUndefined);
  for (std::size_t i = out.middle.warmup_len; i < closes.size(); ++i) {
    const double m = out.middle.values[i];
    double ss = 0.0;
    for (std::size_t j = i + 1 - n; j <= i; ++j) ss += (closes[j] - m) * (closes[j] - m);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    up[i] = m + k * sd;
    lo[i] = m - k * sd;
  }
  out.upper = finish(std::move(up), out.middle.warmup_len);
  out.lower = finish(std::move(lo), out.middle.warmup_len);
  return out;
}

IndicatorColumn rsi(std::span<const double> closes, std::size_t n) {
  require_period(n, 1, "rsi");
  const std::size_t size = closes.size();
  if (n >= size) return undefined_column(size);
  std::vector<double> out(size, kUndefined);
  auto value = [](double gain, double loss) {
    if (gain == 0.0 && loss == 0.0) return 50.0;
    return 100.0 * gain / (gain + loss);
  };
  double gain = 0.0, loss = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double d = closes[i] - closes[i - 1];
    gain += std::max(d, 0.0);
    loss += std::max(-d, 0.0);
  }
  gain /= static_cast<double>(n);
  loss /= static_cast<double>(n);
  out[n] = value(gain, loss);
  const double nn = static_cast<double>(n);
  for (std::size_t i = n + 1; i < size; ++i) {
    const double d = closes[i] - closes[i - 1];
    gain = (gain * (nn - 1.0) + std::max(d, 0.0)) / nn;
    loss = (loss * (nn - 1.0) + std::max(-d, 0.0)) / nn;
    out[i] = value(gain, loss);
  }
  return finish(std::move(out), n);
}

IndicatorColumn mom(std::span<const double> closes, std::size_t n) {
  require_period(n, 1, "mom");
  if (n >= closes.size()) return undefined_column(closes.size());
  std::vector<double> out(closes.size(), kUndefined);
  for (std::size_t i = n; i < closes.size(); ++i) out[i] = closes[i] - closes[i - n];
  return finish(std::move(out), n);
}

IndicatorColumn roc(std::span<const double> closes, std::size_t n) {
  require_period(n, 1, "roc");
  if (n >= closes.size()) return undefined_column(closes.size());
  std::vector<double> out(closes.size(), kUndefined);
  for (std::size_t i = n; i < closes.size(); ++i) out[i] = (closes[i] / closes[i - n] - 1.0) * 100.0;
  return finish(std::move(out), n);
}

std::vector<IndicatorColumn> compute(const CandleSeries& series, const IndicatorSpec& spec) {
  const auto closes = series.closes();
  auto period = [&](double fallback) {
    const double v = spec.param("n", fallback);
    if (!(v >= 1.0) || v != std::floor(v))
      throw ParameterError("indicator `" + spec.name + "`: period must be a positive integer");
    return static_cast<std::size_t>(v);
  };
  auto integer = [&](const char* key, double fallback) {
    const double v = spec.param(key, fallback);
    if (!(v >= 1.0) || v != std::floor(v))
      throw ParameterError("indicator `" + spec.name + "`: `" + key + "` must be a positive integer");
    return static_cast<std::size_t>(v);
  };
  const std::string& nm = spec.name;
  switch (spec.kind) {
    case Kind::sma: return {named(sma(closes, period(30)), nm)};
    case Kind::ema: return {named(ema(closes, period(30)), nm)};
    case Kind::wma: return {named(wma(closes, period(30)), nm)};
    case Kind::dema: return {named(dema(closes, period(30)), nm)};
    case Kind::tema: return {named(tema(closes, period(30)), nm)};
    case Kind::trima: return {named(trima(closes, period(30)), nm)};
    case Kind::macd: {
      auto m = macd(closes, integer("fast", 12), integer("slow", 26), integer("signal", 9));
      return {named(std::move(m.macd), nm), named(std::move(m.signal), nm + "signal"),
              named(std::move(m.hist), nm + "hist")};
    }
    case Kind::willr: return {named(willr(series, period(14)), nm)};
    case Kind::bop: return {named(bop(series, period(1)), nm)};
    case Kind::trange: return {named(true_range_atr(series, 1).trange, nm)};
    case Kind::atr: return {named(true_range_atr(series, period(14)).atr, nm)};
    case Kind::natr: return {named(true_range_atr(series, period(14)).natr, nm)};
    case Kind::avgprice: return {named(price_transforms(series).avgprice, nm)};
    case Kind::medprice: return {named(price_transforms(series).medprice, nm)};
    case Kind::typprice: return {named(price_transforms(series).typprice, nm)};
    case Kind::wclprice: return {named(price_transforms(series).wclprice, nm)};
    case Kind::bbands: {
      auto b = bbands(closes, period(20), spec.param("k", 2.0));
      if (nm == "bbands")
        return {named(std::move(b.upper), "upperband"), named(std::move(b.middle), "middleband"),
                named(std::move(b.lower), "lowerband")};
      return {named(std::move(b.upper), nm + "_upper"), named(std::move(b.middle), nm + "_middle"),
              named(std::move(b.lower), nm + "_lower")};
    }
    case Kind::rsi: return {named(rsi(closes, period(14)), nm)};
    case Kind::mom: return {named(mom(closes, period(10)), nm)};
    case Kind::roc: return {named(roc(closes, period(10)), nm)};
  }
  throw ParameterError("unhandled indicator kind");
}

std::vector<IndicatorSpec> default_specs() {
  return {
      {"sma10", Kind::sma, {{"n", 10}}},
      {"sma30", Kind::sma, {{"n", 30}}},
      {"ema", Kind::ema, {{"n", 30}}},
      {"wma5", Kind::wma, {{"n", 5}}},
      {"dema", Kind::dema, {{"n", 30}}},
      {"tema", Kind::tema, {{"n", 30}}},
      {"trima30", Kind::trima, {{"n", 30}}},
      {"macd", Kind::macd, {{"fast", 12}, {"slow", 26}, {"signal", 9}}},
      {"bbands", Kind::bbands, {{"n", 20}, {"k", 2}}},
      {"trange", Kind::trange, {}},
      {"atr", Kind::atr, {{"n", 14}}},
      {"natr", Kind::natr, {{"n", 14}}},
      {"avgprice", Kind::avgprice, {}},
      {"medprice", Kind::medprice, {}},
      {"typprice", Kind::typprice, {}},
      {"wclprice", Kind::wclprice, {}},
      {"willr", Kind::willr, {{"n", 14}}},
      {"bop", Kind::bop, {{"n", 1}}},
      {"rsi", Kind::rsi, {{"n", 14}}},
      {"mom", Kind::mom, {{"n", 10}}},
      {"roc", Kind::roc, {{"n", 10}}},
  };
}

FeatureFrame compute_features(const CandleSeries& series, const std::vector<IndicatorSpec>& specs,
                              const std::vector<std::pair<std::string, std::vector<double>>>& extras) {
  std::set<std::string> seen{"open", "high", "low", "close"};
  auto claim = [&](const std::string& name) {
    if (!seen.insert(name).second) throw ParameterError("duplicate feature name `" + name + "`");
  };
  for (const auto& s : specs)
    if (s.name.empty()) throw ParameterError("indicator spec without a name");

  FeatureFrame frame(series.timestamps());
  frame.set_column("open", series.opens());
  frame.set_column("high", series.highs());
  frame.set_column("low", series.lows());
  frame.set_column("close", series.closes());
  for (const auto& spec : specs) {
    for (auto& col : compute(series, spec)) {
      claim(col.name);
      frame.set_column(col.name, std::move(col.values));
    }
  }
  for (const auto& [name, values] : extras) {
    claim(name);
    if (values.size() != series.size())
      throw DataError("extra column `" + name + "` is not aligned with the series");
    frame.set_column(name, values);
  }
  return frame;
}

}  // namespace recapfx::indicators
