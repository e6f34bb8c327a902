#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "recapfx/market_data.hpp"

namespace recapfx::indicators {

/// Values aligned to the series index; the first `warmup_len` cells are
/// undefined (NaN), the rest finite.
struct IndicatorColumn {
  std::string name;
  std::vector<double> values;
  std::size_t warmup_len = 0;
};

enum class Kind {
  sma, ema, wma, dema, tema, trima, macd, willr, bop, trange, atr, natr,
  avgprice, medprice, typprice, wclprice, bbands, rsi, mom, roc
};

std::string to_string(Kind kind);
/// Throws ParameterError for unknown kinds.
Kind parse_kind(const std::string& text);

struct IndicatorSpec {
  std::string name;
  Kind kind = Kind::sma;
  /// Recognised keys: n, fast, slow, signal, k. Missing keys use defaults.
  std::map<std::string, double> params;

  double param(const std::string& key, double fallback) const;
};

// Moving averages over an arbitrary column. Columns may carry their own
// leading undefined cells; output warmup accounts for them.
IndicatorColumn sma(std::span<const double> values, std::size_t n);
IndicatorColumn ema(std::span<const double> values, std::size_t n);
IndicatorColumn wma(std::span<const double> values, std::size_t n);
IndicatorColumn dema(std::span<const double> values, std::size_t n);
IndicatorColumn tema(std::span<const double> values, std::size_t n);
/// SMA(SMA(x, ceil((n+1)/2)), floor(n/2)+1).
IndicatorColumn trima(std::span<const double> values, std::size_t n);

struct MacdColumns {
  IndicatorColumn macd, signal, hist;
};
/// EMA(fast) - EMA(slow), its EMA(signal) and their difference.
MacdColumns macd(std::span<const double> closes, std::size_t fast, std::size_t slow,
                 std::size_t signal = 9);

/// Williams %R over trailing n bars; -50 when the window is flat.
IndicatorColumn willr(const CandleSeries& series, std::size_t n);
/// SMA of (close-open)/(high-low), raw value 0 for zero-range bars.
IndicatorColumn bop(const CandleSeries& series, std::size_t n);

struct RangeColumns {
  IndicatorColumn trange, atr, natr;
};
/// True range, its trailing arithmetic mean over n, and 100*ATR/close.
RangeColumns true_range_atr(const CandleSeries& series, std::size_t n);

struct PriceTransforms {
  IndicatorColumn avgprice, medprice, typprice, wclprice;
};
PriceTransforms price_transforms(const CandleSeries& series);

struct BandColumns {
  IndicatorColumn upper, middle, lower;
};
/// SMA(n) +/- k population standard deviations.
BandColumns bbands(std::span<const double> closes, std::size_t n, double k);

/// Wilder RSI: averages seeded by the mean of the first n changes.
IndicatorColumn rsi(std::span<const double> closes, std::size_t n);
IndicatorColumn mom(std::span<const double> closes, std::size_t n);
/// (close/close[t-n] - 1) * 100.
IndicatorColumn roc(std::span<const double> closes, std::size_t n);

/// Every column a spec produces, named after the spec (multi-output kinds
/// add suffixes; see README).
std::vector<IndicatorColumn> compute(const CandleSeries& series, const IndicatorSpec& spec);

/// The default feature set: price transforms, moving averages, MACD family,
/// bands, volatility and momentum indicators.
std::vector<IndicatorSpec> default_specs();

/// Raw OHLC columns, then each spec's columns, then the extras. Throws
/// ParameterError on duplicate names, DataError on misaligned extras.
FeatureFrame compute_features(const CandleSeries& series, const std::vector<IndicatorSpec>& specs,
                              const std::vector<std::pair<std::string, std::vector<double>>>& extras = {});

}  // namespace recapfx::indicators
