#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "recapfx/time.hpp"

namespace recapfx {

/// In-band marker for cells that cannot be computed (indicator warmup,
/// label tail). Never a silent zero.
inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();
inline bool is_undefined(double v) { return std::isnan(v); }

struct Candle {
  Timestamp timestamp;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;

  /// Finite, positive, and high/low envelope the open and close.
  bool valid() const;
};

/// Time-ordered bars with strictly increasing timestamps.
class CandleSeries {
 public:
  CandleSeries() = default;
  /// Throws DataError when timestamps are not strictly increasing.
  explicit CandleSeries(std::vector<Candle> bars,
                        std::chrono::seconds timeframe = std::chrono::minutes(15));

  std::size_t size() const { return bars_.size(); }
  bool empty() const { return bars_.empty(); }
  const Candle& operator[](std::size_t i) const { return bars_[i]; }
  std::span<const Candle> bars() const { return bars_; }
  std::chrono::seconds timeframe() const { return timeframe_; }

  std::vector<double> opens() const;
  std::vector<double> highs() const;
  std::vector<double> lows() const;
  std::vector<double> closes() const;
  std::vector<Timestamp> timestamps() const;

  /// First `n` bars.
  CandleSeries head(std::size_t n) const;

 private:
  std::vector<Candle> bars_;
  std::chrono::seconds timeframe_{std::chrono::minutes(15)};
};

struct LoadResult {
  CandleSeries series;
  std::size_t dropped = 0;
};

/// Reads `datetime,open,high,low,close`. Rows with non-finite, non-positive
/// or envelope-violating prices are dropped and counted.
LoadResult load_ohlc_csv(const std::filesystem::path& path);
void write_ohlc_csv(const CandleSeries& series, const std::filesystem::path& path);

/// Optional planted signal: `count` AR(1) columns whose sum, scaled by
/// `coefficient`, drives the next bar's log return.
struct PlantedSignal {
  std::size_t count = 0;
  double coefficient = 0.0;
  double persistence = 0.9;
};

struct SyntheticParams {
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  double volatility = 5e-4;
  double start_price = 0.75;
  Timestamp start = std::chrono::sys_days{std::chrono::year{2014} / 6 / 1};
  std::chrono::seconds timeframe = std::chrono::minutes(15);
  PlantedSignal planted;
};

struct SyntheticData {
  CandleSeries series;
  /// `planted_<i>` columns aligned with the series; empty without a hook.
  std::vector<std::pair<std::string, std::vector<double>>> planted;
};

/// Seeded geometric random walk. open(t) = close(t-1).
SyntheticData generate_synthetic_ohlc(const SyntheticParams& params);

/// Named numeric columns over a timestamp index; NaN marks undefined cells.
class FeatureFrame {
 public:
  FeatureFrame() = default;
  explicit FeatureFrame(std::vector<Timestamp> index) : index_(std::move(index)) {}

  std::size_t rows() const { return index_.size(); }
  std::size_t cols() const { return columns_.size(); }
  const std::vector<Timestamp>& index() const { return index_; }

  /// Appends or replaces. Throws DataError on length mismatch.
  void set_column(const std::string& name, std::vector<double> values);
  bool has_column(const std::string& name) const;
  const std::vector<double>& column(const std::string& name) const;
  const std::vector<std::string>& column_names() const { return names_; }
  const std::vector<double>& column(std::size_t i) const { return columns_[i]; }

  void set_label(const std::string& name);
  const std::optional<std::string>& label_name() const { return label_; }
  const std::vector<double>& label() const;
  /// Column names excluding the label, in frame order.
  std::vector<std::string> feature_names() const;

  /// Rows where keep[i] is true, in order.
  FeatureFrame filter_rows(const std::vector<bool>& keep) const;
  /// Same rows, subset of feature columns (label retained).
  FeatureFrame select_features(const std::vector<std::string>& names) const;

 private:
  std::vector<Timestamp> index_;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::map<std::string, std::size_t> lookup_;
  std::optional<std::string> label_;
};

/// CSV with a leading `datetime` column and `NaN` for undefined cells. The
/// label column, when present, is written last and named in the header.
void write_frame_csv(const FeatureFrame& frame, const std::filesystem::path& path);
FeatureFrame read_frame_csv(const std::filesystem::path& path,
                            const std::optional<std::string>& label = std::nullopt);

/// Label(t) = max(high[t+1..t+horizon]); the last `horizon` cells undefined.
std::vector<double> compute_highest_high(std::span<const double> highs, std::size_t horizon);
std::vector<double> compute_highest_high(const CandleSeries& series, std::size_t horizon);

struct CleanResult {
  FeatureFrame frame;
  /// Keys: `undefined_label`, `undefined_feature`.
  std::map<std::string, std::size_t> removed;
};

/// Drops every row that carries an undefined cell.
CleanResult clean(const FeatureFrame& frame);

struct SplitSpec {
  TimeRange train;
  TimeRange validation;
  TimeRange test;

  /// Ranges valid, disjoint and ordered train < validation < test.
  bool valid() const;
};

struct FrameSplits {
  FeatureFrame train;
  FeatureFrame validation;
  FeatureFrame test;
};

FrameSplits split_by_dates(const FeatureFrame& frame, const SplitSpec& spec);
/// Rows whose timestamp falls in `range`.
FeatureFrame slice_by_range(const FeatureFrame& frame, const TimeRange& range);

/// Flattened windows for the tree models.
struct SupervisedDataset {
  std::vector<std::string> feature_names;
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Row-major rows × cols.
  std::vector<double> X;
  std::vector<double> y;
  std::vector<Timestamp> row_timestamps;

  double at(std::size_t r, std::size_t c) const { return X[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {X.data() + r * cols, cols}; }
};

/// Windows for the recurrent models, X laid out [row][step][feature].
struct SequenceDataset {
  std::vector<std::string> feature_names;
  std::size_t rows = 0;
  std::size_t lookback = 0;
  std::size_t features = 0;
  std::vector<double> X;
  std::vector<double> y;
  std::vector<Timestamp> row_timestamps;

  double at(std::size_t r, std::size_t step, std::size_t f) const {
    return X[(r * lookback + step) * features + f];
  }
};

/// `name(t-j)` or `name(t)`.
std::string lagged_name(const std::string& base, std::size_t lag);

SupervisedDataset to_windowed(const FeatureFrame& frame, std::size_t lookback);
SequenceDataset to_sequences(const FeatureFrame& frame, std::size_t lookback);

}  // namespace recapfx
