#include "recapfx/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "recapfx/error.hpp"
#include "recapfx/random.hpp"

namespace recapfx {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  if (s == "NaN" || s == "nan" || s == "NA") return kUndefined;
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  if (is_undefined(v)) return "NaN";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

bool Candle::valid() const {
  for (double v : {open, high, low, close})
    if (!std::isfinite(v) || v <= 0.0) return false;
  return low <= std::min(open, close) && high >= std::max(open, close);
}

CandleSeries::CandleSeries(std::vector<Candle> bars, std::chrono::seconds timeframe)
    : bars_(std::move(bars)), timeframe_(timeframe) {
  for (std::size_t i = 1; i < bars_.size(); ++i) {
    if (bars_[i].timestamp <= bars_[i - 1].timestamp)
      throw DataError("timestamps not strictly increasing at bar " + std::to_string(i) + " (" +
                      format_timestamp(bars_[i].timestamp) + ")");
  }
}

#define RECAPFX_FIELD_VECTOR(fn, field)        \
  std::vector<double> CandleSeries::fn() const { \
    std::vector<double> out;                     \
    out.reserve(bars_.size());                   \
    for (const auto& b : bars_) out.push_back(b.field); \
    return out;                                  \
  }
RECAPFX_FIELD_VECTOR(opens, open)
RECAPFX_FIELD_VECTOR(highs, high)
RECAPFX_FIELD_VECTOR(lows, low)
RECAPFX_FIELD_VECTOR(closes, close)
#undef RECAPFX_FIELD_VECTOR

std::vector<Timestamp> CandleSeries::timestamps() const {
  std::vector<Timestamp> out;
  out.reserve(bars_.size());
  for (const auto& b : bars_) out.push_back(b.timestamp);
  return out;
}

CandleSeries CandleSeries::head(std::size_t n) const {
  n = std::min(n, bars_.size());
  return CandleSeries(std::vector<Candle>(bars_.begin(), bars_.begin() + static_cast<std::ptrdiff_t>(n)),
                      timeframe_);
}

LoadResult load_ohlc_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("schema error: empty file " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_commas(line);
  const std::vector<std::string_view> expected{"datetime", "open", "high", "low", "close"};
  if (header != expected)
    throw DataError("schema error: header must be `datetime,open,high,low,close`, got `" +
                    std::string(trim(line)) + "`");

  LoadResult result;
  std::vector<Candle> bars;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != 5) {
      ++result.dropped;
      continue;
    }
    Candle c;
    try {
      c.timestamp = parse_timestamp(fields[0]);
    } catch (const DataError&) {
      ++result.dropped;
      continue;
    }
    const auto o = parse_double(fields[1]), h = parse_double(fields[2]), l = parse_double(fields[3]),
               cl = parse_double(fields[4]);
    if (!o || !h || !l || !cl) {
      ++result.dropped;
      continue;
    }
    c.open = *o;
    c.high = *h;
    c.low = *l;
    c.close = *cl;
    if (!c.valid()) {
      ++result.dropped;
      continue;
    }
    if (!bars.empty() && c.timestamp <= bars.back().timestamp)
      throw DataError("ordering error: line " + std::to_string(line_no) + " timestamp " +
                      std::string(fields[0]) + " does not follow " +
                      format_timestamp(bars.back().timestamp));
    bars.push_back(c);
  }
  std::chrono::seconds timeframe = std::chrono::minutes(15);
  if (bars.size() >= 2) {
    // Smallest observed spacing; weekend gaps are larger.
    auto best = bars[1].timestamp - bars[0].timestamp;
    for (std::size_t i = 2; i < bars.size(); ++i)
      best = std::min(best, bars[i].timestamp - bars[i - 1].timestamp);
    timeframe = std::chrono::duration_cast<std::chrono::seconds>(best);
  }
  result.series = CandleSeries(std::move(bars), timeframe);
  return result;
}

void write_ohlc_csv(const CandleSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "datetime,open,high,low,close\n";
  for (const auto& b : series.bars())
    out << format_timestamp(b.timestamp) << ',' << format_double(b.open) << ','
        << format_double(b.high) << ',' << format_double(b.low) << ',' << format_double(b.close)
        << '\n';
}

SyntheticData generate_synthetic_ohlc(const SyntheticParams& p) {
  if (p.n == 0) throw ParameterError("synthetic series length must be >= 1");
  if (!(p.volatility > 0.0) || !std::isfinite(p.volatility))
    throw ParameterError("synthetic volatility must be > 0");
  if (!(p.start_price > 0.0)) throw ParameterError("synthetic start price must be > 0");
  if (p.planted.count > 0 && !(std::abs(p.planted.persistence) < 1.0))
    throw ParameterError("planted signal persistence must lie in (-1, 1)");

  Rng rng(derive_seed(p.seed, "synthetic_ohlc"));
  Rng signal_rng(derive_seed(p.seed, "planted_signal"));
  const double innovation_scale = std::sqrt(1.0 - p.planted.persistence * p.planted.persistence);

  SyntheticData data;
  std::vector<std::vector<double>> planted(p.planted.count, std::vector<double>(p.n));
  std::vector<double> state(p.planted.count);
  for (auto& s : state) s = signal_rng.normal();

  std::vector<Candle> bars;
  bars.reserve(p.n);
  double prev_close = p.start_price;
  double drive = 0.0;
  for (std::size_t t = 0; t < p.n; ++t) {
    const double ret = p.volatility * rng.normal() + drive;
    Candle c;
    c.timestamp = p.start + p.timeframe * static_cast<std::int64_t>(t);
    c.open = prev_close;
    c.close = prev_close * std::exp(ret);
    const double body_hi = std::max(c.open, c.close);
    const double body_lo = std::min(c.open, c.close);
    c.high = body_hi * std::exp(p.volatility * std::abs(rng.normal()) * 0.5);
    c.low = body_lo * std::exp(-p.volatility * std::abs(rng.normal()) * 0.5);
    bars.push_back(c);
    prev_close = c.close;

    drive = 0.0;
    for (std::size_t k = 0; k < p.planted.count; ++k) {
      planted[k][t] = state[k];
      drive += p.planted.coefficient * p.volatility * state[k];
      state[k] = p.planted.persistence * state[k] + innovation_scale * signal_rng.normal();
    }
  }
  data.series = CandleSeries(std::move(bars), p.timeframe);
  for (std::size_t k = 0; k < p.planted.count; ++k)
    data.planted.emplace_back("planted_" + std::to_string(k), std::move(planted[k]));
  return data;
}

void FeatureFrame::set_column(const std::string& name, std::vector<double> values) {
  if (values.size() != index_.size())
    throw DataError("column `" + name + "` has " + std::to_string(values.size()) +
                    " values, frame has " + std::to_string(index_.size()) + " rows");
  if (auto it = lookup_.find(name); it != lookup_.end()) {
    columns_[it->second] = std::move(values);
    return;
  }
  lookup_.emplace(name, names_.size());
  names_.push_back(name);
  columns_.push_back(std::move(values));
}

bool FeatureFrame::has_column(const std::string& name) const { return lookup_.count(name) > 0; }

const std::vector<double>& FeatureFrame::column(const std::string& name) const {
  const auto it = lookup_.find(name);
  if (it == lookup_.end()) throw DataError("no column named `" + name + "`");
  return columns_[it->second];
}

void FeatureFrame::set_label(const std::string& name) {
  if (!has_column(name)) throw DataError("label column `" + name + "` not in frame");
  label_ = name;
}

const std::vector<double>& FeatureFrame::label() const {
  if (!label_) throw DataError("frame has no label column");
  return column(*label_);
}

std::vector<std::string> FeatureFrame::feature_names() const {
  std::vector<std::string> out;
  for (const auto& n : names_)
    if (!label_ || n != *label_) out.push_back(n);
  return out;
}

FeatureFrame FeatureFrame::filter_rows(const std::vector<bool>& keep) const {
  std::vector<Timestamp> idx;
  for (std::size_t i = 0; i < index_.size(); ++i)
    if (keep[i]) idx.push_back(index_[i]);
  FeatureFrame out(std::move(idx));
  for (std::size_t c = 0; c < names_.size(); ++c) {
    std::vector<double> col;
    col.reserve(out.rows());
    for (std::size_t i = 0; i < index_.size(); ++i)
      if (keep[i]) col.push_back(columns_[c][i]);
    out.set_column(names_[c], std::move(col));
  }
  out.label_ = label_;
  return out;
}

FeatureFrame FeatureFrame::select_features(const std::vector<std::string>& names) const {
  FeatureFrame out(index_);
  for (const auto& n : names) out.set_column(n, column(n));
  if (label_) {
    out.set_column(*label_, column(*label_));
    out.label_ = label_;
  }
  return out;
}

void write_frame_csv(const FeatureFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  auto names = frame.feature_names();
  if (frame.label_name()) names.push_back(*frame.label_name());
  out << "datetime";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  std::vector<const std::vector<double>*> cols;
  for (const auto& n : names) cols.push_back(&frame.column(n));
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    out << format_timestamp(frame.index()[r]);
    for (const auto* c : cols) out << ',' << format_double((*c)[r]);
    out << '\n';
  }
}

FeatureFrame read_frame_csv(const std::filesystem::path& path, const std::optional<std::string>& label) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("schema error: empty file " + path.string());
  const auto header = split_commas(line);
  if (header.empty() || header[0] != "datetime")
    throw DataError("schema error: first column must be `datetime` in " + path.string());
  std::vector<std::string> names(header.begin() + 1, header.end());
  std::vector<Timestamp> index;
  std::vector<std::vector<double>> cols(names.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != names.size() + 1)
      throw DataError("line " + std::to_string(line_no) + " of " + path.string() + " has " +
                      std::to_string(fields.size()) + " fields");
    index.push_back(parse_timestamp(fields[0]));
    for (std::size_t c = 0; c < names.size(); ++c) {
      const auto v = parse_double(fields[c + 1]);
      if (!v) throw DataError("line " + std::to_string(line_no) + ": bad number `" +
                              std::string(fields[c + 1]) + "`");
      cols[c].push_back(*v);
    }
  }
  FeatureFrame frame(std::move(index));
  for (std::size_t c = 0; c < names.size(); ++c) frame.set_column(names[c], std::move(cols[c]));
  if (label) frame.set_label(*label);
  return frame;
}

std::vector<double> compute_highest_high(std::span<const double> highs, std::size_t horizon) {
  if (horizon == 0) throw ParameterError("horizon must be >= 1");
  const std::size_t n = highs.size();
  if (n <= horizon)
    throw DataError("insufficient data: " + std::to_string(n) + " bars for horizon " +
                    std::to_string(horizon));
  std::vector<double> out(n, kUndefined);
  // Sliding-window maximum over (t, t+horizon] with a monotone deque of indices.
  std::vector<std::size_t> dq(n);
  std::size_t head = 0, tail = 0;
  for (std::size_t j = 1; j < n; ++j) {
    while (tail > head && highs[dq[tail - 1]] <= highs[j]) --tail;
    dq[tail++] = j;
    if (j >= horizon) {
      const std::size_t t = j - horizon;
      while (dq[head] <= t) ++head;
      out[t] = highs[dq[head]];
    }
  }
  return out;
}

std::vector<double> compute_highest_high(const CandleSeries& series, std::size_t horizon) {
  const auto highs = series.highs();
  return compute_highest_high(std::span<const double>(highs), horizon);
}

CleanResult clean(const FeatureFrame& frame) {
  CleanResult result;
  result.removed["undefined_label"] = 0;
  result.removed["undefined_feature"] = 0;
  std::vector<bool> keep(frame.rows(), true);
  const auto& label = frame.label_name();
  for (std::size_t c = 0; c < frame.cols(); ++c) {
    const auto& col = frame.column(c);
    for (std::size_t r = 0; r < frame.rows(); ++r)
      if (is_undefined(col[r])) keep[r] = false;
  }
  const std::vector<double>* label_col = label ? &frame.label() : nullptr;
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    if (keep[r]) continue;
    if (label_col && is_undefined((*label_col)[r]))
      ++result.removed["undefined_label"];
    else
      ++result.removed["undefined_feature"];
  }
  result.frame = frame.filter_rows(keep);
  if (frame.rows() > 0 && result.frame.rows() == 0)
    throw DataError("cleaning removed every row (" + std::to_string(frame.rows()) + ")");
  return result;
}

bool SplitSpec::valid() const {
  return train.valid() && validation.valid() && test.valid() && train.end <= validation.start &&
         validation.end <= test.start;
}

FeatureFrame slice_by_range(const FeatureFrame& frame, const TimeRange& range) {
  std::vector<bool> keep(frame.rows());
  for (std::size_t i = 0; i < frame.rows(); ++i) keep[i] = range.contains(frame.index()[i]);
  return frame.filter_rows(keep);
}

FrameSplits split_by_dates(const FeatureFrame& frame, const SplitSpec& spec) {
  if (!spec.valid())
    throw ParameterError("split ranges must be non-empty, disjoint and ordered: train " +
                         format_range(spec.train) + ", validation " + format_range(spec.validation) +
                         ", test " + format_range(spec.test));
  if (frame.rows() == 0) throw DataError("cannot split an empty frame");
  FrameSplits s{slice_by_range(frame, spec.train), slice_by_range(frame, spec.validation),
                slice_by_range(frame, spec.test)};
  const std::pair<const FeatureFrame*, std::pair<const char*, const TimeRange*>> parts[] = {
      {&s.train, {"train", &spec.train}},
      {&s.validation, {"validation", &spec.validation}},
      {&s.test, {"test", &spec.test}}};
  for (const auto& [f, info] : parts)
    if (f->rows() == 0)
      throw DataError(std::string("split error: ") + info.first + " range " +
                      format_range(*info.second) + " contains no rows");
  return s;
}

std::string lagged_name(const std::string& base, std::size_t lag) {
  return lag == 0 ? base + "(t)" : base + "(t-" + std::to_string(lag) + ")";
}

namespace {

struct WindowSource {
  std::vector<std::string> names;
  std::vector<const std::vector<double>*> cols;
  const std::vector<double>* label = nullptr;
};

WindowSource window_source(const FeatureFrame& frame, std::size_t lookback) {
  if (lookback == 0) throw ParameterError("lookback must be >= 1");
  if (frame.rows() < lookback)
    throw DataError("insufficient data: " + std::to_string(frame.rows()) + " rows for lookback " +
                    std::to_string(lookback));
  WindowSource src;
  src.names = frame.feature_names();
  for (const auto& n : src.names) {
    const auto& col = frame.column(n);
    if (std::any_of(col.begin(), col.end(), [](double v) { return !std::isfinite(v); }))
      throw DataError("windowing requires a cleaned frame; column `" + n + "` has undefined cells");
    src.cols.push_back(&col);
  }
  src.label = &frame.label();
  for (double v : *src.label)
    if (!std::isfinite(v)) throw DataError("windowing requires a cleaned frame; label undefined");
  return src;
}

}  // namespace

SupervisedDataset to_windowed(const FeatureFrame& frame, std::size_t lookback) {
  const auto src = window_source(frame, lookback);
  const std::size_t F = src.names.size();
  SupervisedDataset ds;
  ds.rows = frame.rows() - lookback + 1;
  ds.cols = lookback * F;
  for (std::size_t j = lookback; j-- > 0;)
    for (const auto& n : src.names) ds.feature_names.push_back(lagged_name(n, j));
  ds.X.resize(ds.rows * ds.cols);
  for (std::size_t r = 0; r < ds.rows; ++r) {
    const std::size_t t = r + lookback - 1;
    double* out = ds.X.data() + r * ds.cols;
    for (std::size_t step = 0; step < lookback; ++step)
      for (std::size_t f = 0; f < F; ++f) *out++ = (*src.cols[f])[t - (lookback - 1) + step];
    ds.y.push_back((*src.label)[t]);
    ds.row_timestamps.push_back(frame.index()[t]);
  }
  return ds;
}

SequenceDataset to_sequences(const FeatureFrame& frame, std::size_t lookback) {
  const auto src = window_source(frame, lookback);
  SequenceDataset ds;
  ds.feature_names = src.names;
  ds.features = src.names.size();
  ds.lookback = lookback;
  ds.rows = frame.rows() - lookback + 1;
  ds.X.resize(ds.rows * lookback * ds.features);
  for (std::size_t r = 0; r < ds.rows; ++r) {
    const std::size_t t = r + lookback - 1;
    for (std::size_t step = 0; step < lookback; ++step)
      for (std::size_t f = 0; f < ds.features; ++f)
        ds.X[(r * lookback + step) * ds.features + f] = (*src.cols[f])[t - (lookback - 1) + step];
    ds.y.push_back((*src.label)[t]);
    ds.row_timestamps.push_back(frame.index()[t]);
  }
  return ds;
}

}  // namespace recapfx
