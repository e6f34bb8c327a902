#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "recapfx/indicators.hpp"
#include "recapfx/market_data.hpp"
#include "recapfx/recurrent.hpp"
#include "recapfx/stacking.hpp"
#include "recapfx/trees.hpp"

namespace recapfx {

/// Flat `key = value` pairs. Lines starting with `#` are comments. A JSON
/// object is accepted too; nested objects flatten to dotted keys.
class KeyValues {
 public:
  static KeyValues parse_text(const std::string& text);
  static KeyValues parse_json(const nlohmann::json& doc);
  /// Picks the format from the first non-blank character.
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct PipelineConfig {
  // data
  std::string source = "synthetic";  // synthetic | csv
  std::filesystem::path csv_path;
  SyntheticParams synthetic;
  std::size_t horizon = 5;
  std::size_t lookback = 5;
  std::vector<indicators::IndicatorSpec> indicators;

  // arima features
  bool arima_enabled = true;
  std::vector<std::string> arima_columns{"close", "high"};
  std::size_t arima_p_max = 5;
  std::vector<std::size_t> arima_d_set{0, 1};
  std::size_t arima_q_max = 2;
  std::size_t arima_fit_bars = 2000;
  std::size_t arima_refit_every = 500;

  // splits; unset ranges fail validation
  std::optional<TimeRange> train, validation, test;
  std::optional<TimeRange> recap_train, recap_heldout;
  std::optional<TimeRange> meta_train, meta_validation, meta_test;

  // learners
  trees::BoostParams newton_boost;
  trees::BoostParams hist_boost;
  trees::ForestParams forest;
  recurrent::Architecture rnn_arch;
  recurrent::TrainConfig rnn_train;
  double rnn_early_stop_fraction = 0.1;
  stacking::MetaNetConfig meta;

  std::vector<std::size_t> recap_k{20, 30};
  std::size_t stacking_k = 20;

  std::uint64_t seed = 42;
  unsigned threads = 1;
  std::filesystem::path output_dir = "out";
  bool paper_mode = false;
  bool leakage_guard = true;

  /// Every key that was read from the source, for the report echo.
  std::map<std::string, std::string> echo;
};

PipelineConfig default_config();

/// Throws ParameterError on unknown keys or unparsable values.
PipelineConfig parse_config(const KeyValues& kv);
PipelineConfig load_config(const std::filesystem::path& path);

struct Finding {
  enum class Severity { warning, error };
  Severity severity = Severity::error;
  std::string key;
  std::string message;
};
std::string to_string(Finding::Severity s);

/// Ranges, leakage conflicts and parameter bounds. Never throws.
std::vector<Finding> validate_config(const PipelineConfig& config);

/// Resolved recap windows: explicit keys, else the main train/validation
/// ranges.
TimeRange effective_recap_train(const PipelineConfig& config);
TimeRange effective_recap_heldout(const PipelineConfig& config);

/// `start/end` in RFC 3339.
TimeRange parse_range(const std::string& text);

}  // namespace recapfx
