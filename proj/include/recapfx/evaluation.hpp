#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace recapfx::evaluation {

/// MAPE is a fraction; it is absent when any actual value is zero.
struct Metrics {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> mape;
  std::size_t n = 0;
};

/// Throws DataError on empty or mismatched inputs or non-finite values.
Metrics compute_metrics(std::span<const double> pred, std::span<const double> actual);

struct NamedMetrics {
  std::string name;
  Metrics metrics;
};

/// `input_features,rmse_e3,mae_e3,mape_e3`; values times 1e3, `NA` when MAPE
/// is unavailable.
std::string format_results_table(const std::vector<NamedMetrics>& rows);

/// Inverse of format_results_table; values come back in raw units.
std::vector<NamedMetrics> parse_results_table(const std::string& text);

nlohmann::json to_json(const Metrics& m);

}  // namespace recapfx::evaluation
