#include "recapfx/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "recapfx/error.hpp"

namespace recapfx::evaluation {
namespace {

std::string scaled(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v * 1e3);
  return buf;
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  return cells;
}

}  // namespace

Metrics compute_metrics(std::span<const double> pred, std::span<const double> actual) {
  if (pred.empty()) throw DataError("metrics need at least one prediction");
  if (pred.size() != actual.size())
    throw DataError("metrics: " + std::to_string(pred.size()) + " predictions vs " +
                    std::to_string(actual.size()) + " actual values");
  Metrics m;
  m.n = pred.size();
  double se = 0.0, ae = 0.0, pe = 0.0;
  bool zero_actual = false;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!std::isfinite(pred[i]) || !std::isfinite(actual[i]))
      throw DataError("metrics: non-finite value at row " + std::to_string(i));
    const double r = actual[i] - pred[i];
    se += r * r;
    ae += std::abs(r);
    if (actual[i] == 0.0)
      zero_actual = true;
    else
      pe += std::abs(r / actual[i]);
  }
  const double n = static_cast<double>(m.n);
  m.mse = se / n;
  m.rmse = std::sqrt(m.mse);
  m.mae = ae / n;
  if (!zero_actual) m.mape = pe / n;
  return m;
}

std::string format_results_table(const std::vector<NamedMetrics>& rows) {
  std::string out = "input_features,rmse_e3,mae_e3,mape_e3\n";
  for (const auto& r : rows) {
    out += quoted(r.name) + ',' + scaled(r.metrics.rmse) + ',' + scaled(r.metrics.mae) + ',' +
           (r.metrics.mape ? scaled(*r.metrics.mape) : std::string("NA")) + '\n';
  }
  return out;
}

std::vector<NamedMetrics> parse_results_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "input_features,rmse_e3,mae_e3,mape_e3")
    throw DataError("results table: unexpected header");
  std::vector<NamedMetrics> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 4) throw DataError("results table: expected 4 cells in `" + line + "`");
    NamedMetrics r;
    r.name = cells[0];
    try {
      r.metrics.rmse = std::stod(cells[1]) / 1e3;
      r.metrics.mse = r.metrics.rmse * r.metrics.rmse;
      r.metrics.mae = std::stod(cells[2]) / 1e3;
      if (cells[3] != "NA") r.metrics.mape = std::stod(cells[3]) / 1e3;
    } catch (const std::logic_error&) {
      throw DataError("results table: malformed number in `" + line + "`");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

nlohmann::json to_json(const Metrics& m) {
  nlohmann::json j = {{"n", m.n}, {"mse", m.mse}, {"rmse", m.rmse}, {"mae", m.mae}};
  j["mape"] = m.mape ? nlohmann::json(*m.mape) : nlohmann::json(nullptr);
  return j;
}

}  // namespace recapfx::evaluation
