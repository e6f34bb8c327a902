#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "recapfx/indicators.hpp"

namespace recapfx::arima {

struct Order {
  std::size_t p = 0;
  std::size_t d = 0;
  std::size_t q = 0;

  friend bool operator==(const Order&, const Order&) = default;
};

/// Fitted ARMA(p, q) on the d-times differenced series, conditional
/// (not exact) Gaussian likelihood.
struct ArmaModel {
  Order order;
  std::vector<double> ar;  // alpha_1..alpha_p
  std::vector<double> ma;  // theta_1..theta_q
  double intercept = 0.0;
  double residual_variance = 0.0;
  std::size_t n_fit = 0;
  double log_likelihood = 0.0;
};

struct FitOptions {
  /// Leading differenced observations used only as lags. Must be >= p;
  /// 0 means exactly p. Order search sets it to p_max so every cell is scored
  /// on the same sample.
  std::size_t condition_on = 0;
  std::size_t max_iterations = 50;
  double tolerance = 1e-8;
};

/// x_t - x_{t-1}, applied d times.
std::vector<double> difference(std::span<const double> series, std::size_t d);

/// AR part and intercept by least squares; MA part by Gauss-Newton on the
/// conditional sum of squares. Throws DataError when the differenced series
/// is shorter than 10*(p+q+1), TrainingError on singular designs or when the
/// MA iteration does not converge.
ArmaModel fit_arma(std::span<const double> series, Order order, const FitOptions& options = {});

/// -2 log L + 2 (p + q + k).
double aic(const ArmaModel& model, double k = 1.0);

struct GridCell {
  Order order;
  double aic = 0.0;
  bool ok = false;
  std::string error;
};

struct OrderSearchResult {
  std::vector<GridCell> grid;
  Order selected;
};

struct SearchGrid {
  std::size_t p_max = 5;
  std::vector<std::size_t> d_set{0, 1};
  std::size_t q_max = 2;
};

/// Fits every cell and returns the minimum-AIC order; ties go to the
/// smallest p+q, then smallest p, then smallest d. Failed cells are kept in
/// the grid with ok=false. Throws TrainingError when every cell fails.
OrderSearchResult select_order(std::span<const double> series, const SearchGrid& grid,
                               double k = 1.0, unsigned threads = 1);

/// One-step-ahead forecast of series[t] for every t >= fit_end, using only
/// series[fit_start..t-1]. The model is fit on [fit_start, fit_end) and refit
/// on the expanding history every `refit_every` steps; a refit that fails keeps
/// the previous coefficients. Cells before fit_end
/// are undefined.
indicators::IndicatorColumn rolling_forecast_feature(std::span<const double> series, Order order,
                                                     std::size_t fit_start, std::size_t fit_end,
                                                     std::size_t refit_every);

}  // namespace recapfx::arima
