#include "recapfx/arima.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "recapfx/error.hpp"
#include "recapfx/parallel.hpp"

namespace recapfx::arima {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string order_text(Order o) {
  return "(" + std::to_string(o.p) + "," + std::to_string(o.d) + "," + std::to_string(o.q) + ")";
}

/// Residuals of the ARMA recursion on w starting at index m (earlier
/// residuals taken as zero). params = [c, alpha..., theta...].
void residuals(const std::vector<double>& w, std::size_t m, std::size_t p, std::size_t q,
               const VectorXd& params, std::vector<double>& e) {
  e.assign(w.size(), 0.0);
  for (std::size_t t = m; t < w.size(); ++t) {
    double pred = params[0];
    for (std::size_t i = 1; i <= p; ++i) pred += params[static_cast<Eigen::Index>(i)] * w[t - i];
    for (std::size_t j = 1; j <= q && j <= t; ++j)
      pred += params[static_cast<Eigen::Index>(p + j)] * e[t - j];
    e[t] = w[t] - pred;
  }
}

double sum_squares(const std::vector<double>& e, std::size_t m) {
  double s = 0.0;
  for (std::size_t t = m; t < e.size(); ++t) s += e[t] * e[t];
  return s;
}

double log_likelihood(double sse, std::size_t n) {
  const double sigma2 = sse / static_cast<double>(n);
  if (sigma2 <= 0.0) return std::numeric_limits<double>::infinity();
  return -0.5 * static_cast<double>(n) * (std::log(2.0 * std::numbers::pi * sigma2) + 1.0);
}

}  // namespace

std::vector<double> difference(std::span<const double> series, std::size_t d) {
  std::vector<double> w(series.begin(), series.end());
  for (std::size_t k = 0; k < d; ++k) {
    if (w.empty()) break;
    for (std::size_t t = 0; t + 1 < w.size(); ++t) w[t] = w[t + 1] - w[t];
    w.pop_back();
  }
  return w;
}

ArmaModel fit_arma(std::span<const double> series, Order order, const FitOptions& options) {
  const std::size_t p = order.p, q = order.q;
  const auto w = difference(series, order.d);
  const std::size_t needed = 10 * (p + q + 1);
  if (w.size() < needed)
    throw DataError("insufficient data for ARMA" + order_text(order) + ": " + std::to_string(w.size()) +
                    " differenced points, need " + std::to_string(needed));
  const std::size_t m = std::max(options.condition_on, p);
  if (m >= w.size()) throw DataError("conditioning window exceeds the series");
  const std::size_t n = w.size() - m;
  const auto n_params = static_cast<Eigen::Index>(1 + p + q);

  // Least squares on [1, w_{t-1}, ..., w_{t-p}].
  MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(1 + p));
  VectorXd target(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t t = m + r;
    const auto row = static_cast<Eigen::Index>(r);
    design(row, 0) = 1.0;
    for (std::size_t i = 1; i <= p; ++i) design(row, static_cast<Eigen::Index>(i)) = w[t - i];
    target(row) = w[t];
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols())
    throw TrainingError("degenerate fit for ARMA" + order_text(order) + ": singular AR design");
  const VectorXd ar_fit = qr.solve(target);

  VectorXd params = VectorXd::Zero(n_params);
  params.head(static_cast<Eigen::Index>(1 + p)) = ar_fit;
  std::vector<double> e;
  residuals(w, m, p, q, params, e);
  double sse = sum_squares(e, m);

  if (q > 0) {
    bool converged = false;
    std::vector<std::vector<double>> de(static_cast<std::size_t>(n_params), std::vector<double>(w.size()));
    for (std::size_t iter = 0; iter < options.max_iterations && !converged; ++iter) {
      // de_k[t] = d e_t / d param_k via the recursion's own derivative.
      for (auto& col : de) std::fill(col.begin(), col.end(), 0.0);
      for (std::size_t t = m; t < w.size(); ++t) {
        for (Eigen::Index k = 0; k < n_params; ++k) {
          double v;
          if (k == 0)
            v = -1.0;
          else if (static_cast<std::size_t>(k) <= p)
            v = -w[t - static_cast<std::size_t>(k)];
          else {
            const std::size_t lag = static_cast<std::size_t>(k) - p;
            v = lag <= t ? -e[t - lag] : 0.0;
          }
          for (std::size_t j = 1; j <= q && j <= t; ++j)
            v -= params[static_cast<Eigen::Index>(p + j)] * de[static_cast<std::size_t>(k)][t - j];
          de[static_cast<std::size_t>(k)][t] = v;
        }
      }
      MatrixXd jac(static_cast<Eigen::Index>(n), n_params);
      VectorXd res(static_cast<Eigen::Index>(n));
      for (std::size_t r = 0; r < n; ++r) {
        for (Eigen::Index k = 0; k < n_params; ++k)
          jac(static_cast<Eigen::Index>(r), k) = de[static_cast<std::size_t>(k)][m + r];
        res(static_cast<Eigen::Index>(r)) = e[m + r];
      }
      Eigen::ColPivHouseholderQR<MatrixXd> jqr(jac);
      if (jqr.rank() < n_params)
        throw TrainingError("degenerate fit for ARMA" + order_text(order) + ": singular Jacobian");
      const VectorXd step = jqr.solve(-res);

      // Step halving keeps the sum of squares non-increasing.
      double scale = 1.0;
      VectorXd candidate;
      std::vector<double> e_new;
      double sse_new = 0.0;
      bool accepted = false;
      for (int halving = 0; halving < 30; ++halving, scale *= 0.5) {
        candidate = params + scale * step;
        residuals(w, m, p, q, candidate, e_new);
        sse_new = sum_squares(e_new, m);
        if (std::isfinite(sse_new) && sse_new <= sse) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        converged = true;  // no descent direction left: at a stationary point
        break;
      }
      const VectorXd delta = candidate - params;
      const double decrease = sse - sse_new;
      params = candidate;
      e.swap(e_new);
      sse = sse_new;
      converged = true;
      for (Eigen::Index k = 0; k < n_params; ++k)
        if (std::abs(delta[k]) > options.tolerance * (1.0 + std::abs(params[k]))) converged = false;
      // A flat objective also counts: near-cancelling AR/MA roots drift slowly.
      if (decrease <= options.tolerance * sse) converged = true;
    }
    if (!converged)
      throw TrainingError("degenerate fit for ARMA" + order_text(order) + ": MA estimation did not converge in " +
                          std::to_string(options.max_iterations) + " iterations");
  }

  ArmaModel model;
  model.order = order;
  model.intercept = params[0];
  for (std::size_t i = 1; i <= p; ++i) model.ar.push_back(params[static_cast<Eigen::Index>(i)]);
  for (std::size_t j = 1; j <= q; ++j) model.ma.push_back(params[static_cast<Eigen::Index>(p + j)]);
  model.n_fit = n;
  model.residual_variance = sse / static_cast<double>(n);
  model.log_likelihood = log_likelihood(sse, n);
  return model;
}

double aic(const ArmaModel& model, double k) {
  return -2.0 * model.log_likelihood +
         2.0 * (static_cast<double>(model.order.p + model.order.q) + k);
}

OrderSearchResult select_order(std::span<const double> series, const SearchGrid& grid, double k,
                               unsigned threads) {
  if (grid.d_set.empty()) throw ParameterError("ARIMA search grid has no d values");
  OrderSearchResult result;
  for (std::size_t d : grid.d_set)
    for (std::size_t p = 0; p <= grid.p_max; ++p)
      for (std::size_t q = 0; q <= grid.q_max; ++q) result.grid.push_back({{p, d, q}, 0.0, false, {}});

  FitOptions options;
  options.condition_on = grid.p_max;
  parallel_for(result.grid.size(), threads, [&](std::size_t i) {
    auto& cell = result.grid[i];
    try {
      cell.aic = aic(fit_arma(series, cell.order, options), k);
      cell.ok = !std::isnan(cell.aic);
    } catch (const Error& err) {
      cell.error = err.what();
    }
  });

  const GridCell* best = nullptr;
  auto better = [](const GridCell& a, const GridCell& b) {
    if (a.aic != b.aic) return a.aic < b.aic;
    const auto sa = a.order.p + a.order.q, sb = b.order.p + b.order.q;
    if (sa != sb) return sa < sb;
    if (a.order.p != b.order.p) return a.order.p < b.order.p;
    return a.order.d < b.order.d;
  };
  for (const auto& cell : result.grid)
    if (cell.ok && (!best || better(cell, *best))) best = &cell;
  if (!best) throw TrainingError("ARIMA order search: every grid cell failed to fit");
  result.selected = best->order;
  return result;
}

indicators::IndicatorColumn rolling_forecast_feature(std::span<const double> series, Order order,
                                                     std::size_t fit_start, std::size_t fit_end,
                                                     std::size_t refit_every) {
  if (refit_every == 0) throw ParameterError("refit_every must be >= 1");
  if (fit_start >= fit_end || fit_end > series.size())
    throw ParameterError("ARIMA fit window must be a non-empty prefix region of the series");
  const std::size_t N = series.size();
  const std::size_t d = order.d;
  std::vector<double> out(N, kUndefined);

  // Binomial weights to undo differencing: y_t = w_t + sum_k coef_k y_{t-k}.
  std::vector<double> undiff(d + 1, 0.0);
  {
    double c = 1.0;
    for (std::size_t k = 1; k <= d; ++k) {
      c = c * static_cast<double>(d - k + 1) / static_cast<double>(k);
      undiff[k] = (k % 2 == 1 ? 1.0 : -1.0) * c;
    }
  }

  ArmaModel model;
  std::vector<double> w;  // differenced history from fit_start
  std::vector<double> e;  // residuals aligned with w
  for (std::size_t t = fit_end; t < N; ++t) {
    if ((t - fit_end) % refit_every == 0) {
      const auto history = series.subspan(fit_start, t - fit_start);
      if (t == fit_end) {
        model = fit_arma(history, order);
      } else {
        // A failed refit keeps the last good coefficients.
        try {
          model = fit_arma(history, order);
        } catch (const TrainingError&) {
        }
      }
      w = difference(history, d);
      e.assign(w.size(), 0.0);
      const std::size_t m = order.p;
      for (std::size_t s = m; s < w.size(); ++s) {
        double pred = model.intercept;
        for (std::size_t i = 1; i <= order.p; ++i) pred += model.ar[i - 1] * w[s - i];
        for (std::size_t j = 1; j <= order.q && j <= s; ++j) pred += model.ma[j - 1] * e[s - j];
        e[s] = w[s] - pred;
      }
    }
    // w[s] is the differenced value at series index fit_start + d + s.
    const std::size_t s = w.size();
    double w_hat = model.intercept;
    for (std::size_t i = 1; i <= order.p; ++i) w_hat += model.ar[i - 1] * w[s - i];
    for (std::size_t j = 1; j <= order.q && j <= s; ++j) w_hat += model.ma[j - 1] * e[s - j];
    double y_hat = w_hat;
    for (std::size_t k = 1; k <= d; ++k) y_hat += undiff[k] * series[t - k];
    out[t] = y_hat;

    // Observe series[t] and extend the differenced history.
    double w_t = series[t];
    for (std::size_t k = 1; k <= d; ++k) w_t -= undiff[k] * series[t - k];
    w.push_back(w_t);
    e.push_back(w_t - w_hat);
  }
  return {{}, std::move(out), fit_end};
}

}  // namespace recapfx::arima
