#pragma once

#include "vinecast/common.hpp"
#include "vinecast/dataset.hpp"
#include "vinecast/optim.hpp"
#include "vinecast/stats.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include <json.hpp>

namespace vinecast {

//! Nonhomogeneous Gaussian regression parameters for the 3-group ensemble
//! model: mean a + b1*mean_perturbed + b2*ctrl + b3*hres, variance
//! c + d * ens_var with c, d >= 0.
struct EmosParams
{
  double a = 0.0;
  std::vector<double> b{ 0.0, 0.0, 0.0 };
  double c = 1.0;
  double d = 0.0;
};

struct EmosForecast
{
  double mu = 0.0;
  double sigma = 1.0;
};

constexpr double emos_sigma_floor = 1e-6;

inline EmosForecast emos_predict(const EmosParams& params,
                                 const GroupPredictors& gp)
{
  EmosForecast f;
  f.mu = params.a + params.b[0] * gp.mean_perturbed + params.b[1] * gp.ctrl +
         params.b[2] * gp.hres;
  const double var = params.c + params.d * gp.ens_var;
  f.sigma = std::max(std::sqrt(std::max(var, 0.0)), emos_sigma_floor);
  return f;
}

//! Closed-form CRPS of a Gaussian forecast.
inline double crps_gaussian(double mu, double sigma, double y)
{
  if (!(sigma > 0.0)) {
    throw std::domain_error("crps_gaussian needs sigma > 0");
  }
  const double z = (y - mu) / sigma;
  return sigma * (z * (2.0 * stats::norm_cdf(z) - 1.0) +
                  2.0 * stats::norm_pdf(z) -
                  1.0 / std::sqrt(std::numbers::pi));
}

//! One training row: grouped predictors and the verifying observation.
struct EmosTrainingRow
{
  GroupPredictors gp;
  double y = 0.0;
};

namespace detail {

inline double emos_mean_crps(const EmosParams& params,
                             std::span<const EmosTrainingRow> rows)
{
  double total = 0.0;
  for (const auto& row : rows) {
    const auto f = emos_predict(params, row.gp);
    total += crps_gaussian(f.mu, f.sigma, row.y);
  }
  return total / static_cast<double>(rows.size());
}

} // namespace detail

//! Minimum-CRPS estimation: the mean training CRPS is minimized by a
//! Nelder-Mead search over (a, b1..b3, sqrt(c), sqrt(d)), started from OLS
//! coefficients and moment-based variance parameters. The square-root
//! parameterization keeps c and d nonnegative.
inline EmosParams fit_emos(std::span<const EmosTrainingRow> rows)
{
  const std::size_t n = rows.size();
  if (n < 6) {
    throw data_error("emos fit needs at least 6 training rows");
  }

  // OLS start for the mean part
  Eigen::MatrixXd design(n, 4);
  Eigen::VectorXd rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    design(r, 0) = 1.0;
    design(r, 1) = rows[i].gp.mean_perturbed;
    design(r, 2) = rows[i].gp.ctrl;
    design(r, 3) = rows[i].gp.hres;
    rhs(r) = rows[i].y;
  }
  const Eigen::VectorXd ols = design.colPivHouseholderQr().solve(rhs);
  const double resid_var =
    (rhs - design * ols).squaredNorm() / static_cast<double>(n);

  std::vector<double> start = { ols(0),
                                ols(1),
                                ols(2),
                                ols(3),
                                std::sqrt(std::max(resid_var, 1e-8)),
                                std::sqrt(0.1) };
  auto objective = [&rows](const std::vector<double>& p) {
    EmosParams params;
    params.a = p[0];
    params.b = { p[1], p[2], p[3] };
    params.c = p[4] * p[4];
    params.d = p[5] * p[5];
    return detail::emos_mean_crps(params, rows);
  };

  auto result = optim::nelder_mead(objective, start, 0.1, 1e-8, 4000);
  // restarts from the incumbent; the simplex can stall on the
  // reparameterization kinks
  result = optim::nelder_mead(objective, result.x, 0.02, 1e-10, 4000);
  result = optim::nelder_mead(objective, result.x, 0.002, 1e-12, 4000);
  if (!std::isfinite(result.value)) {
    throw numeric_error("emos fit did not converge (objective " +
                        std::to_string(result.value) + " after " +
                        std::to_string(result.iterations) + " iterations)");
  }

  EmosParams params;
  params.a = result.x[0];
  params.b = { result.x[1], result.x[2], result.x[3] };
  params.c = result.x[4] * result.x[4];
  params.d = result.x[5] * result.x[5];
  return params;
}

inline nlohmann::json emos_to_json(const EmosParams& p,
                                   const std::string& window_kind,
                                   std::size_t window_size)
{
  return nlohmann::json{ { "a", p.a },
                         { "b", p.b },
                         { "c", p.c },
                         { "d", p.d },
                         { "window_kind", window_kind },
                         { "window_size", window_size } };
}

inline EmosParams emos_from_json(const nlohmann::json& j)
{
  EmosParams p;
  p.a = j.at("a").get<double>();
  p.b = j.at("b").get<std::vector<double>>();
  p.c = j.at("c").get<double>();
  p.d = j.at("d").get<double>();
  if (p.b.size() != 3 || p.c < 0.0 || p.d < 0.0) {
    throw data_error("invalid emos parameter file");
  }
  return p;
}

} // namespace vinecast
