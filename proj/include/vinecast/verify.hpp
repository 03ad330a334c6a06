#pragma once

#include "vinecast/common.hpp"
#include "vinecast/date.hpp"
#include "vinecast/rng.hpp"
#include "vinecast/stats.hpp"

#include <Eigen/Dense>

#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

namespace vinecast {

//! Quantile-grid approximation of the CRPS:
//! (1/R) sum |z_r - y| - 1/(2 R^2) sum sum |z_r - z_r'|.
//! The grid must be nondecreasing.
inline double crps_from_quantiles(std::span<const double> z, double y)
{
  const std::size_t r = z.size();
  if (r < 2) {
    throw std::domain_error("crps_from_quantiles needs at least 2 quantiles");
  }
  double abs_term = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (i > 0 && z[i] < z[i - 1]) {
      throw std::domain_error("crps_from_quantiles needs a nondecreasing "
                              "quantile grid");
    }
    abs_term += std::fabs(z[i] - y);
  }
  // sorted input: sum over all ordered pairs |z_i - z_j| =
  // 2 * sum_k (2k - R + 1) z_k with 0-based k
  double spread = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    spread += (2.0 * static_cast<double>(i) - static_cast<double>(r) + 1.0) *
              z[i];
  }
  const double rr = static_cast<double>(r);
  return abs_term / rr - spread / (rr * rr);
}

//! PIT value p = F(y) of an evaluable predictive CDF.
inline double pit_value(const std::function<double(double)>& predictive_cdf,
                        double y)
{
  const double p = predictive_cdf(y);
  return std::min(std::max(p, 0.0), 1.0);
}

//! Equal-width histogram on [0, 1]; bins are right-closed except the first.
inline std::vector<long> pit_histogram(std::span<const double> pit_values,
                                       int bins)
{
  if (bins < 2) {
    throw config_error("pit histogram needs at least 2 bins");
  }
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (double p : pit_values) {
    if (!(p >= 0.0) || !(p <= 1.0)) {
      throw std::domain_error("pit values must lie in [0, 1]");
    }
    auto bin = static_cast<long>(std::ceil(p * bins) - 1);
    bin = std::max(0L, std::min(bin, static_cast<long>(bins - 1)));
    ++counts[static_cast<std::size_t>(bin)];
  }
  return counts;
}

//! Verification rank histogram of the raw ensemble: rank of the observation
//! among the members, 1 + #(members < obs), ties randomized uniformly over
//! the admissible ranks (seeded).
inline std::vector<long> rank_histogram(const Eigen::MatrixXd& members,
                                        std::span<const double> obs,
                                        std::uint64_t seed = 0)
{
  const auto n = static_cast<std::size_t>(members.rows());
  const auto m = static_cast<std::size_t>(members.cols());
  if (obs.size() != n) {
    throw std::invalid_argument("rank_histogram: row count mismatch");
  }
  std::vector<long> counts(m + 1, 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    long below = 0, ties = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double x = members(static_cast<Eigen::Index>(i),
                               static_cast<Eigen::Index>(j));
      if (x < obs[i]) {
        ++below;
      } else if (x == obs[i]) {
        ++ties;
      }
    }
    long rank = 1 + below;
    if (ties > 0) {
      rank += static_cast<long>(rng.next_u64() %
                                static_cast<std::uint64_t>(ties + 1));
    }
    ++counts[static_cast<std::size_t>(rank - 1)];
  }
  return counts;
}

//! Elementwise transform to standard-normal scores z = Phi^(-1)(u) for
//! pairwise contour diagnostics. Boundary entries are a domain error.
inline Eigen::MatrixXd normalized_scores(const Eigen::MatrixXd& u)
{
  Eigen::MatrixXd z(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
      z(i, j) = stats::norm_quantile(u(i, j));
    }
  }
  return z;
}

//! Per-day and aggregate scores for one (station, model) combination.
struct ScoreReport
{
  std::string model;
  std::string station;
  std::vector<Date> dates;
  std::vector<double> crps;
  std::vector<double> pit_values;
  std::vector<long> pit_bins;
  std::vector<long> rank_bins; // raw-ensemble ranks, empty for model reports

  double mean_crps() const
  {
    double s = 0.0;
    for (double c : crps) {
      s += c;
    }
    return s / static_cast<double>(crps.size());
  }

  void finalize(int pit_bin_count = 20)
  {
    pit_bins = pit_histogram(pit_values, pit_bin_count);
  }

  void write_csv(std::ostream& out) const
  {
    out << "date,crps,pit\n";
    out.precision(12);
    for (std::size_t i = 0; i < dates.size(); ++i) {
      out << dates[i].to_string() << ',' << crps[i] << ',' << pit_values[i]
          << '\n';
    }
  }

  nlohmann::json aggregate_json() const
  {
    return nlohmann::json{ { "model", model },
                           { "station", station },
                           { "test_days", crps.size() },
                           { "mean_crps", mean_crps() },
                           { "pit_bins", pit_bins } };
  }
};

} // namespace vinecast
