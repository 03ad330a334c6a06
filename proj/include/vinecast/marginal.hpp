#pragma once

#include "vinecast/common.hpp"
#include "vinecast/optim.hpp"
#include "vinecast/stats.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <vector>

namespace vinecast {

//! Univariate Gaussian-kernel density estimate with evaluable density, CDF
//! and quantile function.
//!
//! density() and cdf() are exact averages over the kernels (no grid
//! interpolation), so the CDF is strictly increasing. quantile() inverts a
//! monotone cubic Hermite interpolant of the CDF whose nodes resolve the
//! kernel bandwidth; away from the extreme tails the interpolant agrees
//! with the exact CDF to ~1e-11, and tail segments fall back to inverting
//! the exact CDF.
class KdeMarginal
{
public:
  KdeMarginal() = default;

  //! Fits the estimator with Silverman's bandwidth
  //! 1.06 * min(sd, IQR/1.349) * n^(-1/5).
  static KdeMarginal fit(const std::vector<double>& sample)
  {
    if (sample.size() < 10) {
      throw data_error("kde fit needs at least 10 observations, got " +
                       std::to_string(sample.size()));
    }
    for (double x : sample) {
      if (!std::isfinite(x)) {
        throw data_error("kde fit requires finite observations");
      }
    }
    KdeMarginal m;
    m.sample_ = sample;
    std::sort(m.sample_.begin(), m.sample_.end());

    const double sd = stats::sample_sd(m.sample_);
    if (!(sd > 0.0)) {
      throw data_error("kde fit failed: sample has zero variance");
    }
    double scale = stats::interquartile_range(m.sample_) / 1.349;
    if (!(scale > 0.0)) {
      scale = sd;
    }
    scale = std::min(scale, sd);
    m.bandwidth_ = 1.06 * scale *
                   std::pow(static_cast<double>(sample.size()), -0.2);
    m.build_grid();
    return m;
  }

  bool fitted() const { return !sample_.empty(); }
  double bandwidth() const { return bandwidth_; }
  const std::vector<double>& sample() const { return sample_; }

  double density(double x) const
  {
    check_fitted();
    const auto [first, last] = kernel_window(x);
    double sum = 0.0;
    for (std::size_t i = first; i < last; ++i) {
      sum += stats::norm_pdf((x - sample_[i]) / bandwidth_);
    }
    return sum / (static_cast<double>(sample_.size()) * bandwidth_);
  }

  double cdf(double x) const
  {
    check_fitted();
    const auto [first, last] = kernel_window(x);
    // kernels entirely below the window contribute 1 each
    double sum = static_cast<double>(first);
    for (std::size_t i = first; i < last; ++i) {
      sum += stats::norm_cdf((x - sample_[i]) / bandwidth_);
    }
    return sum / static_cast<double>(sample_.size());
  }

  //! Probability integral transform, clamped away from 0 and 1.
  double pit(double x) const
  {
    check_fitted();
    return std::min(std::max(cdf(x), uv_eps), 1.0 - uv_eps);
  }

  //! Inverse CDF; strictly increasing in alpha.
  double quantile(double alpha) const
  {
    check_fitted();
    if (!(alpha > 0.0) || !(alpha < 1.0)) {
      throw std::domain_error("quantile level must lie in (0, 1)");
    }
    if (alpha <= grid_cdf_.front()) {
      return invert_exact(alpha, grid_x_.front() - 40.0 * bandwidth_,
                          grid_x_.front());
    }
    if (alpha >= grid_cdf_.back()) {
      return invert_exact(alpha, grid_x_.back(),
                          grid_x_.back() + 40.0 * bandwidth_);
    }
    const auto it =
      std::lower_bound(grid_cdf_.begin(), grid_cdf_.end(), alpha);
    const auto seg =
      static_cast<std::size_t>(it - grid_cdf_.begin()) - 1;
    if (segment_limited_[seg]) {
      return invert_exact(alpha, grid_x_[seg], grid_x_[seg + 1]);
    }
    return invert_hermite(alpha, seg);
  }

  std::uint64_t sample_digest() const
  {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t bits) {
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffULL;
        h *= 0x100000001b3ULL;
      }
    };
    for (double x : sample_) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(x));
      std::memcpy(&bits, &x, sizeof(bits));
      mix(bits);
    }
    return h;
  }

private:
  void check_fitted() const
  {
    if (!fitted()) {
      throw std::logic_error("marginal has not been fitted");
    }
  }

  // kernels beyond 10 bandwidths contribute below double precision
  static constexpr double cutoff_ = 10.0;

  std::pair<std::size_t, std::size_t> kernel_window(double x) const
  {
    const double lo = x - cutoff_ * bandwidth_;
    const double hi = x + cutoff_ * bandwidth_;
    const auto first =
      std::lower_bound(sample_.begin(), sample_.end(), lo) - sample_.begin();
    const auto last =
      std::upper_bound(sample_.begin(), sample_.end(), hi) - sample_.begin();
    return { static_cast<std::size_t>(first), static_cast<std::size_t>(last) };
  }

  void build_grid()
  {
    const double lo = sample_.front() - cutoff_ * bandwidth_;
    const double hi = sample_.back() + cutoff_ * bandwidth_;
    // node spacing of a twelfth of the bandwidth keeps the cubic Hermite
    // interpolation error below 1e-9
    const double span = hi - lo;
    auto npts = static_cast<std::size_t>(std::ceil(12.0 * span / bandwidth_));
    npts = std::clamp<std::size_t>(npts, 256, 20000) + 1;
    grid_x_.resize(npts);
    grid_cdf_.resize(npts);
    grid_pdf_.resize(npts);
    for (std::size_t i = 0; i < npts; ++i) {
      grid_x_[i] = lo + span * static_cast<double>(i) /
                          static_cast<double>(npts - 1);
      grid_cdf_[i] = cdf(grid_x_[i]);
      grid_pdf_[i] = density(grid_x_[i]);
    }
    // Fritsch-Carlson limiting keeps each cubic segment monotone; limited
    // segments (deep tails) are inverted against the exact cdf instead
    segment_limited_.assign(npts - 1, false);
    for (std::size_t i = 0; i + 1 < npts; ++i) {
      const double secant =
        (grid_cdf_[i + 1] - grid_cdf_[i]) / (grid_x_[i + 1] - grid_x_[i]);
      if (!(secant > 0.0) || grid_pdf_[i] > 3.0 * secant ||
          grid_pdf_[i + 1] > 3.0 * secant) {
        segment_limited_[i] = true;
      }
    }
  }

  double invert_exact(double alpha, double lo, double hi) const
  {
    return optim::invert_monotone(
      [this](double x) { return cdf(x); }, alpha, lo, hi, 1e-12, 1e-14,
      [this](double x) { return density(x); });
  }

  //! Solves the cubic Hermite segment for cdf = alpha (Newton safeguarded
  //! by bisection, all on the interpolant).
  double invert_hermite(double alpha, std::size_t seg) const
  {
    const double x0 = grid_x_[seg], x1 = grid_x_[seg + 1];
    const double dx = x1 - x0;
    const double f0 = grid_cdf_[seg], f1 = grid_cdf_[seg + 1];
    const double d0 = grid_pdf_[seg] * dx, d1 = grid_pdf_[seg + 1] * dx;
    const double df = f1 - f0;

    auto value = [&](double t) {
      const double t2 = t * t, t3 = t2 * t;
      return f0 * (2.0 * t3 - 3.0 * t2 + 1.0) + d0 * (t3 - 2.0 * t2 + t) +
             f1 * (-2.0 * t3 + 3.0 * t2) + d1 * (t3 - t2);
    };
    auto slope = [&](double t) {
      const double t2 = t * t;
      return f0 * (6.0 * t2 - 6.0 * t) + d0 * (3.0 * t2 - 4.0 * t + 1.0) +
             f1 * (-6.0 * t2 + 6.0 * t) + d1 * (3.0 * t2 - 2.0 * t);
    };

    double lo = 0.0, hi = 1.0;
    double t = df > 0.0 ? (alpha - f0) / df : 0.5;
    t = std::clamp(t, 0.0, 1.0);
    for (int iter = 0; iter < 60; ++iter) {
      const double err = value(t) - alpha;
      if (std::fabs(err) <= 1e-16) {
        break;
      }
      if (err > 0.0) {
        hi = t;
      } else {
        lo = t;
      }
      const double drv = slope(t);
      double next = drv > 0.0 ? t - err / drv : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) {
        next = 0.5 * (lo + hi);
      }
      if (std::fabs(next - t) <= 1e-15) {
        t = next;
        break;
      }
      t = next;
    }
    return x0 + t * dx;
  }

  std::vector<double> sample_;
  double bandwidth_ = 0.0;
  std::vector<double> grid_x_;
  std::vector<double> grid_cdf_;
  std::vector<double> grid_pdf_;
  std::vector<bool> segment_limited_;
};

} // namespace vinecast
