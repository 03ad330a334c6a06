#pragma once

#include "vinecast/common.hpp"
#include "vinecast/optim.hpp"
#include "vinecast/rng.hpp"
#include "vinecast/stats.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace vinecast {

enum class CopulaFamily
{
  independence,
  gaussian,
  student_t,
  clayton,
  gumbel,
  frank
};

inline std::string family_name(CopulaFamily f)
{
  switch (f) {
    case CopulaFamily::independence:
      return "independence";
    case CopulaFamily::gaussian:
      return "gaussian";
    case CopulaFamily::student_t:
      return "student_t";
    case CopulaFamily::clayton:
      return "clayton";
    case CopulaFamily::gumbel:
      return "gumbel";
    case CopulaFamily::frank:
      return "frank";
  }
  return "?";
}

inline CopulaFamily family_from_name(const std::string& name)
{
  for (auto f : { CopulaFamily::independence, CopulaFamily::gaussian,
                  CopulaFamily::student_t, CopulaFamily::clayton,
                  CopulaFamily::gumbel, CopulaFamily::frank }) {
    if (family_name(f) == name) {
      return f;
    }
  }
  throw config_error("unknown copula family '" + name + "'");
}

//! Parametric bivariate copula: family, rotation and parameter vector.
//!
//! Rotations (90/180/270 degrees, asymmetric families only) are realized by
//! argument reflection; h-functions and their inverses reduce to the
//! unrotated family, which is exchangeable for every supported family.
//!
//! Conventions: hfunc(u, v, 1) = dC/du = C(v | u), hfunc(u, v, 2) = dC/dv
//! = C(u | v); hinv(cond, w, which) inverts hfunc in its conditioned slot.
class PairCopula
{
public:
  PairCopula() = default;

  PairCopula(CopulaFamily family, std::vector<double> params, int rotation = 0)
    : family_(family)
    , rotation_(rotation)
    , params_(std::move(params))
  {
    validate();
  }

  static PairCopula independence() { return PairCopula(); }

  CopulaFamily family() const { return family_; }
  int rotation() const { return rotation_; }
  const std::vector<double>& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::string describe() const
  {
    std::string s = family_name(family_);
    if (rotation_ != 0) {
      s += "@" + std::to_string(rotation_);
    }
    for (double p : params_) {
      s += " " + std::to_string(p);
    }
    return s;
  }

  double density(double u, double v) const
  {
    return std::exp(log_density(u, v));
  }

  double log_density(double u, double v) const
  {
    u = clamp_unit(u, "copula argument u");
    v = clamp_unit(v, "copula argument v");
    switch (rotation_) {
      case 0:
        return base_log_density(u, v);
      case 90:
        return base_log_density(1.0 - u, v);
      case 180:
        return base_log_density(1.0 - u, 1.0 - v);
      case 270:
        return base_log_density(u, 1.0 - v);
    }
    throw std::logic_error("bad rotation");
  }

  //! Copula distribution function C(u, v).
  double cdf(double u, double v) const
  {
    u = clamp_unit(u, "copula argument u");
    v = clamp_unit(v, "copula argument v");
    switch (rotation_) {
      case 0:
        return base_cdf(u, v);
      case 90:
        return v - base_cdf(1.0 - u, v);
      case 180:
        return u + v - 1.0 + base_cdf(1.0 - u, 1.0 - v);
      case 270:
        return u - base_cdf(u, 1.0 - v);
    }
    throw std::logic_error("bad rotation");
  }

  //! Conditional CDF; which = 1 conditions on u, which = 2 on v.
  double hfunc(double u, double v, int which) const
  {
    u = clamp_unit(u, "copula argument u");
    v = clamp_unit(v, "copula argument v");
    double h = 0.0;
    if (which == 1) {
      switch (rotation_) {
        case 0:
          h = base_h1(u, v);
          break;
        case 90:
          h = base_h1(1.0 - u, v);
          break;
        case 180:
          h = 1.0 - base_h1(1.0 - u, 1.0 - v);
          break;
        case 270:
          h = 1.0 - base_h1(u, 1.0 - v);
          break;
      }
    } else if (which == 2) {
      // exchangeable base family: condition on the first slot
      switch (rotation_) {
        case 0:
          h = base_h1(v, u);
          break;
        case 90:
          h = 1.0 - base_h1(v, 1.0 - u);
          break;
        case 180:
          h = 1.0 - base_h1(1.0 - v, 1.0 - u);
          break;
        case 270:
          h = base_h1(1.0 - v, u);
          break;
      }
    } else {
      throw std::invalid_argument("hfunc: which must be 1 or 2");
    }
    return clamp_interior(h);
  }

  //! Inverse of hfunc in the conditioned slot: hfunc(cond, result, 1) = w
  //! for which = 1, hfunc(result, cond, 2) = w for which = 2.
  double hinv(double cond, double w, int which) const
  {
    cond = clamp_unit(cond, "conditioning argument");
    w = clamp_unit(w, "h-function value");
    double r = 0.0;
    if (which == 1) {
      switch (rotation_) {
        case 0:
          r = base_hinv1(cond, w);
          break;
        case 90:
          r = base_hinv1(1.0 - cond, w);
          break;
        case 180:
          r = 1.0 - base_hinv1(1.0 - cond, 1.0 - w);
          break;
        case 270:
          r = 1.0 - base_hinv1(cond, 1.0 - w);
          break;
      }
    } else if (which == 2) {
      switch (rotation_) {
        case 0:
          r = base_hinv1(cond, w);
          break;
        case 90:
          r = 1.0 - base_hinv1(cond, 1.0 - w);
          break;
        case 180:
          r = 1.0 - base_hinv1(1.0 - cond, 1.0 - w);
          break;
        case 270:
          r = base_hinv1(1.0 - cond, w);
          break;
      }
    } else {
      throw std::invalid_argument("hinv: which must be 1 or 2");
    }
    return clamp_interior(r);
  }

  //! Population Kendall's tau implied by the parameters.
  double kendall_tau() const
  {
    double tau = 0.0;
    switch (family_) {
      case CopulaFamily::independence:
        tau = 0.0;
        break;
      case CopulaFamily::gaussian:
      case CopulaFamily::student_t:
        tau = 2.0 * std::asin(params_[0]) / std::numbers::pi;
        break;
      case CopulaFamily::clayton:
        tau = params_[0] / (params_[0] + 2.0);
        break;
      case CopulaFamily::gumbel:
        tau = 1.0 - 1.0 / params_[0];
        break;
      case CopulaFamily::frank: {
        const double theta = params_[0];
        tau = 1.0 - 4.0 / theta * (1.0 - stats::debye1(theta));
        break;
      }
    }
    if (rotation_ == 90 || rotation_ == 270) {
      tau = -tau;
    }
    return tau;
  }

private:
  void validate() const
  {
    const bool asymmetric =
      family_ == CopulaFamily::clayton || family_ == CopulaFamily::gumbel;
    if (rotation_ != 0 && rotation_ != 90 && rotation_ != 180 &&
        rotation_ != 270) {
      throw config_error("copula rotation must be 0, 90, 180 or 270");
    }
    if (rotation_ != 0 && !asymmetric) {
      throw config_error("rotation is only supported for clayton and gumbel");
    }
    auto need = [this](std::size_t k) {
      if (params_.size() != k) {
        throw config_error(family_name(family_) + " copula needs " +
                           std::to_string(k) + " parameter(s)");
      }
    };
    switch (family_) {
      case CopulaFamily::independence:
        need(0);
        break;
      case CopulaFamily::gaussian:
        need(1);
        if (!(params_[0] > -1.0 && params_[0] < 1.0)) {
          throw config_error("gaussian copula needs rho in (-1, 1)");
        }
        break;
      case CopulaFamily::student_t:
        need(2);
        if (!(params_[0] > -1.0 && params_[0] < 1.0)) {
          throw config_error("student_t copula needs rho in (-1, 1)");
        }
        if (!(params_[1] > 2.0)) {
          throw config_error("student_t copula needs nu > 2");
        }
        break;
      case CopulaFamily::clayton:
        need(1);
        if (!(params_[0] > 0.0)) {
          throw config_error("clayton copula needs theta > 0");
        }
        break;
      case CopulaFamily::gumbel:
        need(1);
        if (!(params_[0] >= 1.0)) {
          throw config_error("gumbel copula needs theta >= 1");
        }
        break;
      case CopulaFamily::frank:
        need(1);
        if (params_[0] == 0.0) {
          throw config_error("frank copula needs theta != 0");
        }
        break;
    }
  }

  // ---- unrotated family implementations (all exchangeable in (u, v)) ----

  double base_log_density(double u, double v) const
  {
    switch (family_) {
      case CopulaFamily::independence:
        return 0.0;
      case CopulaFamily::gaussian: {
        const double rho = params_[0];
        const double x = stats::norm_quantile(u);
        const double y = stats::norm_quantile(v);
        const double s2 = 1.0 - rho * rho;
        return -0.5 * std::log(s2) -
               (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * s2);
      }
      case CopulaFamily::student_t: {
        const double rho = params_[0], nu = params_[1];
        const double x = stats::t_quantile(u, nu);
        const double y = stats::t_quantile(v, nu);
        const double s2 = 1.0 - rho * rho;
        const double quad = (x * x - 2.0 * rho * x * y + y * y) / (nu * s2);
        return std::lgamma((nu + 2.0) / 2.0) + std::lgamma(nu / 2.0) -
               2.0 * std::lgamma((nu + 1.0) / 2.0) - 0.5 * std::log(s2) -
               (nu + 2.0) / 2.0 * std::log1p(quad) +
               (nu + 1.0) / 2.0 * std::log1p(x * x / nu) +
               (nu + 1.0) / 2.0 * std::log1p(y * y / nu);
      }
      case CopulaFamily::clayton: {
        const double theta = params_[0];
        return std::log1p(theta) -
               (1.0 + theta) * (std::log(u) + std::log(v)) -
               (2.0 + 1.0 / theta) * clayton_log_s(u, v, theta);
      }
      case CopulaFamily::gumbel: {
        const double theta = params_[0];
        const double tx = -std::log(u), ty = -std::log(v);
        const double log_a = gumbel_log_a(tx, ty, theta);
        const double a = std::exp(log_a);
        return -a + (theta - 1.0) * (std::log(tx) + std::log(ty)) +
               (1.0 - 2.0 * theta) * log_a + std::log(a + theta - 1.0) + tx +
               ty;
      }
      case CopulaFamily::frank: {
        const double theta = params_[0];
        if (std::fabs(theta) < 1e-6) {
          return 0.0;
        }
        const double e1 = std::expm1(-theta);
        const double abs_den = frank_abs_denominator(u, v, theta);
        return std::log(std::fabs(theta) * std::fabs(e1)) - theta * (u + v) -
               2.0 * std::log(abs_den);
      }
    }
    throw std::logic_error("bad family");
  }

  double base_cdf(double u, double v) const
  {
    switch (family_) {
      case CopulaFamily::independence:
        return u * v;
      case CopulaFamily::gaussian:
        return stats::bvn_cdf(stats::norm_quantile(u), stats::norm_quantile(v),
                              params_[0]);
      case CopulaFamily::student_t:
        return student_cdf(u, v);
      case CopulaFamily::clayton: {
        const double theta = params_[0];
        return std::exp(-clayton_log_s(u, v, theta) / theta);
      }
      case CopulaFamily::gumbel: {
        const double theta = params_[0];
        const double log_a = gumbel_log_a(-std::log(u), -std::log(v), theta);
        return std::exp(-std::exp(log_a));
      }
      case CopulaFamily::frank: {
        const double theta = params_[0];
        if (std::fabs(theta) < 1e-6) {
          return u * v;
        }
        // C = -(1/theta) log(E / e1) with E = e1 + gu gv; E/e1 > 0 always
        const double abs_den = frank_abs_denominator(u, v, theta);
        const double abs_e1 = std::fabs(std::expm1(-theta));
        return -(std::log(abs_den) - std::log(abs_e1)) / theta;
      }
    }
    throw std::logic_error("bad family");
  }

  //! dC/du for the unrotated family.
  double base_h1(double u, double v) const
  {
    switch (family_) {
      case CopulaFamily::independence:
        return v;
      case CopulaFamily::gaussian: {
        const double rho = params_[0];
        const double x = stats::norm_quantile(u);
        const double y = stats::norm_quantile(v);
        return stats::norm_cdf((y - rho * x) / std::sqrt(1.0 - rho * rho));
      }
      case CopulaFamily::student_t: {
        const double rho = params_[0], nu = params_[1];
        const double x = stats::t_quantile(u, nu);
        const double y = stats::t_quantile(v, nu);
        const double scale =
          std::sqrt((nu + x * x) * (1.0 - rho * rho) / (nu + 1.0));
        return stats::t_cdf((y - rho * x) / scale, nu + 1.0);
      }
      case CopulaFamily::clayton: {
        const double theta = params_[0];
        return std::exp(-(theta + 1.0) * std::log(u) -
                        (1.0 + 1.0 / theta) * clayton_log_s(u, v, theta));
      }
      case CopulaFamily::gumbel: {
        const double theta = params_[0];
        const double tx = -std::log(u), ty = -std::log(v);
        const double log_a = gumbel_log_a(tx, ty, theta);
        const double a = std::exp(log_a);
        return std::exp(-a + tx + (1.0 - theta) * (log_a - std::log(tx)));
      }
      case CopulaFamily::frank: {
        const double theta = params_[0];
        if (std::fabs(theta) < 1e-6) {
          return v;
        }
        // numerator and denominator share their sign; use stable magnitudes
        const double abs_num =
          std::exp(-theta * u) * std::fabs(std::expm1(-theta * v));
        return abs_num / frank_abs_denominator(u, v, theta);
      }
    }
    throw std::logic_error("bad family");
  }

  //! Inverse of base_h1 in v (closed form where available).
  double base_hinv1(double u, double w) const
  {
    switch (family_) {
      case CopulaFamily::independence:
        return w;
      case CopulaFamily::gaussian: {
        const double rho = params_[0];
        const double x = stats::norm_quantile(u);
        const double z = stats::norm_quantile(w);
        return stats::norm_cdf(z * std::sqrt(1.0 - rho * rho) + rho * x);
      }
      case CopulaFamily::student_t: {
        const double rho = params_[0], nu = params_[1];
        const double x = stats::t_quantile(u, nu);
        const double z = stats::t_quantile(w, nu + 1.0);
        const double scale =
          std::sqrt((nu + x * x) * (1.0 - rho * rho) / (nu + 1.0));
        return stats::t_cdf(z * scale + rho * x, nu);
      }
      case CopulaFamily::clayton: {
        const double theta = params_[0];
        // h1 = w  <=>  v^-theta = u^-theta (w^(-theta/(theta+1)) - 1) + 1
        const double t = std::expm1(-theta / (theta + 1.0) * std::log(w));
        if (t <= 0.0) {
          return 1.0 - uv_eps;
        }
        const double q = -theta * std::log(u) + std::log(t);
        const double log_arg = q > 36.0 ? q : std::log1p(std::exp(q));
        return std::exp(-log_arg / theta);
      }
      case CopulaFamily::gumbel:
        // no closed form; safeguarded Newton on v
        return optim::invert_monotone(
          [this, u](double v) { return base_h1(u, v); }, w, uv_eps,
          1.0 - uv_eps, 1e-12, 1e-14,
          [this, u](double v) { return std::exp(base_log_density(u, v)); });
      case CopulaFamily::frank: {
        const double theta = params_[0];
        if (std::fabs(theta) < 1e-6) {
          return w;
        }
        const double gu = std::expm1(-theta * u);
        const double den = std::exp(-theta * u) - w * gu;
        const double g = w * std::expm1(-theta) / den;
        return -std::log1p(g) / theta;
      }
    }
    throw std::logic_error("bad family");
  }

  // log(u^-theta + v^-theta - 1), computed without overflow
  static double clayton_log_s(double u, double v, double theta)
  {
    const double a = -theta * std::log(u);
    const double b = -theta * std::log(v);
    const double m = std::max(a, b);
    return m +
           std::log(std::exp(a - m) + std::exp(b - m) - std::exp(-m));
  }

  // log((tx^theta + ty^theta)^(1/theta))
  static double gumbel_log_a(double tx, double ty, double theta)
  {
    const double a = theta * std::log(tx);
    const double b = theta * std::log(ty);
    const double m = std::max(a, b);
    return (m + std::log1p(std::exp(std::min(a, b) - m))) / theta;
  }

  // |expm1(-theta) + expm1(-theta u) expm1(-theta v)| without cancellation
  static double frank_abs_denominator(double u, double v, double theta)
  {
    const double term1 = std::exp(-theta * u) * (-std::expm1(-theta * v));
    const double term2 =
      std::exp(-theta * v) * (-std::expm1(-theta * (1.0 - v)));
    return std::fabs(term1 + term2);
  }

  double student_cdf(double u, double v) const
  {
    // mixture representation: a bivariate t is a bivariate normal scaled by
    // sqrt(nu / chi^2_nu); integrate the BVN cdf against the chi^2 density
    const double rho = params_[0], nu = params_[1];
    const double x = stats::t_quantile(u, nu);
    const double y = stats::t_quantile(v, nu);
    const double s_hi = stats::chi2_quantile(1.0 - 1e-14, nu);
    auto integrand = [&](double s) {
      if (s <= 0.0) {
        return 0.0;
      }
      const double r = std::sqrt(s / nu);
      return stats::bvn_cdf(x * r, y * r, rho) * stats::chi2_pdf(s, nu);
    };
    return std::min(1.0, stats::integrate(integrand, 0.0, s_hi, 1e-12));
  }

  CopulaFamily family_ = CopulaFamily::independence;
  int rotation_ = 0;
  std::vector<double> params_;
};

namespace detail {

//! Counts pairs i < j with a[i] > a[j] (strict) by merge sort.
inline long long merge_count_inversions(std::vector<double>& a,
                                        std::vector<double>& buffer,
                                        std::size_t lo, std::size_t hi)
{
  if (hi - lo < 2) {
    return 0;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  long long inv = merge_count_inversions(a, buffer, lo, mid) +
                  merge_count_inversions(a, buffer, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (a[j] < a[i]) {
      inv += static_cast<long long>(mid - i);
      buffer[k++] = a[j++];
    } else {
      buffer[k++] = a[i++];
    }
  }
  while (i < mid) {
    buffer[k++] = a[i++];
  }
  while (j < hi) {
    buffer[k++] = a[j++];
  }
  std::copy(buffer.begin() + static_cast<long>(lo),
            buffer.begin() + static_cast<long>(hi),
            a.begin() + static_cast<long>(lo));
  return inv;
}

inline long long tied_pair_count(std::vector<double> values)
{
  std::sort(values.begin(), values.end());
  long long ties = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= values.size(); ++i) {
    if (i < values.size() && values[i] == values[i - 1]) {
      ++run;
    } else {
      ties += static_cast<long long>(run) * static_cast<long long>(run - 1) / 2;
      run = 1;
    }
  }
  return ties;
}

} // namespace detail

//! Empirical Kendall's tau (tau-a): ties count as neither concordant nor
//! discordant; the denominator is always n(n-1)/2. O(n log n) via merge-sort
//! inversion counting (Knight's algorithm).
inline double kendall_tau_empirical(std::span<const double> xs,
                                    std::span<const double> ys)
{
  const std::size_t n = xs.size();
  if (n != ys.size()) {
    throw std::invalid_argument("kendall tau: length mismatch");
  }
  if (n < 2) {
    throw data_error("kendall tau needs at least 2 pairs");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = i;
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (xs[a] != xs[b]) {
      return xs[a] < xs[b];
    }
    return ys[a] < ys[b];
  });

  // pairs tied in x, and tied in both coordinates
  long long ties_x = 0, ties_xy = 0;
  {
    std::size_t run_x = 1, run_xy = 1;
    for (std::size_t i = 1; i <= n; ++i) {
      const bool same_x = i < n && xs[idx[i]] == xs[idx[i - 1]];
      const bool same_xy = same_x && ys[idx[i]] == ys[idx[i - 1]];
      if (same_xy) {
        ++run_xy;
      } else {
        ties_xy +=
          static_cast<long long>(run_xy) * static_cast<long long>(run_xy - 1) / 2;
        run_xy = 1;
      }
      if (same_x) {
        ++run_x;
      } else {
        ties_x +=
          static_cast<long long>(run_x) * static_cast<long long>(run_x - 1) / 2;
        run_x = 1;
      }
    }
  }
  std::vector<double> y_seq(n);
  for (std::size_t i = 0; i < n; ++i) {
    y_seq[i] = ys[idx[i]];
  }
  const long long ties_y = detail::tied_pair_count(y_seq);
  std::vector<double> buffer(n);
  const long long discordant =
    detail::merge_count_inversions(y_seq, buffer, 0, n);

  const long long total =
    static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
  const long long net =
    total - ties_x - ties_y + ties_xy - 2 * discordant;
  return static_cast<double>(net) / static_cast<double>(total);
}

//! Asymptotic z-test of independence based on Kendall's tau.
//! Returns the two-sided p-value.
inline double independence_test_pvalue(double tau_hat, std::size_t n)
{
  const double nn = static_cast<double>(n);
  const double sd = std::sqrt(2.0 * (2.0 * nn + 5.0) / (9.0 * nn * (nn - 1.0)));
  const double z = tau_hat / sd;
  return 2.0 * (1.0 - stats::norm_cdf(std::fabs(z)));
}

//! Converts a Kendall's tau to family parameters (closed forms where they
//! exist, Frank numerically through the Debye relation).
inline PairCopula tau_to_param(CopulaFamily family, double tau,
                               int rotation = 0)
{
  switch (family) {
    case CopulaFamily::independence:
      return PairCopula::independence();
    case CopulaFamily::gaussian:
      if (!(std::fabs(tau) < 1.0)) {
        throw std::domain_error("gaussian: tau must lie in (-1, 1)");
      }
      return PairCopula(family,
                        { std::sin(std::numbers::pi * tau / 2.0) });
    case CopulaFamily::student_t:
      if (!(std::fabs(tau) < 1.0)) {
        throw std::domain_error("student_t: tau must lie in (-1, 1)");
      }
      return PairCopula(family,
                        { std::sin(std::numbers::pi * tau / 2.0), 5.0 });
    case CopulaFamily::clayton: {
      const bool negative = rotation == 90 || rotation == 270;
      const double t = negative ? -tau : tau;
      if (!(t > 0.0) || !(t < 1.0)) {
        throw std::domain_error(
          "clayton: tau must be positive before rotation");
      }
      return PairCopula(family, { 2.0 * t / (1.0 - t) }, rotation);
    }
    case CopulaFamily::gumbel: {
      const bool negative = rotation == 90 || rotation == 270;
      const double t = negative ? -tau : tau;
      if (!(t >= 0.0) || !(t < 1.0)) {
        throw std::domain_error(
          "gumbel: tau must be nonnegative before rotation");
      }
      return PairCopula(family, { 1.0 / (1.0 - t) }, rotation);
    }
    case CopulaFamily::frank: {
      if (tau == 0.0) {
        throw std::domain_error("frank: tau must be nonzero");
      }
      const double at = std::fabs(tau);
      if (!(at < 0.89)) {
        throw std::domain_error("frank: |tau| too large for theta <= 35");
      }
      auto tau_of = [](double theta) {
        return 1.0 - 4.0 / theta * (1.0 - stats::debye1(theta));
      };
      double theta = optim::invert_monotone(tau_of, at, 1e-4, 35.0, 1e-10,
                                            1e-12);
      if (tau < 0.0) {
        theta = -theta;
      }
      return PairCopula(family, { theta });
    }
  }
  throw std::logic_error("bad family");
}

//! Catalog of candidate families for data-driven selection.
struct FamilyCatalog
{
  std::vector<CopulaFamily> families = {
    CopulaFamily::independence, CopulaFamily::gaussian,
    CopulaFamily::student_t,    CopulaFamily::clayton,
    CopulaFamily::gumbel,       CopulaFamily::frank
  };
  bool with_rotations = true;
  //! Two-sided level of the Kendall-tau independence pretest.
  double independence_level = 0.05;
  std::vector<double> student_nu_grid = { 2.5, 3.0, 4.0, 5.0,  7.0,
                                          10.0, 15.0, 20.0, 30.0 };
};

namespace detail {

struct EdgeFit
{
  PairCopula copula;
  double loglik = 0.0;
};

inline double copula_loglik(const PairCopula& cop,
                            std::span<const double> us,
                            std::span<const double> vs)
{
  double ll = 0.0;
  for (std::size_t i = 0; i < us.size(); ++i) {
    const double l = cop.log_density(clamp_interior(us[i]),
                                     clamp_interior(vs[i]));
    if (!std::isfinite(l)) {
      return -std::numeric_limits<double>::infinity();
    }
    ll += l;
  }
  return ll;
}

inline EdgeFit fit_one_param(CopulaFamily family, int rotation,
                             std::span<const double> us,
                             std::span<const double> vs, double lo, double hi)
{
  auto nll = [&](double theta) {
    PairCopula cop(family, { theta }, rotation);
    return -copula_loglik(cop, us, vs);
  };
  const double best = optim::brent_minimize(nll, lo, hi, 1e-7, 120);
  PairCopula cop(family, { best }, rotation);
  return { cop, copula_loglik(cop, us, vs) };
}

} // namespace detail

//! Maximum-likelihood fit with AIC family selection.
//!
//! An independence pretest (Kendall-tau z-test) gates the parametric
//! families: when it fails to reject at catalog.independence_level, the
//! independence copula is returned outright. Rotations of clayton/gumbel are
//! matched to the sign of the empirical tau. Student-t degrees of freedom
//! are profiled over a fixed grid.
inline PairCopula fit_pair(std::span<const double> us,
                           std::span<const double> vs,
                           const FamilyCatalog& catalog = {})
{
  if (us.size() != vs.size()) {
    throw std::invalid_argument("fit_pair: length mismatch");
  }
  if (us.size() < 30) {
    throw data_error("fit_pair needs at least 30 observations");
  }
  if (catalog.families.empty()) {
    throw config_error("family catalog must not be empty");
  }
  const double tau_hat = kendall_tau_empirical(us, vs);

  bool has_independence = false;
  for (auto f : catalog.families) {
    has_independence |= f == CopulaFamily::independence;
  }
  if (has_independence &&
      independence_test_pvalue(tau_hat, us.size()) >=
        catalog.independence_level) {
    return PairCopula::independence();
  }

  PairCopula best = PairCopula::independence();
  double best_aic = has_independence
                      ? 0.0
                      : std::numeric_limits<double>::infinity();
  bool any_converged = has_independence;

  auto consider = [&](const detail::EdgeFit& fit) {
    if (!std::isfinite(fit.loglik)) {
      return;
    }
    const double aic = -2.0 * fit.loglik +
                       2.0 * static_cast<double>(fit.copula.parameter_count());
    if (aic < best_aic) {
      best_aic = aic;
      best = fit.copula;
    }
    any_converged = true;
  };

  const std::size_t n = us.size();
  for (auto family : catalog.families) {
    switch (family) {
      case CopulaFamily::independence:
        break;
      case CopulaFamily::gaussian: {
        // cache normal scores; the likelihood is then a cheap function of rho
        std::vector<double> xs(n), ys(n);
        for (std::size_t i = 0; i < n; ++i) {
          xs[i] = stats::norm_quantile(clamp_interior(us[i]));
          ys[i] = stats::norm_quantile(clamp_interior(vs[i]));
        }
        auto loglik = [&](double rho) {
          const double s2 = 1.0 - rho * rho;
          double sxx = 0.0, sxy = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            sxx += xs[i] * xs[i] + ys[i] * ys[i];
            sxy += xs[i] * ys[i];
          }
          return -0.5 * static_cast<double>(n) * std::log(s2) -
                 (rho * rho * sxx - 2.0 * rho * sxy) / (2.0 * s2);
        };
        const double rho = optim::brent_minimize(
          [&](double r) { return -loglik(r); }, -0.999, 0.999, 1e-8, 120);
        consider({ PairCopula(family, { rho }), loglik(rho) });
        break;
      }
      case CopulaFamily::student_t: {
        detail::EdgeFit best_t;
        best_t.loglik = -std::numeric_limits<double>::infinity();
        std::vector<double> xs(n), ys(n);
        for (double nu : catalog.student_nu_grid) {
          double rho_free = 0.0; // rho-independent part of the likelihood
          const double lconst = std::lgamma((nu + 2.0) / 2.0) +
                                std::lgamma(nu / 2.0) -
                                2.0 * std::lgamma((nu + 1.0) / 2.0);
          for (std::size_t i = 0; i < n; ++i) {
            xs[i] = stats::t_quantile(clamp_interior(us[i]), nu);
            ys[i] = stats::t_quantile(clamp_interior(vs[i]), nu);
            rho_free += lconst +
                        (nu + 1.0) / 2.0 * (std::log1p(xs[i] * xs[i] / nu) +
                                            std::log1p(ys[i] * ys[i] / nu));
          }
          auto loglik = [&](double rho) {
            const double s2 = 1.0 - rho * rho;
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              const double quad =
                (xs[i] * xs[i] - 2.0 * rho * xs[i] * ys[i] + ys[i] * ys[i]) /
                (nu * s2);
              sum += std::log1p(quad);
            }
            return rho_free - 0.5 * static_cast<double>(n) * std::log(s2) -
                   (nu + 2.0) / 2.0 * sum;
          };
          const double rho = optim::brent_minimize(
            [&](double r) { return -loglik(r); }, -0.999, 0.999, 1e-8, 120);
          const double ll = loglik(rho);
          if (ll > best_t.loglik) {
            best_t = { PairCopula(family, { rho, nu }), ll };
          }
        }
        consider(best_t);
        break;
      }
      case CopulaFamily::clayton: {
        const std::vector<int> rots =
          catalog.with_rotations
            ? (tau_hat >= 0.0 ? std::vector<int>{ 0, 180 }
                              : std::vector<int>{ 90, 270 })
            : (tau_hat >= 0.0 ? std::vector<int>{ 0 } : std::vector<int>{});
        for (int rot : rots) {
          consider(detail::fit_one_param(family, rot, us, vs, 1e-4, 28.0));
        }
        break;
      }
      case CopulaFamily::gumbel: {
        const std::vector<int> rots =
          catalog.with_rotations
            ? (tau_hat >= 0.0 ? std::vector<int>{ 0, 180 }
                              : std::vector<int>{ 90, 270 })
            : (tau_hat >= 0.0 ? std::vector<int>{ 0 } : std::vector<int>{});
        for (int rot : rots) {
          consider(detail::fit_one_param(family, rot, us, vs, 1.0, 17.0));
        }
        break;
      }
      case CopulaFamily::frank: {
        consider(detail::fit_one_param(family, 0, us, vs,
                                       tau_hat >= 0.0 ? 1e-3 : -35.0,
                                       tau_hat >= 0.0 ? 35.0 : -1e-3));
        break;
      }
    }
  }
  if (!any_converged) {
    throw numeric_error("fit_pair: no family converged");
  }
  return best;
}

//! Conditional-inversion sampling; deterministic for a fixed seed.
inline std::pair<std::vector<double>, std::vector<double>>
simulate(const PairCopula& cop, std::size_t n, std::uint64_t seed)
{
  Rng rng(seed);
  std::vector<double> us(n), vs(n);
  for (std::size_t i = 0; i < n; ++i) {
    us[i] = clamp_interior(rng.uniform01());
    vs[i] = cop.hinv(us[i], clamp_interior(rng.uniform01()), 1);
  }
  return { std::move(us), std::move(vs) };
}

} // namespace vinecast
