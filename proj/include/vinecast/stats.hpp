#pragma once

#include "vinecast/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace vinecast::stats {

inline double norm_pdf(double x)
{
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double norm_cdf(double x)
{
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double norm_quantile(double p)
{
  static const boost::math::normal_distribution<double> unit_normal;
  if (!(p > 0.0) || !(p < 1.0)) {
    throw std::domain_error("normal quantile needs p in (0, 1)");
  }
  return boost::math::quantile(unit_normal, p);
}

inline double t_pdf(double x, double df)
{
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::pdf(dist, x);
}

inline double t_cdf(double x, double df)
{
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::cdf(dist, x);
}

inline double t_quantile(double p, double df)
{
  if (!(p > 0.0) || !(p < 1.0)) {
    throw std::domain_error("t quantile needs p in (0, 1)");
  }
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::quantile(dist, p);
}

inline double chi2_quantile(double p, double df)
{
  boost::math::chi_squared_distribution<double> dist(df);
  return boost::math::quantile(dist, p);
}

inline double chi2_pdf(double x, double df)
{
  boost::math::chi_squared_distribution<double> dist(df);
  return boost::math::pdf(dist, x);
}

namespace detail {

// Gauss-Legendre abscissas (positive half) and weights for 6/12/20 nodes.
inline const double gl_x6[3] = { 0.2386191860831969, 0.6612093864662645,
                                 0.9324695142031521 };
inline const double gl_w6[3] = { 0.4679139345726910, 0.3607615730481386,
                                 0.1713244923791704 };
inline const double gl_x12[6] = { 0.1252334085114689, 0.3678314989981802,
                                  0.5873179542866175, 0.7699026741943047,
                                  0.9041172563704749, 0.9815606342467192 };
inline const double gl_w12[6] = { 0.2491470458134028, 0.2334925365383548,
                                  0.2031674267230659, 0.1600783285433462,
                                  0.1069393259953184, 0.0471753363865118 };
inline const double gl_x20[10] = { 0.0765265211334973, 0.2277858511416451,
                                   0.3737060887154195, 0.5108670019508271,
                                   0.6360536807265150, 0.7463319064601508,
                                   0.8391169718222188, 0.9122344282513259,
                                   0.9639719272779138, 0.9931285991850949 };
inline const double gl_w20[10] = { 0.1527533871307258, 0.1491729864726037,
                                   0.1420961093183820, 0.1316886384491766,
                                   0.1181945319615184, 0.1019301198172404,
                                   0.0832767415767048, 0.0626720483341091,
                                   0.0406014298003869, 0.0176140071391521 };

//! Genz's BVND: P(X > dh, Y > dk) for standard bivariate normal with
//! correlation r. Double-precision accurate (~1e-15).
inline double bvn_upper(double dh, double dk, double r)
{
  const double two_pi = 2.0 * std::numbers::pi;
  const double* gx;
  const double* gw;
  int lg;
  if (std::fabs(r) < 0.3) {
    gx = gl_x6;
    gw = gl_w6;
    lg = 3;
  } else if (std::fabs(r) < 0.75) {
    gx = gl_x12;
    gw = gl_w12;
    lg = 6;
  } else {
    gx = gl_x20;
    gw = gl_w20;
    lg = 10;
  }

  double h = dh, k = dk, hk = h * k, bvn = 0.0;
  if (std::fabs(r) < 0.925) {
    if (std::fabs(r) > 0.0) {
      const double hs = (h * h + k * k) / 2.0;
      const double asr = std::asin(r);
      for (int i = 0; i < lg; ++i) {
        for (int is = -1; is <= 1; is += 2) {
          const double sn = std::sin(asr * (is * gx[i] + 1.0) / 2.0);
          bvn += gw[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
      }
      bvn *= asr / (2.0 * two_pi);
    }
    bvn += norm_cdf(-h) * norm_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (std::fabs(r) < 1.0) {
      const double as = (1.0 - r) * (1.0 + r);
      double a = std::sqrt(as);
      const double bs = (h - k) * (h - k);
      const double c = (4.0 - hk) / 8.0;
      const double d = (12.0 - hk) / 16.0;
      double asr = -(bs / as + hk) / 2.0;
      if (asr > -100.0) {
        bvn = a * std::exp(asr) *
              (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 +
               c * d * as * as / 5.0);
      }
      if (-hk < 100.0) {
        const double b = std::sqrt(bs);
        bvn -= std::exp(-hk / 2.0) * std::sqrt(two_pi) * norm_cdf(-b / a) * b *
               (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
      }
      a /= 2.0;
      for (int i = 0; i < lg; ++i) {
        for (int is = -1; is <= 1; is += 2) {
          double xs = a * (is * gx[i] + 1.0);
          xs *= xs;
          const double rs = std::sqrt(1.0 - xs);
          asr = -(bs / xs + hk) / 2.0;
          if (asr > -100.0) {
            bvn += a * gw[i] * std::exp(asr) *
                   (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                    (1.0 + c * xs * (1.0 + d * xs)));
          }
        }
      }
      bvn = -bvn / two_pi;
    }
    if (r > 0.0) {
      bvn += norm_cdf(-std::max(h, k));
    } else {
      bvn = -bvn;
      if (k > h) {
        bvn += norm_cdf(k) - norm_cdf(h);
      }
    }
  }
  return std::min(std::max(bvn, 0.0), 1.0);
}

} // namespace detail

//! Standard bivariate normal CDF P(X <= x, Y <= y) with correlation rho.
inline double bvn_cdf(double x, double y, double rho)
{
  if (!(rho > -1.0) || !(rho < 1.0)) {
    if (rho == 1.0) {
      return norm_cdf(std::min(x, y));
    }
    if (rho == -1.0) {
      return std::max(0.0, norm_cdf(x) + norm_cdf(y) - 1.0);
    }
    throw std::domain_error("correlation outside [-1, 1]");
  }
  return detail::bvn_upper(-x, -y, rho);
}

//! First Debye function D1(x) = (1/x) * int_0^x t/(exp(t)-1) dt, x != 0.
inline double debye1(double x)
{
  const double ax = std::fabs(x);
  if (ax < 1e-8) {
    return 1.0 - x / 4.0;
  }
  // composite Simpson on the smooth integrand (value 1 at t = 0)
  auto integrand = [](double t) {
    if (std::fabs(t) < 1e-8) {
      return 1.0 - t / 2.0;
    }
    return t / std::expm1(t);
  };
  const int n = 400; // even
  const double step = x / n;
  double sum = integrand(0.0) + integrand(x);
  for (int i = 1; i < n; ++i) {
    sum += integrand(i * step) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return sum * step / (3.0 * x);
}

namespace detail {

inline double simpson_rec(const std::function<double(double)>& f, double a,
                          double b, double fa, double fm, double fb,
                          double whole, double tol, int depth)
{
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

} // namespace detail

//! Adaptive Simpson quadrature of f on [a, b] to absolute tolerance tol.
inline double integrate(const std::function<double(double)>& f, double a,
                        double b, double tol = 1e-10, int max_depth = 40)
{
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

inline double mean(const std::vector<double>& xs)
{
  double s = 0.0;
  for (double x : xs) {
    s += x;
  }
  return s / static_cast<double>(xs.size());
}

inline double sample_sd(const std::vector<double>& xs)
{
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) {
    ss += (x - m) * (x - m);
  }
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

//! Empirical quantile with linear interpolation between order statistics.
inline double empirical_quantile(std::vector<double> xs, double p)
{
  std::sort(xs.begin(), xs.end());
  const double pos = p * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

inline double interquartile_range(const std::vector<double>& xs)
{
  return empirical_quantile(xs, 0.75) - empirical_quantile(xs, 0.25);
}

//! Kolmogorov-Smirnov distance between a sample and the uniform law on [0,1].
inline double ks_uniform_distance(std::vector<double> us)
{
  std::sort(us.begin(), us.end());
  const auto n = static_cast<double>(us.size());
  double dist = 0.0;
  for (std::size_t i = 0; i < us.size(); ++i) {
    const double ecdf_hi = static_cast<double>(i + 1) / n;
    const double ecdf_lo = static_cast<double>(i) / n;
    dist = std::max(dist, std::fabs(ecdf_hi - us[i]));
    dist = std::max(dist, std::fabs(us[i] - ecdf_lo));
  }
  return dist;
}

} // namespace vinecast::stats
