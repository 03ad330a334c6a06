#pragma once

// Test-side oracles, kept independent of the library code paths they check.

#include "vinecast/dvinereg.hpp"
#include "vinecast/paircopula.hpp"
#include "vinecast/stats.hpp"

#include <array>
#include <cmath>
#include <functional>

namespace oracles {

//! Central finite difference of C(u, v) in its first argument.
inline double fd_h1(const vinecast::PairCopula& cop, double u, double v,
                    double step = 1e-4)
{
  return (cop.cdf(u + step, v) - cop.cdf(u - step, v)) / (2.0 * step);
}

//! Central finite difference in the second argument.
inline double fd_h2(const vinecast::PairCopula& cop, double u, double v,
                    double step = 1e-4)
{
  return (cop.cdf(u, v + step) - cop.cdf(u, v - step)) / (2.0 * step);
}

//! Mixed second partial of the copula CDF (density oracle).
inline double fd_density(const vinecast::PairCopula& cop, double u, double v,
                         double step = 1e-4)
{
  return (cop.cdf(u + step, v + step) - cop.cdf(u + step, v - step) -
          cop.cdf(u - step, v + step) + cop.cdf(u - step, v - step)) /
         (4.0 * step * step);
}

//! Solves the 3x3 harmonic normal equations directly (Cramer's rule); an
//! independent route to the least-squares coefficients.
inline std::array<double, 3> harmonic_normal_equations(
  const std::vector<double>& y, const std::vector<double>& t)
{
  const double psi = 2.0 * std::numbers::pi / 365.25;
  double s[3][3] = { { 0, 0, 0 }, { 0, 0, 0 }, { 0, 0, 0 } };
  double r[3] = { 0, 0, 0 };
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double row[3] = { 1.0, std::cos(psi * t[i]), std::sin(psi * t[i]) };
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        s[a][b] += row[a] * row[b];
      }
      r[a] += row[a] * y[i];
    }
  }
  auto det3 = [](const double m[3][3]) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  };
  const double d = det3(s);
  std::array<double, 3> coef{};
  for (int c = 0; c < 3; ++c) {
    double mod[3][3];
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        mod[a][b] = (b == c) ? r[a] : s[a][b];
      }
    }
    coef[static_cast<std::size_t>(c)] = det3(mod) / d;
  }
  return coef;
}

//! Joint copula density of a fitted D-vine evaluated by assembling the
//! pair-copula factorization directly (marginal-free part of the joint law).
//! Arguments are copula-scale values for order slots 0..k.
inline double vine_joint_copula_density(const vinecast::DVineModel& model,
                                        const std::vector<double>& w)
{
  const std::size_t d = w.size();
  std::vector<double> fwd = w, bwd = w;
  double dens = 1.0;
  for (std::size_t level = 1; level < d; ++level) {
    std::vector<double> fwd_next(d - level), bwd_next(d - level);
    for (std::size_t i = 0; i + level < d; ++i) {
      const auto& edge = model.trees()[level - 1][i];
      const double a = bwd[i];
      const double b = fwd[i + 1];
      dens *= edge.density(a, b);
      fwd_next[i] = edge.hfunc(a, b, 1);
      bwd_next[i] = edge.hfunc(a, b, 2);
    }
    fwd = std::move(fwd_next);
    bwd = std::move(bwd_next);
  }
  return dens;
}

//! Brute-force conditional density on the data scale:
//! f(y, x...) / integral_y f(y, x...) with the joint assembled from the
//! factorization and the numerator marginals.
inline double brute_force_cond_density(const vinecast::DVineModel& model,
                                       double y,
                                       const std::vector<double>& xs,
                                       double y_lo, double y_hi)
{
  using namespace vinecast;
  auto joint = [&](double yy) {
    std::vector<double> w(1 + xs.size());
    w[0] = model.response_marginal().pit(yy);
    double marg = model.response_marginal().density(yy);
    for (std::size_t j = 0; j < xs.size(); ++j) {
      w[j + 1] = model.predictor_marginal(j).pit(xs[j]);
      marg *= model.predictor_marginal(j).density(xs[j]);
    }
    return vine_joint_copula_density(model, w) * marg;
  };
  const double denom =
    stats::integrate(joint, y_lo, y_hi, 1e-10);
  return joint(y) / denom;
}

} // namespace oracles
