#pragma once

#include "vinecast/common.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace vinecast::optim {

//! Brent's golden-section/parabolic minimizer on [a, b].
inline double brent_minimize(const std::function<double(double)>& f, double a,
                             double b, double tol = 1e-9, int max_iter = 200)
{
  const double golden = 0.3819660112501051;
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;

  for (int iter = 0; iter < max_iter; ++iter) {
    const double m = 0.5 * (a + b);
    const double tol1 = tol * std::fabs(x) + 1e-12;
    const double tol2 = 2.0 * tol1;
    if (std::fabs(x - m) <= tol2 - 0.5 * (b - a)) {
      break;
    }
    bool use_golden = true;
    if (std::fabs(e) > tol1) {
      // parabolic interpolation through (x, w, v)
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) {
        p = -p;
      }
      q = std::fabs(q);
      const double e_old = e;
      e = d;
      if (std::fabs(p) < std::fabs(0.5 * q * e_old) && p > q * (a - x) &&
          p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) {
          d = (x < m) ? tol1 : -tol1;
        }
        use_golden = false;
      }
    }
    if (use_golden) {
      e = (x < m) ? b - x : a - x;
      d = golden * e;
    }
    const double u =
      (std::fabs(d) >= tol1) ? x + d : x + ((d > 0.0) ? tol1 : -tol1);
    const double fu = f(u);
    if (fu <= fx) {
      if (u < x) {
        b = x;
      } else {
        a = x;
      }
      v = w;
      fv = fw;
      w = x;
      fw = fx;
      x = u;
      fx = fu;
    } else {
      if (u < x) {
        a = u;
      } else {
        b = u;
      }
      if (fu <= fw || w == x) {
        v = w;
        fv = fw;
        w = u;
        fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
  }
  return x;
}

struct SimplexResult
{
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

//! Derivative-free Nelder-Mead simplex minimization.
//!
//! The start point is the base vertex of the initial simplex, so the
//! returned value never exceeds f(start).
inline SimplexResult nelder_mead(
  const std::function<double(const std::vector<double>&)>& f,
  const std::vector<double>& start, double step = 0.1, double ftol = 1e-10,
  int max_iter = 5000)
{
  const std::size_t n = start.size();
  std::vector<std::vector<double>> verts(n + 1, start);
  for (std::size_t j = 0; j < n; ++j) {
    verts[j + 1][j] += step * std::max(1.0, std::fabs(start[j]));
  }
  std::vector<double> fvals(n + 1);
  for (std::size_t j = 0; j <= n; ++j) {
    fvals[j] = f(verts[j]);
  }

  SimplexResult res;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    // order vertices by function value
    std::vector<std::size_t> idx(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
      idx[j] = j;
    }
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return fvals[a] < fvals[b]; });
    {
      std::vector<std::vector<double>> vs(n + 1);
      std::vector<double> fs(n + 1);
      for (std::size_t j = 0; j <= n; ++j) {
        vs[j] = verts[idx[j]];
        fs[j] = fvals[idx[j]];
      }
      verts.swap(vs);
      fvals.swap(fs);
    }
    if (std::fabs(fvals[n] - fvals[0]) <
        ftol * (std::fabs(fvals[0]) + ftol)) {
      res.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        centroid[i] += verts[j][i] / static_cast<double>(n);
      }
    }
    auto blend = [&](double coef) {
      std::vector<double> p(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = centroid[i] + coef * (centroid[i] - verts[n][i]);
      }
      return p;
    };

    auto reflected = blend(1.0);
    const double fr = f(reflected);
    if (fr < fvals[0]) {
      auto expanded = blend(2.0);
      const double fe = f(expanded);
      if (fe < fr) {
        verts[n] = std::move(expanded);
        fvals[n] = fe;
      } else {
        verts[n] = std::move(reflected);
        fvals[n] = fr;
      }
    } else if (fr < fvals[n - 1]) {
      verts[n] = std::move(reflected);
      fvals[n] = fr;
    } else {
      const bool outside = fr < fvals[n];
      auto contracted = blend(outside ? 0.5 : -0.5);
      const double fc = f(contracted);
      if (fc < (outside ? fr : fvals[n])) {
        verts[n] = std::move(contracted);
        fvals[n] = fc;
      } else {
        for (std::size_t j = 1; j <= n; ++j) {
          for (std::size_t i = 0; i < n; ++i) {
            verts[j][i] = verts[0][i] + 0.5 * (verts[j][i] - verts[0][i]);
          }
          fvals[j] = f(verts[j]);
        }
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t j = 1; j <= n; ++j) {
    if (fvals[j] < fvals[best]) {
      best = j;
    }
  }
  res.x = verts[best];
  res.value = fvals[best];
  res.iterations = iter;
  return res;
}

//! Solves F(x) = target for strictly increasing F on [lo, hi].
//!
//! Newton steps (when a derivative is supplied) safeguarded by bisection;
//! falls back to pure bisection otherwise. Converges to |F(x) - target|
//! <= ftol or an x-bracket below xtol.
inline double invert_monotone(const std::function<double(double)>& F,
                              double target, double lo, double hi,
                              double ftol = 1e-10, double xtol = 1e-13,
                              const std::function<double(double)>& dF = nullptr,
                              int max_iter = 200)
{
  double flo = F(lo) - target;
  double fhi = F(hi) - target;
  if (flo > 0.0 || fhi < 0.0) {
    throw numeric_error("invert_monotone: target not bracketed");
  }
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < max_iter; ++iter) {
    double fx = F(x) - target;
    if (std::fabs(fx) <= ftol || hi - lo <= xtol * (1.0 + std::fabs(x))) {
      return x;
    }
    if (fx > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    double next = std::numeric_limits<double>::quiet_NaN();
    if (dF) {
      const double slope = dF(x);
      if (slope > 0.0 && std::isfinite(slope)) {
        next = x - fx / slope;
      }
    }
    if (!(next > lo && next < hi)) {
      next = 0.5 * (lo + hi);
    }
    x = next;
  }
  return x;
}

} // namespace vinecast::optim
