#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace vinecast {

//! Invalid user-supplied configuration (bad flag value, unknown family, ...).
struct config_error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

//! Defective or insufficient input data (parse failures, short histories, ...).
struct data_error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

//! Numerical failure (optimizer or root-finder did not converge).
struct numeric_error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double x) { return std::isnan(x); }

//! Smallest distance copula arguments are allowed to approach 0 or 1.
constexpr double uv_eps = 1e-10;

//! Clamps a probability-scale argument to the open interval (0, 1).
//! Exact 0/1 (or values outside [0, 1]) are contract violations.
inline double clamp_unit(double u, const char* what = "argument")
{
  if (!(u > 0.0) || !(u < 1.0)) {
    throw std::domain_error(std::string(what) +
                            " must lie in the open interval (0, 1)");
  }
  return std::min(std::max(u, uv_eps), 1.0 - uv_eps);
}

//! Clamp without boundary checks, for values already known to be in [0, 1].
inline double clamp_interior(double u)
{
  return std::min(std::max(u, uv_eps), 1.0 - uv_eps);
}

} // namespace vinecast
