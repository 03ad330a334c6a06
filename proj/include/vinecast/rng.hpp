#pragma once

#include <cstdint>

#include <boost/math/distributions/normal.hpp>

namespace vinecast {

//! Deterministic 64-bit generator (splitmix64).
//!
//! Used instead of <random> engines/distributions so that streams are
//! bit-reproducible across standard libraries. Parallel replications derive
//! independent streams with Rng::split(seed, stream), a counter-based scheme:
//! one experiment seed plus a stream index (test day, ensemble column, ...)
//! yields a well-separated generator state.
class Rng
{
public:
  explicit Rng(std::uint64_t seed)
    : state_(seed)
  {
  }

  static Rng split(std::uint64_t seed, std::uint64_t stream)
  {
    // mix the stream id through one splitmix round before combining
    Rng r(seed + 0x9e3779b97f4a7c15ULL * (stream + 1));
    r.next_u64();
    return r;
  }

  std::uint64_t next_u64()
  {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  //! Uniform draw on the open interval (0, 1).
  double uniform01()
  {
    // 53 random mantissa bits, shifted off zero
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
  }

  //! Standard normal draw by inverse-CDF (deterministic per stream).
  double normal()
  {
    static const boost::math::normal_distribution<double> unit_normal;
    return boost::math::quantile(unit_normal, uniform01());
  }

private:
  std::uint64_t state_;
};

} // namespace vinecast
