#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hazekit/image.hpp"
#include "hazekit/rng.hpp"

namespace hazekit {

// Depth maps are kept in normalized scene units spanning (0, kDepthMax] so
// the sampled scattering range produces transmissions roughly in [0.01, 1].
inline constexpr double kDepthMax = 3.0;

inline constexpr double kDefaultTransmissionFloor = 0.05;

/// Homogeneous scattering parameters: per-channel airlight and the
/// attenuation coefficient.
struct HazeParams {
  std::array<double, 3> airlight{1.0, 1.0, 1.0};
  double beta = 1.0;
};

/// t = exp(-beta * d), elementwise over a depth map.
inline Grid transmission(const Grid& depth, double beta) {
  if (!(beta > 0.0)) {
    throw std::invalid_argument("transmission: beta must be positive, got " +
                                std::to_string(beta));
  }
  Grid t(depth.h, depth.w);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double d = depth.v[i];
    if (!(d >= 0.0) || !std::isfinite(d)) {
      throw std::invalid_argument("transmission: depth entries must be "
                                  "finite and nonnegative, got " +
                                  std::to_string(d));
    }
    t.v[i] = std::exp(-beta * d);
  }
  return t;
}

/// I = J*t + A*(1-t) per channel; a convex combination, so the result stays
/// within [min(J,A), max(J,A)].
inline Image apply_haze(const Image& J, const Grid& t,
                        const std::array<double, 3>& airlight) {
  if (J.h != t.h || J.w != t.w || J.c != 3) {
    throw std::invalid_argument(
        "apply_haze: image " + std::to_string(J.h) + "x" + std::to_string(J.w) +
        "x" + std::to_string(J.c) + " does not match transmission " +
        std::to_string(t.h) + "x" + std::to_string(t.w));
  }
  Image I(J.h, J.w, 3);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double tv = t.v[i];
    for (std::size_t ch = 0; ch < 3; ++ch) {
      I.px[i * 3 + ch] = J.px[i * 3 + ch] * tv + airlight[ch] * (1.0 - tv);
    }
  }
  return I;
}

/// Algebraic inverse of apply_haze with known t and A. Transmission is
/// floored at t_floor before dividing and the output is clamped to [0, 1].
inline Image invert_haze(const Image& I, const Grid& t,
                         const std::array<double, 3>& airlight,
                         double t_floor = kDefaultTransmissionFloor) {
  if (!(t_floor > 0.0) || t_floor > 1.0) {
    throw std::invalid_argument("invert_haze: t_floor must be in (0, 1], got " +
                                std::to_string(t_floor));
  }
  if (I.h != t.h || I.w != t.w || I.c != 3) {
    throw std::invalid_argument(
        "invert_haze: image " + std::to_string(I.h) + "x" +
        std::to_string(I.w) + "x" + std::to_string(I.c) +
        " does not match transmission " + std::to_string(t.h) + "x" +
        std::to_string(t.w));
  }
  Image J(I.h, I.w, 3);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double tv = std::max(t.v[i], t_floor);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double j = (I.px[i * 3 + ch] - airlight[ch] * (1.0 - tv)) / tv;
      J.px[i * 3 + ch] = clamp01(j);
    }
  }
  return J;
}

/// Airlight components uniform on [0.8, 1.0], beta uniform on [0.8, 1.6].
inline HazeParams sample_haze_params(RandomStream& rs) {
  HazeParams p;
  for (std::size_t ch = 0; ch < 3; ++ch) p.airlight[ch] = rs.uniform(0.8, 1.0);
  p.beta = rs.uniform(0.8, 1.6);
  return p;
}

}  // namespace hazekit
