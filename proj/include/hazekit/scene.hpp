#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazekit/haze.hpp"
#include "hazekit/image.hpp"
#include "hazekit/rng.hpp"

namespace hazekit {

struct Scene {
  Image clear;
  Grid depth;
};

namespace scene_detail {

struct Obstacle {
  double row_frac;
  double width_frac;
  double aspect;
  double center_frac;
  std::array<double, 3> color;
};

inline void paint(Image& img, Grid& depth, std::size_t y, std::size_t x,
                  const std::array<double, 3>& col, double d) {
  for (std::size_t ch = 0; ch < 3; ++ch) img.at(y, x, ch) = col[ch];
  depth.at(y, x) = d;
}

}  // namespace scene_detail

/// Procedural traffic-like scene: sky above a sampled horizon, a ground plane
/// whose depth shrinks from kDepthMax at the horizon to a near plane at the
/// bottom, a perspective road band with dashed lane marks, and 2-6 box
/// obstacles standing on the ground at the depth of their base row.
/// Deterministic in the seed; the draw sequence does not depend on the size.
inline Scene generate_scene(std::uint64_t seed, std::size_t h, std::size_t w) {
  if (h < 16 || w < 16) {
    throw std::invalid_argument("generate_scene: size must be at least 16x16, "
                                "got " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  RandomStream rs(seed);

  const double horizon_frac = rs.uniform(0.30, 0.50);
  const std::array<double, 3> sky_top{rs.uniform(0.45, 0.65),
                                      rs.uniform(0.60, 0.80),
                                      rs.uniform(0.85, 1.00)};
  const std::array<double, 3> sky_low{rs.uniform(0.70, 0.85),
                                      rs.uniform(0.75, 0.90),
                                      rs.uniform(0.90, 1.00)};
  const std::array<double, 3> ground{rs.uniform(0.20, 0.45),
                                     rs.uniform(0.35, 0.60),
                                     rs.uniform(0.12, 0.35)};
  const double road_gray = rs.uniform(0.22, 0.40);
  const double road_center = rs.uniform(0.35, 0.65);
  const double road_halfwidth = rs.uniform(0.16, 0.30);
  const double near_depth = rs.uniform(0.20, 0.35);
  const double lane_bright = rs.uniform(0.75, 0.95);
  const double stripe_phase = rs.uniform(0.0, 6.283185307179586);

  const std::size_t n_obs = 2 + rs.index(5);
  std::vector<scene_detail::Obstacle> obs(n_obs);
  for (auto& o : obs) {
    o.row_frac = rs.uniform(0.15, 0.95);
    o.width_frac = rs.uniform(0.08, 0.22);
    o.aspect = rs.uniform(0.6, 1.5);
    o.center_frac = rs.uniform(0.05, 0.95);
    o.color = {rs.uniform(0.05, 0.95), rs.uniform(0.05, 0.95),
               rs.uniform(0.05, 0.95)};
  }

  const std::size_t horizon =
      std::min(h - 2, static_cast<std::size_t>(std::lround(
                          horizon_frac * static_cast<double>(h))));
  Image img(h, w, 3);
  Grid depth(h, w, kDepthMax);

  auto ground_depth = [&](std::size_t r) {
    const double fr = static_cast<double>(r - horizon + 1) /
                      static_cast<double>(h - horizon);
    return kDepthMax + (near_depth - kDepthMax) * fr;
  };

  for (std::size_t r = 0; r < h; ++r) {
    if (r < horizon) {
      const double a = static_cast<double>(r) /
                       static_cast<double>(horizon > 1 ? horizon - 1 : 1);
      for (std::size_t c2 = 0; c2 < w; ++c2) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
          img.at(r, c2, ch) =
              clamp01(sky_top[ch] + (sky_low[ch] - sky_top[ch]) * a);
        }
        depth.at(r, c2) = kDepthMax;
      }
      continue;
    }
    const double fr = static_cast<double>(r - horizon + 1) /
                      static_cast<double>(h - horizon);
    const double d = ground_depth(r);
    const double cc = road_center * static_cast<double>(w);
    const double hw =
        1.0 + (road_halfwidth * static_cast<double>(w) - 1.0) * fr;
    const double row_shade =
        1.0 - 0.18 * fr + 0.05 * std::sin(0.9 * double(r) + stripe_phase);
    for (std::size_t c2 = 0; c2 < w; ++c2) {
      const double col_shade =
          1.0 + 0.04 * std::sin(1.3 * double(c2) + 2.0 * stripe_phase);
      const double off = std::abs(static_cast<double>(c2) + 0.5 - cc);
      std::array<double, 3> col;
      if (off <= hw) {
        const double g = road_gray * (1.0 - 0.10 * fr) * col_shade;
        col = {g, g, g};
        if (off <= std::max(0.6, static_cast<double>(w) / 64.0) &&
            (r % 6) < 3) {
          col = {lane_bright, lane_bright, lane_bright * 0.9};
        }
      } else {
        for (std::size_t ch = 0; ch < 3; ++ch) {
          col[ch] = ground[ch] * row_shade * col_shade;
        }
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        img.at(r, c2, ch) = clamp01(col[ch]);
      }
      depth.at(r, c2) = d;
    }
  }

  // Far obstacles first so nearer ones overwrite them.
  std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) {
    return a.row_frac < b.row_frac;
  });
  for (const auto& o : obs) {
    const std::size_t base =
        horizon + 1 +
        static_cast<std::size_t>(std::lround(
            o.row_frac * static_cast<double>(h - 2 - horizon)));
    const double d = ground_depth(std::min(base, h - 1));
    const double scale = near_depth / d;  // perspective shrink with distance
    const std::size_t bw = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::lround(
               o.width_frac * static_cast<double>(w) * scale * 2.2)));
    const std::size_t bh = std::max<std::size_t>(
        2, static_cast<std::size_t>(
               std::lround(static_cast<double>(bw) * o.aspect)));
    const std::size_t cx = static_cast<std::size_t>(
        std::lround(o.center_frac * static_cast<double>(w - 1)));
    const std::size_t r1 = std::min(base, h - 1);
    const std::size_t r0 = r1 >= bh ? r1 - bh + 1 : 0;
    const std::size_t c0 = cx >= bw / 2 ? cx - bw / 2 : 0;
    const std::size_t c1 = std::min(w - 1, cx + (bw - bw / 2) - 1);
    for (std::size_t r = r0; r <= r1; ++r) {
      for (std::size_t c2 = c0; c2 <= c1; ++c2) {
        scene_detail::paint(img, depth, r, c2, o.color, d);
      }
    }
  }

  return Scene{std::move(img), std::move(depth)};
}

}  // namespace hazekit
