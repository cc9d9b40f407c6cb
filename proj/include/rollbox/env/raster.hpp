#ifndef ROLLBOX_ENV_RASTER_HPP_
#define ROLLBOX_ENV_RASTER_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rollbox/sim/world.hpp"

namespace rollbox::env {

inline constexpr int kObsSize = 84;
inline constexpr int kObsChannels = 3;
inline constexpr int kObsBytes = kObsSize * kObsSize * kObsChannels;

struct Rgb {
  std::uint8_t r, g, b;
  friend bool operator==(Rgb, Rgb) = default;
};

// Shared with the browser client; keep in sync with docs/protocol.md.
struct Palette {
  static constexpr Rgb background{225, 210, 175};  // beige table
  static constexpr Rgb agent{220, 40, 40};
  static constexpr Rgb cube_heavy{40, 70, 200};
  static constexpr Rgb cube_light{150, 60, 190};
  static constexpr Rgb goal_low{240, 220, 40};   // yellow
  static constexpr Rgb goal_high{40, 180, 70};   // green
  static constexpr Rgb ramp{128, 128, 128};
  static constexpr Rgb danger{250, 140, 30};
  static constexpr Rgb fence{120, 80, 40};

  static Rgb of(sim::BodyKind k) {
    switch (k) {
      case sim::BodyKind::agent: return agent;
      case sim::BodyKind::goal_sphere_low: return goal_low;
      case sim::BodyKind::goal_sphere_high: return goal_high;
      case sim::BodyKind::cube_heavy: return cube_heavy;
      case sim::BodyKind::cube_light: return cube_light;
      case sim::BodyKind::ramp: return ramp;
      case sim::BodyKind::danger_region: return danger;
      case sim::BodyKind::fence: return fence;
      case sim::BodyKind::wall: return background;
    }
    return background;
  }
};

// Painter's layer, lowest first; walls lie outside the table and are not drawn.
inline int draw_layer(sim::BodyKind k) {
  switch (k) {
    case sim::BodyKind::danger_region: return 0;
    case sim::BodyKind::ramp: return 1;
    case sim::BodyKind::fence: return 2;
    case sim::BodyKind::cube_heavy:
    case sim::BodyKind::cube_light: return 3;
    case sim::BodyKind::goal_sphere_low:
    case sim::BodyKind::goal_sphere_high: return 4;
    case sim::BodyKind::agent: return 5;
    case sim::BodyKind::wall: return -1;
  }
  return -1;
}

struct Observation {
  std::vector<std::uint8_t> pixels;  // row-major 84x84 RGB, row 0 = north edge
  std::vector<double> aux_state;     // diagnostics only
  friend bool operator==(const Observation&, const Observation&) = default;
};

// Orthographic top-down projection of the table. A pixel takes a body's
// colour when the pixel centre lies inside the body's footprint.
inline std::vector<std::uint8_t> rasterize_pixels(const sim::WorldState& w) {
  std::vector<std::uint8_t> px(kObsBytes);
  for (int k = 0; k < kObsSize * kObsSize; ++k) {
    px[3 * k] = Palette::background.r;
    px[3 * k + 1] = Palette::background.g;
    px[3 * k + 2] = Palette::background.b;
  }
  std::vector<const sim::Body*> order;
  for (const auto& b : w.bodies) {
    if (draw_layer(b.kind) >= 0) order.push_back(&b);
  }
  std::stable_sort(order.begin(), order.end(), [](const sim::Body* a, const sim::Body* b) {
    return draw_layer(a->kind) < draw_layer(b->kind);
  });
  const double h = w.table_half_extent;
  const double scale = kObsSize / (2.0 * h);  // pixels per metre
  for (const sim::Body* b : order) {
    double ex, ey;
    const auto* circle = std::get_if<sim::Circle>(&b->shape);
    if (circle) {
      ex = ey = circle->radius;
    } else {
      const auto half = std::get<sim::Box>(b->shape).half_extents;
      ex = half.x;
      ey = half.y;
    }
    // Column c covers x in [-h + c/scale, -h + (c+1)/scale]; row r measures from the north edge.
    const int c0 = std::max(0, static_cast<int>(std::floor((b->position.x - ex + h) * scale)));
    const int c1 = std::min(kObsSize - 1, static_cast<int>(std::floor((b->position.x + ex + h) * scale)));
    const int r0 = std::max(0, static_cast<int>(std::floor((h - b->position.y - ey) * scale)));
    const int r1 = std::min(kObsSize - 1, static_cast<int>(std::floor((h - b->position.y + ey) * scale)));
    const Rgb col = Palette::of(b->kind);
    for (int r = r0; r <= r1; ++r) {
      const double y = h - (r + 0.5) / scale;
      for (int c = c0; c <= c1; ++c) {
        const double x = -h + (c + 0.5) / scale;
        const double dx = x - b->position.x;
        const double dy = y - b->position.y;
        const bool inside = circle ? dx * dx + dy * dy <= ex * ex : std::abs(dx) <= ex && std::abs(dy) <= ey;
        if (!inside) continue;
        std::uint8_t* p = &px[3 * (r * kObsSize + c)];
        p[0] = col.r;
        p[1] = col.g;
        p[2] = col.b;
      }
    }
  }
  return px;
}

inline Observation rasterize(const sim::WorldState& w, bool with_aux = false) {
  Observation o;
  o.pixels = rasterize_pixels(w);
  if (with_aux) {
    for (const auto& b : w.bodies) {
      if (b.is_static()) continue;
      o.aux_state.insert(o.aux_state.end(), {b.position.x, b.position.y, b.velocity.x, b.velocity.y, b.elevation});
    }
  }
  return o;
}

}  // namespace rollbox::env

#endif  // ROLLBOX_ENV_RASTER_HPP_
