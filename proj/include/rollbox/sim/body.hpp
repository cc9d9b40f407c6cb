#ifndef ROLLBOX_SIM_BODY_HPP_
#define ROLLBOX_SIM_BODY_HPP_

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <variant>

#include "rollbox/core/error.hpp"
#include "rollbox/sim/vec2.hpp"

namespace rollbox::sim {

enum class BodyKind : std::uint8_t {
  agent,
  goal_sphere_low,   // yellow
  goal_sphere_high,  // green
  cube_heavy,
  cube_light,
  wall,
  fence,
  ramp,
  danger_region,
};

inline constexpr std::array<BodyKind, 9> kAllKinds = {
    BodyKind::agent,      BodyKind::goal_sphere_low, BodyKind::goal_sphere_high,
    BodyKind::cube_heavy, BodyKind::cube_light,      BodyKind::wall,
    BodyKind::fence,      BodyKind::ramp,            BodyKind::danger_region};

inline constexpr std::string_view to_string(BodyKind k) {
  switch (k) {
    case BodyKind::agent: return "agent";
    case BodyKind::goal_sphere_low: return "goal_sphere_low";
    case BodyKind::goal_sphere_high: return "goal_sphere_high";
    case BodyKind::cube_heavy: return "cube_heavy";
    case BodyKind::cube_light: return "cube_light";
    case BodyKind::wall: return "wall";
    case BodyKind::fence: return "fence";
    case BodyKind::ramp: return "ramp";
    case BodyKind::danger_region: return "danger_region";
  }
  return "?";
}

inline std::optional<BodyKind> body_kind_from_string(std::string_view s) {
  for (BodyKind k : kAllKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

inline constexpr bool is_static_kind(BodyKind k) {
  return k == BodyKind::wall || k == BodyKind::fence || k == BodyKind::ramp ||
         k == BodyKind::danger_region;
}

struct Circle {
  double radius = 0.0;
  friend bool operator==(const Circle&, const Circle&) = default;
};

struct Box {
  Vec2 half_extents;
  friend bool operator==(const Box&, const Box&) = default;
};

using Shape = std::variant<Circle, Box>;

struct Body {
  int id = 0;
  BodyKind kind = BodyKind::agent;
  Shape shape = Circle{0.15};
  Vec2 position;
  double elevation = 0.0;
  Vec2 velocity;
  double mass = 1.0;  // infinity for static bodies
  double restitution = 0.5;
  double friction_drag = 2.0;  // 1/s
  Vec2 uphill;  // ramps only: unit axis pointing up the slope

  bool is_static() const { return is_static_kind(kind); }
  double inverse_mass() const { return is_static() ? 0.0 : 1.0 / mass; }

  friend bool operator==(const Body&, const Body&) = default;
};

// Physical defaults. None of these come from measurements; they are sized
// so that one action moves the agent a visible fraction of the table.
struct Defaults {
  static constexpr double table_half_extent = 2.0;
  static constexpr double wall_height = 1.0;
  static constexpr double fence_height = 0.3;
  static constexpr double wall_thickness = 0.1;
  static constexpr double fence_thickness = 0.1;
  static constexpr double agent_radius = 0.15;
  static constexpr double agent_mass = 1.0;
  static constexpr double goal_radius = 0.15;
  static constexpr double goal_mass = 0.5;
  static constexpr double cube_half_extent = 0.2;
  static constexpr double cube_heavy_mass = 5.0;
  static constexpr double cube_light_mass = 1.0;
  static constexpr double restitution = 0.5;
  static constexpr double drag = 2.0;
  static constexpr double force_magnitude = 6.0;
  static constexpr double dt = 1.0 / 60.0;
  static constexpr double baumgarte = 0.2;
  static constexpr double ramp_epsilon = 0.01;
};

inline Body make_dynamic(BodyKind kind, Vec2 position) {
  Body b;
  b.kind = kind;
  b.position = position;
  b.restitution = Defaults::restitution;
  b.friction_drag = Defaults::drag;
  switch (kind) {
    case BodyKind::agent:
      b.shape = Circle{Defaults::agent_radius};
      b.mass = Defaults::agent_mass;
      break;
    case BodyKind::goal_sphere_low:
    case BodyKind::goal_sphere_high:
      b.shape = Circle{Defaults::goal_radius};
      b.mass = Defaults::goal_mass;
      break;
    case BodyKind::cube_heavy:
      b.shape = Box{{Defaults::cube_half_extent, Defaults::cube_half_extent}};
      b.mass = Defaults::cube_heavy_mass;
      break;
    case BodyKind::cube_light:
      b.shape = Box{{Defaults::cube_half_extent, Defaults::cube_half_extent}};
      b.mass = Defaults::cube_light_mass;
      break;
    default:
      throw Error("make_dynamic: kind is static");
  }
  return b;
}

inline Body make_static(BodyKind kind, Vec2 center, Vec2 half_extents,
                        Vec2 uphill = {}) {
  if (!is_static_kind(kind)) throw Error("make_static: kind is dynamic");
  Body b;
  b.kind = kind;
  b.shape = Box{half_extents};
  b.position = center;
  b.mass = std::numeric_limits<double>::infinity();
  b.restitution = Defaults::restitution;
  b.friction_drag = 0.0;
  b.uphill = uphill;
  return b;
}

}  // namespace rollbox::sim

#endif  // ROLLBOX_SIM_BODY_HPP_
