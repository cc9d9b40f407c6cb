#ifndef ROLLBOX_SIM_WORLD_HPP_
#define ROLLBOX_SIM_WORLD_HPP_

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "rollbox/core/checksum.hpp"
#include "rollbox/core/error.hpp"
#include "rollbox/sim/body.hpp"

namespace rollbox::sim {

struct CollisionEvent {
  int a = 0;
  int b = 0;
  double impulse = 0.0;
  int substep = 0;  // index of the substep within the current macro-step
  friend bool operator==(const CollisionEvent&, const CollisionEvent&) = default;
};

struct WorldState {
  std::vector<Body> bodies;
  double table_half_extent = Defaults::table_half_extent;
  double wall_height = Defaults::wall_height;
  double fence_height = Defaults::fence_height;
  std::uint64_t tick = 0;
  std::string rng_stream = "world";
  // Contacts of the most recent substep; cleared at the start of each one.
  std::vector<CollisionEvent> pending_collisions;
  // Contacts accumulated since the last begin_macro_step().
  std::vector<CollisionEvent> step_events;
  int substep_in_step = 0;

  const Body* find(int id) const {
    for (const Body& b : bodies) {
      if (b.id == id) return &b;
    }
    return nullptr;
  }
  Body* find(int id) {
    for (Body& b : bodies) {
      if (b.id == id) return &b;
    }
    return nullptr;
  }

  const Body& agent() const {
    for (const Body& b : bodies) {
      if (b.kind == BodyKind::agent) return b;
    }
    throw Error("world has no agent");
  }
  Body& agent() {
    for (Body& b : bodies) {
      if (b.kind == BodyKind::agent) return b;
    }
    throw Error("world has no agent");
  }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

inline void begin_macro_step(WorldState& w) {
  w.step_events.clear();
  w.substep_in_step = 0;
}

// Four static walls bounding the table, outside [-h, h]^2.
inline void add_walls(WorldState& w) {
  const double h = w.table_half_extent;
  const double t = Defaults::wall_thickness / 2.0;
  const double span = h + 2.0 * t;
  w.bodies.push_back(make_static(BodyKind::wall, {0.0, h + t}, {span, t}));
  w.bodies.push_back(make_static(BodyKind::wall, {0.0, -h - t}, {span, t}));
  w.bodies.push_back(make_static(BodyKind::wall, {h + t, 0.0}, {t, span}));
  w.bodies.push_back(make_static(BodyKind::wall, {-h - t, 0.0}, {t, span}));
}

inline void assign_ids(WorldState& w) {
  for (std::size_t i = 0; i < w.bodies.size(); ++i) {
    w.bodies[i].id = static_cast<int>(i);
  }
}

// Checks the structural invariants; throws on violation.
inline void validate(const WorldState& w) {
  int agents = 0;
  for (const Body& b : w.bodies) {
    if (b.kind == BodyKind::agent) ++agents;
    if (!b.is_static() && !(b.mass > 0.0)) throw Error("dynamic body with mass <= 0");
    if (b.elevation < 0.0) throw Error("negative elevation");
    if (b.restitution < 0.0 || b.restitution > 1.0) throw Error("restitution outside [0,1]");
  }
  if (agents != 1) throw Error("world must contain exactly one agent");
}

// Order-sensitive digest over the raw bits of every field. Two states with
// the same digest and operator== are bitwise identical for all practical use.
inline std::uint32_t digest(const WorldState& w) {
  std::vector<std::uint8_t> buf;
  auto put = [&buf](const auto& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), p, p + sizeof(v));
  };
  for (const Body& b : w.bodies) {
    put(b.id);
    put(static_cast<std::uint8_t>(b.kind));
    if (const auto* c = std::get_if<Circle>(&b.shape)) {
      put(c->radius);
    } else {
      const auto& bx = std::get<Box>(b.shape);
      put(bx.half_extents.x);
      put(bx.half_extents.y);
    }
    put(b.position.x);
    put(b.position.y);
    put(b.elevation);
    put(b.velocity.x);
    put(b.velocity.y);
    put(b.mass);
    put(b.restitution);
    put(b.friction_drag);
    put(b.uphill.x);
    put(b.uphill.y);
  }
  put(w.table_half_extent);
  put(w.wall_height);
  put(w.fence_height);
  put(w.tick);
  for (const CollisionEvent& e : w.step_events) {
    put(e.a);
    put(e.b);
    put(e.impulse);
    put(e.substep);
  }
  return crc32_of(std::span<const std::uint8_t>(buf), crc32_of(w.rng_stream));
}

}  // namespace rollbox::sim

#endif  // ROLLBOX_SIM_WORLD_HPP_
