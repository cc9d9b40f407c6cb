#ifndef ROLLBOX_SIM_PHYSICS_HPP_
#define ROLLBOX_SIM_PHYSICS_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "rollbox/core/error.hpp"
#include "rollbox/sim/geometry.hpp"
#include "rollbox/sim/world.hpp"

namespace rollbox::sim {

struct ForceCommand {
  int target = 0;
  Vec2 direction{0.0, 1.0};  // unit vector
  double magnitude = 0.0;    // N
};

namespace detail {

inline bool blocks(const Body& mover, const Body& other, double fence_height) {
  if (other.kind == BodyKind::ramp || other.kind == BodyKind::danger_region) return false;
  if (other.kind == BodyKind::fence) return mover.elevation < fence_height;
  return true;
}

inline bool collidable(const Body& a, const Body& b, double fence_height) {
  const bool sa = a.is_static();
  const bool sb = b.is_static();
  if (sa && sb) return false;
  if (sa) return blocks(b, a, fence_height);
  if (sb) return blocks(a, b, fence_height);
  return true;
}

// Elevation follows the ramp the body overlaps; a body already at fence
// height stays up while it is crossing a fence, otherwise it is grounded.
inline double ramp_elevation(const WorldState& w, const Body& body) {
  const double top = w.fence_height + Defaults::ramp_epsilon;
  bool on_ramp = false;
  double elevation = 0.0;
  bool on_fence = false;
  for (const Body& s : w.bodies) {
    if (s.kind != BodyKind::ramp && s.kind != BodyKind::fence) continue;
    if (!overlaps(body.shape, body.position, s.shape, s.position)) continue;
    if (s.kind == BodyKind::fence) {
      on_fence = true;
      continue;
    }
    const Vec2 half = std::get<Box>(s.shape).half_extents;
    const double length = 2.0 * (std::abs(s.uphill.x) * half.x + std::abs(s.uphill.y) * half.y);
    // Measured at the body's leading edge so the top is reached before the
    // body touches the fence the ramp leans against.
    double lead = 0.0;
    if (const auto* c = std::get_if<Circle>(&body.shape)) {
      lead = c->radius;
    } else {
      const Vec2 bh = std::get<Box>(body.shape).half_extents;
      lead = std::abs(s.uphill.x) * bh.x + std::abs(s.uphill.y) * bh.y;
    }
    const double along = dot(body.position - s.position, s.uphill) + length / 2.0 + lead;
    const double progress = std::clamp(along / length, 0.0, 1.0);
    on_ramp = true;
    elevation = std::max(elevation, progress * top);
  }
  if (on_ramp) return elevation;
  if (on_fence && body.elevation >= w.fence_height) return body.elevation;
  return 0.0;
}

}  // namespace detail

// Advances the world by one physics substep in place.
//
// Semi-implicit Euler followed by one pass of sequential impulses over all
// body pairs in index order, Baumgarte positional correction, the ramp
// elevation rule and a final containment projection.
inline void advance(WorldState& w, const ForceCommand& force, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("invalid timestep");
  Body* target = w.find(force.target);
  if (target == nullptr) throw Error("no such body");
  if (target->is_static()) throw Error("force target is static");
  if (std::abs(norm(force.direction) - 1.0) > 1e-9) throw Error("force direction is not a unit vector");
  if (!(force.magnitude >= 0.0)) throw Error("negative force magnitude");

  w.pending_collisions.clear();

  for (Body& b : w.bodies) {
    if (b.is_static()) continue;
    Vec2 accel{};
    if (b.id == force.target) accel = force.direction * (force.magnitude / b.mass);
    const double damping = std::max(0.0, 1.0 - b.friction_drag * dt);
    b.velocity = (b.velocity + accel * dt) * damping;
    b.position += b.velocity * dt;
  }

  const std::size_t n = w.bodies.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      Body& a = w.bodies[i];
      Body& b = w.bodies[j];
      if (!detail::collidable(a, b, w.fence_height)) continue;
      const Contact c = contact(a.shape, a.position, b.shape, b.position);
      if (!(c.depth > 0.0)) continue;
      const double inv_a = a.inverse_mass();
      const double inv_b = b.inverse_mass();
      const double inv_sum = inv_a + inv_b;
      const double vn = dot(b.velocity - a.velocity, c.normal);
      double impulse = 0.0;
      if (vn < 0.0) {
        const double e = std::min(a.restitution, b.restitution);
        impulse = -(1.0 + e) * vn / inv_sum;
        a.velocity -= c.normal * (impulse * inv_a);
        b.velocity += c.normal * (impulse * inv_b);
      }
      const double correction = Defaults::baumgarte * c.depth / inv_sum;
      a.position -= c.normal * (correction * inv_a);
      b.position += c.normal * (correction * inv_b);
      w.pending_collisions.push_back({a.id, b.id, impulse, w.substep_in_step});
    }
  }

  for (Body& b : w.bodies) {
    if (b.is_static()) continue;
    b.elevation = detail::ramp_elevation(w, b);
  }

  const double h = w.table_half_extent;
  for (Body& b : w.bodies) {
    if (b.is_static()) continue;
    if (b.position.x > h) {
      b.position.x = h;
      b.velocity.x = std::min(b.velocity.x, 0.0);
    } else if (b.position.x < -h) {
      b.position.x = -h;
      b.velocity.x = std::max(b.velocity.x, 0.0);
    }
    if (b.position.y > h) {
      b.position.y = h;
      b.velocity.y = std::min(b.velocity.y, 0.0);
    } else if (b.position.y < -h) {
      b.position.y = -h;
      b.velocity.y = std::max(b.velocity.y, 0.0);
    }
  }

  w.step_events.insert(w.step_events.end(), w.pending_collisions.begin(),
                       w.pending_collisions.end());
  ++w.substep_in_step;
  ++w.tick;
}

// Value-semantics form of advance().
inline WorldState substep(WorldState state, const ForceCommand& force, double dt) {
  advance(state, force, dt);
  return state;
}

}  // namespace rollbox::sim

#endif  // ROLLBOX_SIM_PHYSICS_HPP_
