#ifndef ROLLBOX_SIM_QUERY_HPP_
#define ROLLBOX_SIM_QUERY_HPP_

#include <algorithm>
#include <tuple>
#include <vector>

#include "rollbox/sim/geometry.hpp"
#include "rollbox/sim/world.hpp"

namespace rollbox::sim {

// Blocking static bodies are inflated by this much, so a segment that grazes
// a corner counts as blocked.
inline constexpr double kGrazeTolerance = 1e-9;

// True iff the segment a-b crosses no static blocking body (wall, fence)
// taller than the agent's current elevation.
inline bool raycast_free(const WorldState& w, Vec2 a, Vec2 b) {
  const double elevation = w.agent().elevation;
  for (const Body& s : w.bodies) {
    double height = 0.0;
    if (s.kind == BodyKind::wall) {
      height = w.wall_height;
    } else if (s.kind == BodyKind::fence) {
      height = w.fence_height;
    } else {
      continue;
    }
    if (!(height > elevation)) continue;
    Vec2 half = std::get<Box>(s.shape).half_extents;
    half.x += kGrazeTolerance;
    half.y += kGrazeTolerance;
    if (segment_hits_box(a, b, s.position, half)) return false;
  }
  return true;
}

// Contacts of the most recent macro-step that involve `id`, ordered by
// substep index, then impulse (ascending), then body ids.
inline std::vector<CollisionEvent> collisions_involving(const WorldState& w, int id) {
  if (w.find(id) == nullptr) throw Error("no such body");
  std::vector<CollisionEvent> out;
  for (const CollisionEvent& e : w.step_events) {
    if (e.a == id || e.b == id) out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(), [](const CollisionEvent& x, const CollisionEvent& y) {
    return std::tie(x.substep, x.impulse, x.a, x.b) < std::tie(y.substep, y.impulse, y.a, y.b);
  });
  return out;
}

}  // namespace rollbox::sim

#endif  // ROLLBOX_SIM_QUERY_HPP_
