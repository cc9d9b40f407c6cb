#ifndef ROLLBOX_SIM_GEOMETRY_HPP_
#define ROLLBOX_SIM_GEOMETRY_HPP_

#include <algorithm>
#include <cmath>
#include <optional>

#include "rollbox/sim/body.hpp"

namespace rollbox::sim {

// Contact between two shapes: `normal` points from the first body towards
// the second, `depth` > 0 means interpenetration.
struct Contact {
  Vec2 normal;
  double depth = 0.0;
};

inline Contact circle_circle(Vec2 pa, double ra, Vec2 pb, double rb) {
  const Vec2 d = pb - pa;
  const double dist = norm(d);
  Contact c;
  c.normal = dist > 0.0 ? d * (1.0 / dist) : Vec2{1.0, 0.0};
  c.depth = ra + rb - dist;
  return c;
}

inline Contact circle_box(Vec2 pc, double r, Vec2 pb, Vec2 half) {
  const Vec2 rel = pc - pb;
  const Vec2 q{std::clamp(rel.x, -half.x, half.x), std::clamp(rel.y, -half.y, half.y)};
  Contact c;
  if (q.x != rel.x || q.y != rel.y) {
    const Vec2 d = q - rel;  // circle center -> closest point
    const double dist = norm(d);
    c.normal = d * (1.0 / dist);
    c.depth = r - dist;
    return c;
  }
  // Center inside the box: push out through the nearest face.
  const double dx = half.x - std::abs(rel.x);
  const double dy = half.y - std::abs(rel.y);
  if (dx <= dy) {
    c.normal = {rel.x >= 0.0 ? -1.0 : 1.0, 0.0};
    c.depth = r + dx;
  } else {
    c.normal = {0.0, rel.y >= 0.0 ? -1.0 : 1.0};
    c.depth = r + dy;
  }
  return c;
}

inline Contact box_box(Vec2 pa, Vec2 ha, Vec2 pb, Vec2 hb) {
  const Vec2 d = pb - pa;
  const double ox = ha.x + hb.x - std::abs(d.x);
  const double oy = ha.y + hb.y - std::abs(d.y);
  Contact c;
  if (ox < oy) {
    c.normal = {d.x >= 0.0 ? 1.0 : -1.0, 0.0};
    c.depth = ox;
  } else {
    c.normal = {0.0, d.y >= 0.0 ? 1.0 : -1.0};
    c.depth = oy;
  }
  return c;
}

inline Contact contact(const Shape& sa, Vec2 pa, const Shape& sb, Vec2 pb) {
  const auto* ca = std::get_if<Circle>(&sa);
  const auto* cb = std::get_if<Circle>(&sb);
  if (ca && cb) return circle_circle(pa, ca->radius, pb, cb->radius);
  if (ca) return circle_box(pa, ca->radius, pb, std::get<Box>(sb).half_extents);
  if (cb) {
    Contact c = circle_box(pb, cb->radius, pa, std::get<Box>(sa).half_extents);
    c.normal = -c.normal;
    return c;
  }
  return box_box(pa, std::get<Box>(sa).half_extents, pb, std::get<Box>(sb).half_extents);
}

// Signed surface separation (negative when overlapping).
inline double separation(const Shape& sa, Vec2 pa, const Shape& sb, Vec2 pb) {
  const auto* ca = std::get_if<Circle>(&sa);
  const auto* cb = std::get_if<Circle>(&sb);
  if (!ca && !cb) {
    // Exact AABB distance (contact depth is only the min-axis overlap).
    const Vec2 ha = std::get<Box>(sa).half_extents;
    const Vec2 hb = std::get<Box>(sb).half_extents;
    const double gx = std::abs(pb.x - pa.x) - ha.x - hb.x;
    const double gy = std::abs(pb.y - pa.y) - ha.y - hb.y;
    if (gx > 0.0 && gy > 0.0) return std::sqrt(gx * gx + gy * gy);
    return std::max(gx, gy);
  }
  return -contact(sa, pa, sb, pb).depth;
}

inline bool overlaps(const Shape& sa, Vec2 pa, const Shape& sb, Vec2 pb) {
  return separation(sa, pa, sb, pb) < 0.0;
}

// Closed segment vs closed axis-aligned box (slab test). Touching counts.
inline bool segment_hits_box(Vec2 a, Vec2 b, Vec2 center, Vec2 half) {
  double t0 = 0.0;
  double t1 = 1.0;
  const double lo[2] = {center.x - half.x, center.y - half.y};
  const double hi[2] = {center.x + half.x, center.y + half.y};
  const double p[2] = {a.x, a.y};
  const double d[2] = {b.x - a.x, b.y - a.y};
  for (int k = 0; k < 2; ++k) {
    if (d[k] == 0.0) {
      if (p[k] < lo[k] || p[k] > hi[k]) return false;
      continue;
    }
    double ta = (lo[k] - p[k]) / d[k];
    double tb = (hi[k] - p[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace rollbox::sim

#endif  // ROLLBOX_SIM_GEOMETRY_HPP_
