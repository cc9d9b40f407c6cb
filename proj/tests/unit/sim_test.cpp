#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "rollbox/core/rng.hpp"
#include "rollbox/sim/physics.hpp"
#include "rollbox/sim/query.hpp"

namespace rollbox::sim {
namespace {

WorldState empty_table(double half = Defaults::table_half_extent) {
  WorldState w;
  w.table_half_extent = half;
  w.bodies.push_back(make_dynamic(BodyKind::agent, {0.0, 0.0}));
  add_walls(w);
  assign_ids(w);
  return w;
}

double kinetic_energy(const WorldState& w) {
  double e = 0.0;
  for (const auto& b : w.bodies) {
    if (!b.is_static()) e += 0.5 * b.mass * dot(b.velocity, b.velocity);
  }
  return e;
}

Vec2 momentum(const WorldState& w) {
  Vec2 p;
  for (const auto& b : w.bodies) {
    if (!b.is_static()) p += b.velocity * b.mass;
  }
  return p;
}

// A cluttered world used by the property tests.
WorldState cluttered(std::uint64_t seed) {
  Rng rng(seed);
  WorldState w = empty_table();
  const BodyKind kinds[] = {BodyKind::goal_sphere_low, BodyKind::goal_sphere_high, BodyKind::cube_heavy,
                            BodyKind::cube_light};
  for (int n = 0; n < 8; ++n) {
    Vec2 p{-1.5 + 0.5 * (n % 4) * 2.0 / 1.0 * 0.5 + 0.2, n < 4 ? 1.0 : -1.0};
    p.x += rng.uniform(-0.05, 0.05);
    w.bodies.push_back(make_dynamic(kinds[n % 4], p));
  }
  w.bodies.push_back(make_static(BodyKind::fence, {0.0, 0.0}, {0.6, 0.05}));
  w.bodies.push_back(make_static(BodyKind::ramp, {-1.0, -0.3}, {0.125, 0.25}, {0.0, 1.0}));
  assign_ids(w);
  return w;
}

ForceCommand random_force(Rng& rng, int target) {
  const double angle = rng.uniform(0.0, 6.283185307179586);
  Vec2 d{std::cos(angle), std::sin(angle)};
  d = d * (1.0 / norm(d));
  return {target, d, rng.uniform(0.0, 12.0)};
}

TEST(Substep, ZeroForceIsAFixedPoint) {
  WorldState w = empty_table();
  const WorldState next = substep(w, {0, {0.0, 1.0}, 0.0}, Defaults::dt);
  EXPECT_EQ(next.agent().position, w.agent().position);
  EXPECT_EQ(next.tick, w.tick + 1);
}

TEST(Substep, EastwardForceKeepsYExactlyZero) {
  WorldState w = empty_table();
  for (int k = 0; k < 20; ++k) advance(w, {0, {1.0, 0.0}, Defaults::force_magnitude}, Defaults::dt);
  EXPECT_GT(w.agent().position.x, 0.0);
  EXPECT_EQ(w.agent().position.y, 0.0);
}

TEST(Substep, SemiImplicitEulerUpdate) {
  WorldState w = empty_table();
  w.bodies[0].velocity = {0.5, 0.0};
  const double dt = Defaults::dt;
  advance(w, {0, {0.0, 1.0}, 3.0}, dt);
  const double damping = 1.0 - Defaults::drag * dt;
  EXPECT_DOUBLE_EQ(w.agent().velocity.x, 0.5 * damping);
  EXPECT_DOUBLE_EQ(w.agent().velocity.y, 3.0 * dt * damping);
  EXPECT_DOUBLE_EQ(w.agent().position.y, 3.0 * dt * damping * dt);
}

// 1-D elastic collision: velocities after the impulse, derived from
// conservation of momentum and the restitution law.
std::pair<double, double> elastic_1d(double m1, double v1, double m2, double v2, double e) {
  const double u1 = ((m1 - e * m2) * v1 + (1.0 + e) * m2 * v2) / (m1 + m2);
  const double u2 = ((m2 - e * m1) * v2 + (1.0 + e) * m1 * v1) / (m1 + m2);
  return {u1, u2};
}

TEST(Substep, HeadOnElasticCollisionMatchesOracle) {
  WorldState w = empty_table();
  w.bodies[0].velocity = {2.0, 0.0};
  w.bodies[0].friction_drag = 0.0;
  w.bodies[0].restitution = 1.0;
  Body cube = make_dynamic(BodyKind::cube_light, {0.6, 0.0});
  cube.friction_drag = 0.0;
  cube.restitution = 1.0;
  w.bodies.push_back(cube);
  assign_ids(w);
  const int cube_id = w.bodies.back().id;
  for (int k = 0; k < 30; ++k) advance(w, {0, {0.0, 1.0}, 0.0}, Defaults::dt);
  const auto [u1, u2] = elastic_1d(1.0, 2.0, 1.0, 0.0, 1.0);
  EXPECT_NEAR(w.agent().velocity.x, u1, 1e-9);
  EXPECT_NEAR(w.agent().velocity.y, 0.0, 1e-9);
  EXPECT_NEAR(w.find(cube_id)->velocity.x, u2, 1e-9);
  EXPECT_NEAR(w.find(cube_id)->velocity.y, 0.0, 1e-9);
  EXPECT_NEAR(u1, 0.0, 1e-12);
  EXPECT_NEAR(u2, 2.0, 1e-12);
}

TEST(Substep, Errors) {
  WorldState w = empty_table();
  try {
    advance(w, {99, {0.0, 1.0}, 1.0}, Defaults::dt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "no such body");
  }
  try {
    advance(w, {0, {0.0, 1.0}, 1.0}, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "invalid timestep");
  }
  EXPECT_THROW(advance(w, {0, {0.0, 1.0}, 1.0}, -1.0), Error);
  EXPECT_THROW(advance(w, {1, {0.0, 1.0}, 1.0}, Defaults::dt), Error);  // a wall
  EXPECT_THROW(advance(w, {0, {0.0, 2.0}, 1.0}, Defaults::dt), Error);
}

TEST(Substep, PendingCollisionsClearedEverySubstep) {
  WorldState w = empty_table();
  w.bodies.push_back(make_dynamic(BodyKind::goal_sphere_low, {0.25, 0.0}));
  assign_ids(w);
  advance(w, {0, {1.0, 0.0}, 6.0}, Defaults::dt);
  ASSERT_FALSE(w.pending_collisions.empty());
  w.bodies.back().position = {1.5, 1.5};
  advance(w, {0, {1.0, 0.0}, 0.0}, Defaults::dt);
  EXPECT_TRUE(w.pending_collisions.empty());
}

TEST(Raycast, EmptyTableIsFree) {
  const WorldState w = empty_table();
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const Vec2 a{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    const Vec2 b{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    EXPECT_TRUE(raycast_free(w, a, b));
  }
}

TEST(Raycast, WallBetweenBlocks) {
  WorldState w = empty_table();
  w.bodies.push_back(make_static(BodyKind::wall, {0.0, 1.0}, {0.05, 0.5}));
  assign_ids(w);
  EXPECT_FALSE(raycast_free(w, {-1.0, 1.0}, {1.0, 1.0}));
  EXPECT_TRUE(raycast_free(w, {-1.0, -1.0}, {1.0, -1.0}));
}

TEST(Raycast, FenceIgnoredWhenAgentIsAboveIt) {
  WorldState w = empty_table();
  w.bodies.push_back(make_static(BodyKind::fence, {0.0, 1.0}, {0.05, 0.5}));
  assign_ids(w);
  EXPECT_FALSE(raycast_free(w, {-1.0, 1.0}, {1.0, 1.0}));
  w.bodies[0].elevation = w.fence_height;
  EXPECT_TRUE(raycast_free(w, {-1.0, 1.0}, {1.0, 1.0}));
}

// Independent oracle: squared distance between a segment and a box is a
// convex function of the segment parameter; minimise it by ternary search.
double segment_box_distance(Vec2 a, Vec2 b, Vec2 c, Vec2 half) {
  auto dist2 = [&](double t) {
    const Vec2 p = a + (b - a) * t;
    const double dx = std::max(0.0, std::abs(p.x - c.x) - half.x);
    const double dy = std::max(0.0, std::abs(p.y - c.y) - half.y);
    return dx * dx + dy * dy;
  };
  double lo = 0.0, hi = 1.0;
  for (int k = 0; k < 200; ++k) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (dist2(m1) <= dist2(m2)) hi = m2; else lo = m1;
  }
  return std::sqrt(std::min({dist2(lo), dist2(0.0), dist2(1.0)}));
}

TEST(Raycast, GrazingACornerCountsAsBlocked) {
  WorldState w = empty_table();
  const Vec2 c{0.0, 0.0}, half{0.2, 0.2};
  w.bodies.push_back(make_static(BodyKind::wall, c, half));
  w.bodies[0].position = {-1.5, -1.5};
  assign_ids(w);
  // Diagonal line through the corner (0.2, 0.2) offset by 5e-10.
  const Vec2 a{-0.3, 0.7 + 5e-10}, b{0.7, -0.3 + 5e-10};
  EXPECT_LE(segment_box_distance(a, b, c, half), 1e-9);
  EXPECT_FALSE(raycast_free(w, a, b));
  // Clearly outside.
  const Vec2 a2{-0.3, 0.71}, b2{0.71, -0.3};
  EXPECT_GT(segment_box_distance(a2, b2, c, half), 1e-9);
  EXPECT_TRUE(raycast_free(w, a2, b2));
}

TEST(Raycast, AgreesWithDistanceOracleOnRandomSegments) {
  WorldState w = empty_table();
  const Vec2 c{0.3, -0.2}, half{0.4, 0.15};
  w.bodies.push_back(make_static(BodyKind::wall, c, half));
  assign_ids(w);
  Rng rng(11);
  int blocked = 0;
  for (int k = 0; k < 2000; ++k) {
    const Vec2 a{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    const Vec2 b{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    const double d = segment_box_distance(a, b, c, half);
    if (std::abs(d - kGrazeTolerance) < 1e-12) continue;  // too close to call
    const bool expect_free = d > kGrazeTolerance;
    EXPECT_EQ(raycast_free(w, a, b), expect_free) << a.x << "," << a.y << " -> " << b.x << "," << b.y;
    blocked += expect_free ? 0 : 1;
  }
  EXPECT_GT(blocked, 100);
}

TEST(Collisions, NoContactGivesEmptyList) {
  WorldState w = empty_table();
  begin_macro_step(w);
  for (int s = 0; s < 4; ++s) advance(w, {0, {1.0, 0.0}, 6.0}, Defaults::dt);
  EXPECT_TRUE(collisions_involving(w, 0).empty());
  EXPECT_THROW(collisions_involving(w, 1234), Error);
}

TEST(Collisions, TouchingYellowSphereGivesOneEvent) {
  WorldState w = empty_table();
  w.bodies.push_back(make_dynamic(BodyKind::goal_sphere_low, {0.302, 0.0}));
  assign_ids(w);
  const int sphere = w.bodies.back().id;
  begin_macro_step(w);
  w.bodies[0].velocity = {0.5, 0.0};
  advance(w, {0, {1.0, 0.0}, 0.0}, Defaults::dt);
  const auto events = collisions_involving(w, 0);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].a, 0);
  EXPECT_EQ(events[0].b, sphere);
  EXPECT_EQ(w.find(events[0].b)->kind, BodyKind::goal_sphere_low);
  EXPECT_GT(events[0].impulse, 0.0);
}

TEST(Collisions, TwoCubesAtOnceAreOrderedBySubstepThenImpulse) {
  WorldState w = empty_table();
  // Light cube straight ahead, heavy cube on the diagonal: both touched in
  // the same substep.
  w.bodies.push_back(make_dynamic(BodyKind::cube_heavy, {0.36, 0.2}));
  w.bodies.push_back(make_dynamic(BodyKind::cube_light, {0.36, -0.2}));
  assign_ids(w);
  w.bodies[0].velocity = {1.0, 0.0};
  begin_macro_step(w);
  for (int s = 0; s < 4; ++s) advance(w, {0, {1.0, 0.0}, 6.0}, Defaults::dt);
  const auto events = collisions_involving(w, 0);
  ASSERT_GE(events.size(), 2u);
  // Hand check of the ordering rule against the raw log.
  auto expected = w.step_events;
  std::erase_if(expected, [](const CollisionEvent& e) { return e.a != 0 && e.b != 0; });
  std::sort(expected.begin(), expected.end(), [](const auto& x, const auto& y) {
    if (x.substep != y.substep) return x.substep < y.substep;
    if (x.impulse != y.impulse) return x.impulse < y.impulse;
    return x.a != y.a ? x.a < y.a : x.b < y.b;
  });
  EXPECT_EQ(events, expected);
  std::set<int> partners;
  for (const auto& e : events) partners.insert(e.a == 0 ? e.b : e.a);
  EXPECT_EQ(partners.size(), 2u);
  EXPECT_EQ(events[0].substep, events[1].substep);
  EXPECT_LE(events[0].impulse, events[1].impulse);
  // Replaying gives the identical list.
  WorldState w2 = empty_table();
  w2.bodies.push_back(make_dynamic(BodyKind::cube_heavy, {0.36, 0.2}));
  w2.bodies.push_back(make_dynamic(BodyKind::cube_light, {0.36, -0.2}));
  assign_ids(w2);
  w2.bodies[0].velocity = {1.0, 0.0};
  begin_macro_step(w2);
  for (int s = 0; s < 4; ++s) advance(w2, {0, {1.0, 0.0}, 6.0}, Defaults::dt);
  EXPECT_EQ(collisions_involving(w2, 0), events);
}

TEST(Ramp, AgentClimbsOverFenceButNotWithoutRamp) {
  auto pen = [](bool with_ramp) {
    WorldState w = empty_table();
    w.bodies[0].position = {0.0, -0.3};
    w.bodies.push_back(make_static(BodyKind::fence, {0.0, 0.5}, {1.0, 0.05}));
    if (with_ramp) w.bodies.push_back(make_static(BodyKind::ramp, {0.0, 0.2}, {0.125, 0.25}, {0.0, 1.0}));
    assign_ids(w);
    for (int k = 0; k < 400; ++k) {
      advance(w, {0, {0.0, 1.0}, Defaults::force_magnitude}, Defaults::dt);
      EXPECT_GE(w.agent().elevation, 0.0);
    }
    return w;
  };
  const WorldState blocked = pen(false);
  EXPECT_LT(blocked.agent().position.y, 0.5);
  const WorldState crossed = pen(true);
  EXPECT_GT(crossed.agent().position.y, 0.5);
  EXPECT_EQ(crossed.agent().elevation, 0.0);  // landed
}

TEST(Ramp, ElevationFollowsProgressAndIsZeroOffRamp) {
  WorldState w = empty_table();
  w.bodies.push_back(make_static(BodyKind::ramp, {0.0, 0.0}, {0.125, 0.5}, {0.0, 1.0}));
  assign_ids(w);
  w.bodies[0].position = {0.0, -0.3};
  advance(w, {0, {0.0, 1.0}, 0.0}, Defaults::dt);
  const double top = w.fence_height + Defaults::ramp_epsilon;
  // Leading edge at y = -0.15, i.e. 0.35 of the way up a 1 m ramp.
  EXPECT_NEAR(w.agent().elevation, 0.35 * top, 1e-12);
  w.bodies[0].position = {1.0, 1.0};
  advance(w, {0, {0.0, 1.0}, 0.0}, Defaults::dt);
  EXPECT_EQ(w.agent().elevation, 0.0);
}

// --- properties ---------------------------------------------------------

TEST(SimProperties, DeterministicReplay) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    WorldState a = cluttered(seed), b = cluttered(seed);
    Rng ra(seed), rb(seed);
    for (int k = 0; k < 2000; ++k) {
      advance(a, random_force(ra, 0), Defaults::dt);
      advance(b, random_force(rb, 0), Defaults::dt);
    }
    EXPECT_EQ(a, b);
    EXPECT_EQ(digest(a), digest(b));
  }
}

TEST(SimProperties, ContainmentUnderRandomForces) {
  WorldState w = cluttered(5);
  Rng rng(5);
  const double h = w.table_half_extent;
  std::vector<int> movable;
  for (const auto& b : w.bodies) {
    if (!b.is_static()) movable.push_back(b.id);
  }
  for (int k = 0; k < 50000; ++k) {
    const int target = movable[rng.below(movable.size())];
    advance(w, random_force(rng, target), Defaults::dt);
    for (const auto& b : w.bodies) {
      if (b.is_static()) continue;
      ASSERT_LE(std::abs(b.position.x), h);
      ASSERT_LE(std::abs(b.position.y), h);
    }
  }
}

TEST(SimProperties, TwoBodyMomentumConservedWhenElastic) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    WorldState w = empty_table();
    const BodyKind other = trial % 2 ? BodyKind::cube_heavy : BodyKind::goal_sphere_high;
    w.bodies.push_back(make_dynamic(other, {rng.uniform(0.4, 0.6), rng.uniform(-0.1, 0.1)}));
    assign_ids(w);
    for (auto& b : w.bodies) {
      b.friction_drag = 0.0;
      b.restitution = 1.0;
    }
    w.bodies[0].velocity = {rng.uniform(1.0, 3.0), rng.uniform(-0.2, 0.2)};
    w.bodies.back().velocity = {rng.uniform(-1.0, 0.0), rng.uniform(-0.2, 0.2)};
    const Vec2 p0 = momentum(w);
    const double e0 = kinetic_energy(w);
    bool touched = false;
    const int other_id = w.bodies.back().id;
    // Stop as soon as the pair has separated, before anything reaches a wall.
    for (int k = 0; k < 60; ++k) {
      advance(w, {0, {0.0, 1.0}, 0.0}, Defaults::dt);
      for (const auto& e : w.pending_collisions) {
        ASSERT_TRUE(e.a == 0 && e.b == other_id);
        touched = true;
      }
      if (touched && w.pending_collisions.empty()) break;
    }
    ASSERT_TRUE(touched);
    const Vec2 p1 = momentum(w);
    EXPECT_LE(norm(p1 - p0), 1e-9 * norm(p0));
    EXPECT_NEAR(kinetic_energy(w), e0, 1e-9 * e0);
  }
}

TEST(SimProperties, KineticEnergyNonIncreasingWithoutForce) {
  for (std::uint64_t seed : {1u, 4u}) {
    WorldState w = cluttered(seed);
    Rng rng(seed);
    for (auto& b : w.bodies) {
      if (!b.is_static()) b.velocity = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
    }
    double e = kinetic_energy(w);
    for (int k = 0; k < 600; ++k) {
      advance(w, {0, {0.0, 1.0}, 0.0}, Defaults::dt);
      const double next = kinetic_energy(w);
      ASSERT_LE(next, e * (1.0 + 1e-12));
      e = next;
    }
  }
}

TEST(SimProperties, StaticBodiesNeverMove) {
  WorldState w = cluttered(7);
  std::vector<Vec2> before;
  for (const auto& b : w.bodies) before.push_back(b.position);
  Rng rng(7);
  for (int k = 0; k < 5000; ++k) {
    advance(w, random_force(rng, 0), Defaults::dt);
    for (std::size_t i = 0; i < w.bodies.size(); ++i) {
      if (w.bodies[i].is_static()) ASSERT_EQ(w.bodies[i].position, before[i]);
    }
  }
}

TEST(SimProperties, TickIncrementsByOne) {
  WorldState w = empty_table();
  for (int k = 0; k < 10; ++k) {
    const auto t = w.tick;
    advance(w, {0, {1.0, 0.0}, 1.0}, Defaults::dt);
    EXPECT_EQ(w.tick, t + 1);
  }
}

}  // namespace
}  // namespace rollbox::sim
