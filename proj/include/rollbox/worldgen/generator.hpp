#ifndef ROLLBOX_WORLDGEN_GENERATOR_HPP_
#define ROLLBOX_WORLDGEN_GENERATOR_HPP_

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "rollbox/core/rng.hpp"
#include "rollbox/sim/geometry.hpp"
#include "rollbox/sim/world.hpp"
#include "rollbox/worldgen/occupancy.hpp"
#include "rollbox/worldgen/puzzle_config.hpp"

namespace rollbox::worldgen {

inline constexpr int kMaxPlacementAttempts = 1000;
inline constexpr double kSpawnClearance = 1e-6;

namespace detail {

struct Rect {
  Vec2 lo;
  Vec2 hi;
  bool contains(Vec2 p) const { return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y; }
};

// Fenced pen used by tool-use puzzles, in grid cells.
struct Enclosure {
  int i0 = 0, j0 = 0, w = 0, h = 0;
};

class Layout {
 public:
  Layout(const PuzzleConfig& config, Rng& rng)
      : config_(config), rng_(rng), half_(config.table_half_extent),
        cell_(2.0 * config.table_half_extent / kGridSize) {
    world_.table_half_extent = half_;
  }

  sim::WorldState build() {
    if (config_.task == Task::tool_use) add_enclosure();
    // Regions and ramps first: they constrain where everything else may go.
    for (int n = 0; n < config_.count(BodyKind::danger_region); ++n) add_danger(n);
    for (int n = 0; n < config_.count(BodyKind::ramp); ++n) add_ramp(n);
    place_dynamic(BodyKind::agent, 0);
    for (BodyKind k : {BodyKind::goal_sphere_low, BodyKind::goal_sphere_high, BodyKind::cube_heavy, BodyKind::cube_light}) {
      for (int n = 0; n < config_.count(k); ++n) place_dynamic(k, n);
    }
    order_and_finish();
    return world_;
  }

 private:
  Vec2 cell_center(GridCell g) const { return {-half_ + (g.i + 0.5) * cell_, -half_ + (g.j + 0.5) * cell_}; }
  double boundary(int index) const { return -half_ + index * cell_; }

  std::optional<GridCell> explicit_cell(BodyKind k, int n) const {
    auto it = config_.placement.find(k);
    if (it == config_.placement.end() || n >= static_cast<int>(it->second.size())) return std::nullopt;
    return it->second[n];
  }

  bool inside_table(const sim::Shape& s, Vec2 p) const {
    double ex, ey;
    if (const auto* c = std::get_if<sim::Circle>(&s)) {
      ex = ey = c->radius;
    } else {
      const Vec2 hh = std::get<sim::Box>(s).half_extents;
      ex = hh.x;
      ey = hh.y;
    }
    return std::abs(p.x) + ex <= half_ - kSpawnClearance && std::abs(p.y) + ey <= half_ - kSpawnClearance;
  }

  bool clear_of_everything(const sim::Shape& s, Vec2 p, bool skip_fences = false) const {
    for (const sim::Body& b : world_.bodies) {
      if (skip_fences && b.kind == BodyKind::fence) continue;
      if (sim::separation(s, p, b.shape, b.position) < kSpawnClearance) return false;
    }
    return true;
  }

  // Region constraint for the tool-use pen: agent inside, everything else out.
  bool region_ok(BodyKind k, const sim::Shape& s, Vec2 p) const {
    if (!enclosure_) return true;
    double extent = 0.0;
    if (const auto* c = std::get_if<sim::Circle>(&s)) {
      extent = c->radius;
    } else {
      const Vec2 hh = std::get<sim::Box>(s).half_extents;
      extent = std::max(hh.x, hh.y);
    }
    const double ft = sim::Defaults::fence_thickness / 2.0;
    const Enclosure& e = *enclosure_;
    const Rect pen{{boundary(e.i0), boundary(e.j0)}, {boundary(e.i0 + e.w), boundary(e.j0 + e.h)}};
    if (k == BodyKind::agent) {
      const Rect inner{{pen.lo.x + ft + extent, pen.lo.y + ft + extent}, {pen.hi.x - ft - extent, pen.hi.y - ft - extent}};
      return inner.contains(p);
    }
    const Rect outer{{pen.lo.x - ft - extent, pen.lo.y - ft - extent}, {pen.hi.x + ft + extent, pen.hi.y + ft + extent}};
    return !outer.contains(p);
  }

  void place_dynamic(BodyKind kind, int n) {
    sim::Body body = sim::make_dynamic(kind, {});
    if (auto g = explicit_cell(kind, n)) {
      body.position = cell_center(*g);
      if (!inside_table(body.shape, body.position) || !clear_of_everything(body.shape, body.position) ||
          !region_ok(kind, body.shape, body.position)) {
        throw Error("unsatisfiable config");
      }
      world_.bodies.push_back(body);
      return;
    }
    for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
      const GridCell g{rng_.range(0, kGridSize - 1), rng_.range(0, kGridSize - 1)};
      const Vec2 jitter{rng_.uniform(-0.25, 0.25) * cell_, rng_.uniform(-0.25, 0.25) * cell_};
      const Vec2 p = cell_center(g) + jitter;
      if (!inside_table(body.shape, p) || !region_ok(kind, body.shape, p) || !clear_of_everything(body.shape, p)) continue;
      body.position = p;
      world_.bodies.push_back(body);
      return;
    }
    throw Error("unsatisfiable config");
  }

  // Cell-aligned static box covering cells [i0, i0+wi) x [j0, j0+hj).
  sim::Body aligned_box(BodyKind kind, int i0, int j0, int wi, int hj, Vec2 uphill = {}) const {
    const Vec2 c{boundary(i0) + wi * cell_ / 2.0, boundary(j0) + hj * cell_ / 2.0};
    return sim::make_static(kind, c, {wi * cell_ / 2.0, hj * cell_ / 2.0}, uphill);
  }

  void add_danger(int n) {
    for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
      const int wi = rng_.range(2, 3);
      const int hj = rng_.range(2, 3);
      int i0, j0;
      if (auto g = explicit_cell(BodyKind::danger_region, n)) {
        i0 = g->i;
        j0 = g->j;
      } else {
        i0 = rng_.range(1, kGridSize - 1 - wi);
        j0 = rng_.range(1, kGridSize - 1 - hj);
      }
      sim::Body b = aligned_box(BodyKind::danger_region, i0, j0, wi, hj);
      if (!inside_table(b.shape, b.position) || !clear_of_everything(b.shape, b.position)) {
        if (explicit_cell(BodyKind::danger_region, n)) throw Error("unsatisfiable config");
        continue;
      }
      world_.bodies.push_back(b);
      return;
    }
    throw Error("unsatisfiable config");
  }

  void add_ramp(int n) {
    static constexpr Vec2 kUp[4] = {{0.0, 1.0}, {1.0, 0.0}, {0.0, -1.0}, {-1.0, 0.0}};
    for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
      sim::Body ramp;
      const bool in_pen = enclosure_ && n == 0;
      if (in_pen) {
        ramp = pen_ramp();
      } else {
        const int d = rng_.range(0, 3);
        const bool vertical = d % 2 == 0;
        const int wi = vertical ? 1 : 2;
        const int hj = vertical ? 2 : 1;
        int i0 = rng_.range(1, kGridSize - 1 - wi);
        int j0 = rng_.range(1, kGridSize - 1 - hj);
        if (auto g = explicit_cell(BodyKind::ramp, n)) {
          i0 = g->i;
          j0 = g->j;
        }
        ramp = aligned_box(BodyKind::ramp, i0, j0, wi, hj, kUp[d]);
      }
      // The pen ramp leans against its fence by construction.
      if (!inside_table(ramp.shape, ramp.position) || !clear_of_everything(ramp.shape, ramp.position, in_pen)) {
        if (explicit_cell(BodyKind::ramp, n)) throw Error("unsatisfiable config");
        continue;
      }
      world_.bodies.push_back(ramp);
      return;
    }
    throw Error("unsatisfiable config");
  }

  // A two-cell ramp inside the pen whose top end meets the fence.
  sim::Body pen_ramp() {
    const Enclosure& e = *enclosure_;
    const double ft = sim::Defaults::fence_thickness / 2.0;
    const double length = 2.0 * cell_ - ft;
    const int side = rng_.range(0, 3);
    sim::Body b;
    if (side == 0 || side == 2) {  // north / south wall of the pen
      const int i = e.i0 + rng_.range(1, e.w - 2);
      const double top = side == 0 ? boundary(e.j0 + e.h) - ft : boundary(e.j0) + ft;
      const double cy = side == 0 ? top - length / 2.0 : top + length / 2.0;
      b = sim::make_static(BodyKind::ramp, {boundary(i) + cell_ / 2.0, cy}, {cell_ / 2.0, length / 2.0},
                           side == 0 ? Vec2{0.0, 1.0} : Vec2{0.0, -1.0});
    } else {  // east / west
      const int j = e.j0 + rng_.range(1, e.h - 2);
      const double top = side == 1 ? boundary(e.i0 + e.w) - ft : boundary(e.i0) + ft;
      const double cx = side == 1 ? top - length / 2.0 : top + length / 2.0;
      b = sim::make_static(BodyKind::ramp, {cx, boundary(j) + cell_ / 2.0}, {length / 2.0, cell_ / 2.0},
                           side == 1 ? Vec2{1.0, 0.0} : Vec2{-1.0, 0.0});
    }
    return b;
  }

  void add_enclosure() {
    Enclosure e;
    e.w = rng_.range(4, 6);
    e.h = rng_.range(4, 6);
    e.i0 = rng_.range(3, kGridSize - 3 - e.w);
    e.j0 = rng_.range(3, kGridSize - 3 - e.h);
    enclosure_ = e;
    const double ft = sim::Defaults::fence_thickness / 2.0;
    const double x0 = boundary(e.i0), x1 = boundary(e.i0 + e.w);
    const double y0 = boundary(e.j0), y1 = boundary(e.j0 + e.h);
    const double hx = (x1 - x0) / 2.0 + ft;
    const double hy = (y1 - y0) / 2.0 + ft;
    const double cx = (x0 + x1) / 2.0, cy = (y0 + y1) / 2.0;
    world_.bodies.push_back(sim::make_static(BodyKind::fence, {cx, y1}, {hx, ft}));
    world_.bodies.push_back(sim::make_static(BodyKind::fence, {cx, y0}, {hx, ft}));
    world_.bodies.push_back(sim::make_static(BodyKind::fence, {x1, cy}, {ft, hy}));
    world_.bodies.push_back(sim::make_static(BodyKind::fence, {x0, cy}, {ft, hy}));
  }

  // Bodies are ordered agent, goals, cubes, ramps, regions, fences, walls;
  // ids equal the index.
  void order_and_finish() {
    std::vector<sim::Body> sorted;
    for (BodyKind k : {BodyKind::agent, BodyKind::goal_sphere_low, BodyKind::goal_sphere_high, BodyKind::cube_heavy,
                       BodyKind::cube_light, BodyKind::ramp, BodyKind::danger_region, BodyKind::fence}) {
      for (const auto& b : world_.bodies) {
        if (b.kind == k) sorted.push_back(b);
      }
    }
    world_.bodies = std::move(sorted);
    sim::add_walls(world_);
    sim::assign_ids(world_);
  }

  const PuzzleConfig& config_;
  Rng& rng_;
  double half_;
  double cell_;
  sim::WorldState world_;
  std::optional<Enclosure> enclosure_;
};

inline std::vector<const sim::Body*> bodies_of(const sim::WorldState& w, BodyKind k) {
  std::vector<const sim::Body*> out;
  for (const auto& b : w.bodies) {
    if (b.kind == k) out.push_back(&b);
  }
  return out;
}

}  // namespace detail

// Solvability per task semantics on the 16x16 occupancy grid.
inline bool is_solvable(const sim::WorldState& w, Task task) {
  const OccupancyGrid grid(w, sim::Defaults::agent_radius);
  const GridCell start = grid.cell_of(w.agent().position);
  auto reach = [&](BodyKind k, bool ramps) {
    for (const sim::Body* b : detail::bodies_of(w, k)) {
      if (!grid.reachable(start, grid.cell_of(b->position), ramps)) return false;
    }
    return true;
  };
  switch (task) {
    case Task::none:
      return true;
    case Task::goal_seeking:
    case Task::avoidance:
      return reach(BodyKind::goal_sphere_low, false);
    case Task::preferences:
      return reach(BodyKind::goal_sphere_low, false) && reach(BodyKind::goal_sphere_high, false);
    case Task::tool_use: {
      for (const sim::Body* b : detail::bodies_of(w, BodyKind::goal_sphere_low)) {
        const GridCell goal = grid.cell_of(b->position);
        if (grid.reachable(start, goal, false) || !grid.reachable(start, goal, true)) return false;
      }
      return true;
    }
  }
  return false;
}

// Builds the world described by `config`. Pure function of the config.
inline sim::WorldState generate(const PuzzleConfig& config) {
  validate(config);
  Rng rng(derive_seed(config.seed, "worldgen"));
  for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
    detail::Layout layout(config, rng);
    sim::WorldState w = layout.build();
    w.rng_stream = "puzzle:" + std::to_string(config.seed);
    if (config.mode == Mode::sandbox || is_solvable(w, config.task)) return w;
    // Explicit placements make every retry identical.
    if (!config.placement.empty()) break;
  }
  throw Error("unsatisfiable config");
}

}  // namespace rollbox::worldgen

#endif  // ROLLBOX_WORLDGEN_GENERATOR_HPP_
