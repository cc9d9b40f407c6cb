#ifndef ROLLBOX_WORLDGEN_OCCUPANCY_HPP_
#define ROLLBOX_WORLDGEN_OCCUPANCY_HPP_

#include <array>
#include <cstdint>
#include <deque>
#include <vector>

#include "rollbox/sim/geometry.hpp"
#include "rollbox/sim/world.hpp"
#include "rollbox/worldgen/puzzle_config.hpp"

namespace rollbox::worldgen {

using sim::Vec2;

// Coarse 16x16 occupancy of a world, evaluated for a disc of the agent's
// radius centred in each cell. Conservative: cubes count as obstacles even
// though they can be pushed.
class OccupancyGrid {
 public:
  static constexpr std::uint8_t kHard = 1;   // wall, cube, danger region
  static constexpr std::uint8_t kFence = 2;  // blocked at ground level only
  static constexpr std::uint8_t kRamp = 4;

  OccupancyGrid(const sim::WorldState& w, double agent_radius)
      : half_(w.table_half_extent), cell_(2.0 * w.table_half_extent / kGridSize),
        flags_(kGridSize * kGridSize, 0), ramp_dir_(kGridSize * kGridSize, -1) {
    const sim::Shape disc = sim::Circle{agent_radius};
    for (int j = 0; j < kGridSize; ++j) {
      for (int i = 0; i < kGridSize; ++i) {
        const Vec2 c = center({i, j});
        for (const sim::Body& b : w.bodies) {
          std::uint8_t flag = 0;
          switch (b.kind) {
            case BodyKind::wall:
            case BodyKind::cube_heavy:
            case BodyKind::cube_light:
            case BodyKind::danger_region:
              flag = kHard;
              break;
            case BodyKind::fence:
              flag = kFence;
              break;
            case BodyKind::ramp:
              flag = kRamp;
              break;
            default:
              continue;
          }
          if (!sim::overlaps(disc, c, b.shape, b.position)) continue;
          flags_[index({i, j})] |= flag;
          if (flag == kRamp && ramp_dir_[index({i, j})] < 0) ramp_dir_[index({i, j})] = direction_index(b.uphill);
        }
      }
    }
  }

  double cell_size() const { return cell_; }

  Vec2 center(GridCell g) const {
    return {-half_ + (g.i + 0.5) * cell_, -half_ + (g.j + 0.5) * cell_};
  }

  GridCell cell_of(Vec2 p) const {
    auto clampi = [](int v) { return v < 0 ? 0 : (v >= kGridSize ? kGridSize - 1 : v); };
    return {clampi(static_cast<int>((p.x + half_) / cell_)), clampi(static_cast<int>((p.y + half_) / cell_))};
  }

  std::uint8_t flags(GridCell g) const { return flags_[index(g)]; }

  // Flood fill from `from`; `to` counts as reached when it or one of its
  // eight neighbours is reached on the ground. With `use_ramps`, a ramp cell
  // is walkable and moving up-slope off a ramp carries the agent over any
  // run of fence-only cells.
  bool reachable(GridCell from, GridCell to, bool use_ramps) const {
    constexpr int kGround = 4;
    std::vector<std::uint8_t> seen(kGridSize * kGridSize * 5, 0);
    std::deque<std::pair<GridCell, int>> queue;
    auto visit = [&](GridCell g, int state) {
      const std::size_t k = index(g) * 5 + state;
      if (seen[k]) return;
      seen[k] = 1;
      queue.emplace_back(g, state);
    };
    visit(from, kGround);
    while (!queue.empty()) {
      auto [g, state] = queue.front();
      queue.pop_front();
      if (state == kGround && std::abs(g.i - to.i) <= 1 && std::abs(g.j - to.j) <= 1) return true;
      for (int d = 0; d < 4; ++d) {
        if (state != kGround && d != state) continue;
        const GridCell n{g.i + kDirs[d][0], g.j + kDirs[d][1]};
        if (n.i < 0 || n.i >= kGridSize || n.j < 0 || n.j >= kGridSize) continue;
        const std::uint8_t f = flags(n);
        if (f & kHard) continue;
        const bool fence_only = (f & kFence) && !(f & kRamp);
        if (!(f & kFence)) {
          visit(n, kGround);
        } else if (use_ramps && (f & kRamp)) {
          visit(n, kGround);
        } else if (use_ramps && fence_only) {
          const bool launching = state == kGround && (flags(g) & kRamp) && ramp_dir_[index(g)] == d;
          if (launching || state == d) visit(n, d);
        }
      }
    }
    return false;
  }

 private:
  static constexpr int kDirs[4][2] = {{0, 1}, {1, 0}, {0, -1}, {-1, 0}};

  static int direction_index(Vec2 u) {
    if (u.y > 0.5) return 0;
    if (u.x > 0.5) return 1;
    if (u.y < -0.5) return 2;
    return 3;
  }

  std::size_t index(GridCell g) const { return static_cast<std::size_t>(g.j) * kGridSize + g.i; }

  double half_;
  double cell_;
  std::vector<std::uint8_t> flags_;
  std::vector<int> ramp_dir_;
};

}  // namespace rollbox::worldgen

#endif  // ROLLBOX_WORLDGEN_OCCUPANCY_HPP_
