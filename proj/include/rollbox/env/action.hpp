#ifndef ROLLBOX_ENV_ACTION_HPP_
#define ROLLBOX_ENV_ACTION_HPP_

#include <array>

#include "rollbox/core/error.hpp"
#include "rollbox/sim/vec2.hpp"

namespace rollbox::env {

inline constexpr int kNumActions = 8;

// Compass directions, index 0 = north, proceeding clockwise in 45° steps.
struct Action {
  int index = 0;

  static Action checked(int index) {
    if (index < 0 || index >= kNumActions) throw Error("action index out of range");
    return Action{index};
  }

  sim::Vec2 direction() const {
    constexpr double s = 0.70710678118654752440;
    static constexpr std::array<sim::Vec2, kNumActions> kDirs = {{
        {0.0, 1.0}, {s, s}, {1.0, 0.0}, {s, -s}, {0.0, -1.0}, {-s, -s}, {-1.0, 0.0}, {-s, s},
    }};
    return kDirs[static_cast<std::size_t>(index)];
  }
};

}  // namespace rollbox::env

#endif  // ROLLBOX_ENV_ACTION_HPP_
