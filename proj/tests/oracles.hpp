#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "helmetcv/geometry.hpp"

// Independent reference computations used only by tests.
namespace helmetcv::oracle {

/// IoU by direct edge arithmetic, no shared code with the library.
inline double iou(double ax, double ay, double aw, double ah, double bx, double by, double bw, double bh) {
  const double ix = std::max(0.0, std::min(ax + aw, bx + bw) - std::max(ax, bx));
  const double iy = std::max(0.0, std::min(ay + ah, by + bh) - std::max(ay, by));
  const double inter = ix * iy;
  const double uni = aw * ah + bw * bh - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Maximum-cardinality matching over eligible[d][g] by exhaustive search.
inline std::size_t max_matching(const std::vector<std::vector<bool>>& eligible, std::size_t n_gt) {
  std::vector<bool> used(n_gt, false);
  std::function<std::size_t(std::size_t)> go = [&](std::size_t d) -> std::size_t {
    if (d == eligible.size()) return 0;
    std::size_t best = go(d + 1);
    for (std::size_t g = 0; g < n_gt; ++g) {
      if (!used[g] && eligible[d][g]) {
        used[g] = true;
        best = std::max(best, 1 + go(d + 1));
        used[g] = false;
      }
    }
    return best;
  };
  return go(0);
}

/// Random box in a 100x100 world; half of the calls perturb `near` when given.
inline Box random_box(std::mt19937& rng, const Box* near = nullptr) {
  std::uniform_real_distribution<double> pos(0.0, 80.0), size(2.0, 30.0), nudge(-4.0, 4.0);
  if (near) {
    return {near->x + nudge(rng), near->y + nudge(rng), std::max(0.5, near->w + nudge(rng)),
            std::max(0.5, near->h + nudge(rng)), near->space};
  }
  return {pos(rng), pos(rng), size(rng), size(rng), CoordSpace::frame()};
}

}  // namespace helmetcv::oracle
