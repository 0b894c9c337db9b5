#pragma once

// Constructed speed traces with analytically known beat geometry.

#include <cmath>
#include <numbers>
#include <vector>

#include "beatsvm/motion.hpp"

namespace oracle {

inline beatsvm::MotionTrace zero_trace(double fps, double seconds, double t0 = 0.0) {
  beatsvm::MotionTrace tr;
  const auto n = static_cast<std::size_t>(std::lround(seconds * fps));
  for (std::size_t i = 0; i < n; ++i) {
    tr.t.push_back(t0 + static_cast<double>(i) / fps);
    tr.speed.push_back(0.0);
  }
  return tr;
}

// Adds a raised-cosine pulse: amp * (1 + cos(pi (t - centre) / half_width)) / 2 on |t - centre| < half_width.
inline void add_raised_cosine(beatsvm::MotionTrace& tr, double centre, double half_width, double amp) {
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    const double u = (tr.t[i] - centre) / half_width;
    if (std::abs(u) < 1.0) tr.speed[i] += amp * 0.5 * (1.0 + std::cos(std::numbers::pi * u));
  }
}

// Piecewise-linear triangle from (start, 0) to (peak, amp) to (end, 0), evaluated at samples.
inline void add_triangle(beatsvm::MotionTrace& tr, double start, double peak, double end, double amp) {
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    const double t = tr.t[i];
    double v = 0.0;
    if (t > start && t <= peak) v = amp * (t - start) / (peak - start);
    else if (t > peak && t < end) v = amp * (end - t) / (end - peak);
    tr.speed[i] += v;
  }
}

}  // namespace oracle
