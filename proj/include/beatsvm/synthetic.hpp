#pragma once

// Seeded generator of labeled beating-feature tables and double-pulse motion traces.
//
// Default magnitudes are artifact parameters chosen for near-perfect separability;
// only the direction of each class effect is fixed (see kMatureDirection).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "beatsvm/beats.hpp"
#include "beatsvm/dataset.hpp"
#include "beatsvm/error.hpp"
#include "beatsvm/motion.hpp"
#include "beatsvm/rng.hpp"

namespace beatsvm {

// Sign of (mature mean - immature mean) per feature, in kFeatureNames order.
inline constexpr std::array<int, kFeatureCount> kMatureDirection = {+1, +1, +1, +1, +1, +1, -1, +1, -1, +1};

struct FeatureDistribution {
  double location = 0.0;
  double scale = 1.0;
};

using ClassProfile = std::array<FeatureDistribution, kFeatureCount>;

struct SyntheticSpec {
  ClassProfile immature{{{20.0, 6.0},
                         {0.30, 0.05},
                         {10.0, 4.0},
                         {0.40, 0.07},
                         {0.40, 0.07},
                         {0.85, 0.12},
                         {0.12, 0.02},
                         {0.15, 0.04},
                         {40.0, 10.0},
                         {3.0, 1.2}}};
  ClassProfile mature{{{35.0, 6.0},
                       {0.40, 0.05},
                       {18.0, 4.0},
                       {0.55, 0.07},
                       {0.55, 0.07},
                       {1.10, 0.12},
                       {0.10, 0.02},
                       {0.25, 0.04},
                       {30.0, 10.0},
                       {6.0, 1.2}}};
  double b27_maturity = 0.4;  // d42_b27 locations: immature + this fraction of the class gap

  std::size_t n_immature = 115;
  std::size_t n_mature = 115;
  std::size_t n_b27 = 117;

  std::vector<std::string> cell_lines{"L1", "L2", "L3", "L4"};
  std::vector<double> cell_line_weights{0.35, 0.25, 0.2, 0.2};
  double cell_line_effect = 0.3;  // per-line location offsets, in units of scale

  double missing_duration_fraction = 0.0;
  std::uint64_t seed = 42;

  // Trace mode
  double frame_rate_hz = 60.0;
  double recording_s = 25.0;

  // Both classes drawn from the immature profile.
  static SyntheticSpec no_signal() {
    SyntheticSpec s;
    s.mature = s.immature;
    s.b27_maturity = 0.0;
    return s;
  }

  void validate() const {
    if (n_immature + n_mature + n_b27 == 0) throw Error(ErrorKind::argument, "synthetic spec requests no samples");
    if (cell_lines.empty() || cell_lines.size() != cell_line_weights.size())
      throw Error(ErrorKind::argument, "cell lines and weights must be non-empty and of equal length");
    for (double w : cell_line_weights)
      if (!(w > 0.0)) throw Error(ErrorKind::argument, "cell line weights must be positive");
    for (const auto* profile : {&immature, &mature})
      for (const auto& d : *profile)
        if (!(d.scale > 0.0) || !(d.location > 0.0))
          throw Error(ErrorKind::argument, "feature locations and scales must be positive");
    if (!(missing_duration_fraction >= 0.0 && missing_duration_fraction < 1.0))
      throw Error(ErrorKind::argument, "missing duration fraction must lie in [0, 1)");
    if (!(frame_rate_hz > 0.0 && recording_s > 0.0)) throw Error(ErrorKind::argument, "bad trace timing");
  }
};

namespace detail {

inline std::size_t weighted_index(Rng& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

// Keeps the vector physically consistent: rise times within their phase, beating
// duration covering both phases, everything positive.
inline FeatureVector make_consistent(std::array<double, kFeatureCount> v, const ClassProfile& ref) {
  for (std::size_t j = 0; j < kFeatureCount; ++j) v[j] = std::max(v[j], 0.05 * ref[j].location);
  auto f = FeatureVector::from_values(v);
  f.c_rise_time = std::min(f.c_rise_time, 0.9 * f.c_time);
  f.r_rise_time = std::min(f.r_rise_time, 0.9 * f.r_time);
  f.beating_duration = std::max(f.beating_duration, f.c_time + f.r_time);
  return f;
}

}  // namespace detail

inline std::vector<Sample> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  auto rng = Rng::stream(spec.seed, "synthetic");

  std::vector<std::array<double, kFeatureCount>> line_offset(spec.cell_lines.size());
  for (auto& off : line_offset)
    for (auto& o : off) o = rng.normal() * spec.cell_line_effect;

  ClassProfile b27 = spec.immature;
  for (std::size_t j = 0; j < kFeatureCount; ++j)
    b27[j].location += spec.b27_maturity * (spec.mature[j].location - spec.immature[j].location);

  std::vector<Sample> out;
  auto emit = [&](Group group, const ClassProfile& profile, std::size_t n, const char* prefix) {
    for (std::size_t i = 0; i < n; ++i) {
      Sample s;
      char id[32];
      std::snprintf(id, sizeof id, "%s%04zu", prefix, i + 1);
      s.video_id = id;
      s.group = group;
      const std::size_t line = detail::weighted_index(rng, spec.cell_line_weights);
      s.cell_line = spec.cell_lines[line];
      std::array<double, kFeatureCount> v{};
      for (std::size_t j = 0; j < kFeatureCount; ++j)
        v[j] = profile[j].location + profile[j].scale * (line_offset[line][j] + rng.normal());
      s.features = detail::make_consistent(v, profile);
      if (spec.missing_duration_fraction > 0.0 && rng.uniform() < spec.missing_duration_fraction)
        s.features.beating_duration = std::numeric_limits<double>::quiet_NaN();
      out.push_back(std::move(s));
    }
  };
  emit(Group::d21_b27, spec.immature, spec.n_immature, "imm");
  emit(Group::d42_mm, spec.mature, spec.n_mature, "mat");
  emit(Group::d42_b27, b27, spec.n_b27, "b27");
  return out;
}

// ---------------------------------------------------------------------------
// Trace mode

struct SyntheticVideo {
  Sample sample;  // features are the exact targets of the rendered waveform
  MotionTrace trace;
  std::vector<BeatCycle> cycles;
};

// Renders one video: identical cycles of a contraction pulse, a flat plateau, and a
// relaxation pulse on a zero baseline. Each pulse steps from 0 to a pedestal of
// kPedestal * peak on its first sample, ramps linearly to the peak, and back down to
// the pedestal on its last interior sample, so every breakpoint lies on the sample
// grid and a baseline threshold below the pedestal recovers the phase boundaries.
inline constexpr double kPedestal = 0.25;

inline SyntheticVideo render_trace(const Sample& target, double frame_rate_hz, double recording_s,
                                   double default_plateau_s = 0.05) {
  const double dt = 1.0 / frame_rate_hz;
  const auto& f = target.features;
  auto steps = [&](double seconds, long min_steps) { return std::max(min_steps, std::lround(seconds / dt)); };
  const long c_rise = steps(f.c_rise_time, 1);
  const long c_fall = steps(f.c_time - f.c_rise_time, 1);
  const double plateau = f.beating_duration_missing() ? default_plateau_s : plateau_time(f);
  const long hold = steps(std::max(0.0, plateau), 0);
  const long r_rise = steps(f.r_rise_time, 1);
  const long r_fall = steps(f.r_time - f.r_rise_time, 1);
  const long cycle_len = c_rise + c_fall + hold + r_rise + r_fall;
  const long period = std::max(cycle_len + 2, steps(60.0 / f.beating_rate, 1));
  const long n = std::max(cycle_len + 4, std::lround(recording_s * frame_rate_hz));
  const long first = std::min(std::lround(0.5 * frame_rate_hz), std::max(1L, n - cycle_len - 2));

  SyntheticVideo v;
  v.sample = target;
  v.trace.t.resize(static_cast<std::size_t>(n));
  v.trace.speed.assign(static_cast<std::size_t>(n), 0.0);
  for (long i = 0; i < n; ++i) v.trace.t[static_cast<std::size_t>(i)] = static_cast<double>(i) * dt;
  auto at = [&](long k) -> double& { return v.trace.speed[static_cast<std::size_t>(k)]; };
  // Samples start+1 .. peak rise from the pedestal to the peak; peak .. end-1 fall back.
  auto pulse = [&](long start, long peak, long end, double height) {
    const double lo = kPedestal * height;
    for (long k = start + 1; k <= peak; ++k)
      at(k) = peak - start == 1 ? height : lo + (height - lo) * static_cast<double>(k - start - 1) / static_cast<double>(peak - start - 1);
    for (long k = peak; k < end; ++k)
      at(k) = end - peak == 1 ? height : height - (height - lo) * static_cast<double>(k - peak) / static_cast<double>(end - peak - 1);
  };
  for (long s = first; s + cycle_len < n - 1; s += period) {
    const long cp = s + c_rise, ce = cp + c_fall, rs = ce + hold, rp = rs + r_rise, re = rp + r_fall;
    pulse(s, cp, ce, f.max_c);
    pulse(rs, rp, re, f.max_r);
    v.cycles.push_back({s * dt, cp * dt, ce * dt, rs * dt, rp * dt, re * dt});
  }

  // Trapezoid area of one pulse: interior samples times dt (both ends are zero).
  auto area = [&](long up, long down, double height) {
    const double lo = kPedestal * height;
    const double rise = up == 1 ? height : 0.5 * static_cast<double>(up) * (lo + height);
    const double fall = down == 1 ? 0.0 : static_cast<double>(down - 1) * height - 0.5 * (height - lo) * static_cast<double>(down);
    return (rise + fall) * dt;
  };

  auto& g = v.sample.features;
  g.c_time = static_cast<double>(c_rise + c_fall) * dt;
  g.r_time = static_cast<double>(r_rise + r_fall) * dt;
  g.c_rise_time = static_cast<double>(c_rise) * dt;
  g.r_rise_time = static_cast<double>(r_rise) * dt;
  g.cr_interval = static_cast<double>(c_fall + hold + r_rise) * dt;
  g.beating_duration = static_cast<double>(cycle_len) * dt;
  g.beating_duration_imputed = false;
  g.displacement = area(c_rise, c_fall, f.max_c);
  g.beating_rate = 60.0 * static_cast<double>(v.cycles.size()) / (static_cast<double>(n) * dt);
  return v;
}

inline std::vector<SyntheticVideo> generate_synthetic_traces(const SyntheticSpec& spec) {
  SyntheticSpec complete = spec;
  complete.missing_duration_fraction = 0.0;
  std::vector<SyntheticVideo> out;
  for (const auto& s : generate_synthetic(complete)) out.push_back(render_trace(s, spec.frame_rate_hz, spec.recording_s));
  return out;
}

}  // namespace beatsvm
