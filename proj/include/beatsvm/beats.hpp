#pragma once

// Beat segmentation of a motion-speed trace and the per-video beating features.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "beatsvm/error.hpp"
#include "beatsvm/matrix.hpp"
#include "beatsvm/motion.hpp"

namespace beatsvm {

// One contraction-relaxation event; timestamps in seconds.
struct BeatCycle {
  double c_start = 0.0;
  double c_peak = 0.0;
  double c_end = 0.0;
  double r_start = 0.0;
  double r_peak = 0.0;
  double r_end = 0.0;

  bool ordered() const {
    return c_start < c_peak && c_peak < c_end && c_end <= r_start && r_start < r_peak && r_peak < r_end;
  }

  bool operator==(const BeatCycle&) const = default;
};

inline constexpr std::size_t kFeatureCount = 10;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "max_c",       "c_time",      "max_r",        "r_time", "cr_interval", "beating_duration",
    "c_rise_time", "r_rise_time", "beating_rate", "displacement"};

enum class Feature : std::size_t {
  max_c,
  c_time,
  max_r,
  r_time,
  cr_interval,
  beating_duration,
  c_rise_time,
  r_rise_time,
  beating_rate,
  displacement,
};

struct FeatureVector {
  double max_c = 0.0;             // um/s
  double c_time = 0.0;            // s
  double max_r = 0.0;             // um/s
  double r_time = 0.0;            // s
  double cr_interval = 0.0;       // s
  double beating_duration = 0.0;  // s; NaN when not measured
  double c_rise_time = 0.0;       // s
  double r_rise_time = 0.0;       // s
  double beating_rate = 0.0;      // beats/min
  double displacement = 0.0;      // um
  bool beating_duration_imputed = false;

  bool beating_duration_missing() const { return std::isnan(beating_duration); }

  std::array<double, kFeatureCount> values() const {
    return {max_c,       c_time,      max_r,        r_time,      cr_interval, beating_duration,
            c_rise_time, r_rise_time, beating_rate, displacement};
  }

  static FeatureVector from_values(const std::array<double, kFeatureCount>& v) {
    FeatureVector f;
    f.max_c = v[0];
    f.c_time = v[1];
    f.max_r = v[2];
    f.r_time = v[3];
    f.cr_interval = v[4];
    f.beating_duration = v[5];
    f.c_rise_time = v[6];
    f.r_rise_time = v[7];
    f.beating_rate = v[8];
    f.displacement = v[9];
    return f;
  }

  double operator[](Feature f) const { return values()[static_cast<std::size_t>(f)]; }
};

// Human-supplied cycles keyed by video id.
using AnnotationSet = std::map<std::string, std::vector<BeatCycle>>;

// ---------------------------------------------------------------------------
// Trace helpers

namespace detail {

// Piecewise-linear value of the trace at time `t` (clamped to the trace range).
inline double speed_at(const MotionTrace& trace, double t) {
  if (t <= trace.t.front()) return trace.speed.front();
  if (t >= trace.t.back()) return trace.speed.back();
  const auto it = std::upper_bound(trace.t.begin(), trace.t.end(), t);
  const auto k = static_cast<std::size_t>(it - trace.t.begin());
  const double t0 = trace.t[k - 1], t1 = trace.t[k];
  const double w = (t - t0) / (t1 - t0);
  return trace.speed[k - 1] * (1.0 - w) + trace.speed[k] * w;
}

// Maximum and trapezoidal integral of the piecewise-linear trace over [a, b].
struct Segment {
  double peak = 0.0;
  double integral = 0.0;
};

inline Segment segment_stats(const MotionTrace& trace, double a, double b) {
  Segment s;
  double prev_t = a;
  double prev_v = speed_at(trace, a);
  s.peak = prev_v;
  auto it = std::upper_bound(trace.t.begin(), trace.t.end(), a);
  for (; it != trace.t.end() && *it < b; ++it) {
    const double v = trace.speed[static_cast<std::size_t>(it - trace.t.begin())];
    s.integral += 0.5 * (prev_v + v) * (*it - prev_t);
    s.peak = std::max(s.peak, v);
    prev_t = *it;
    prev_v = v;
  }
  const double vb = speed_at(trace, b);
  s.integral += 0.5 * (prev_v + vb) * (b - prev_t);
  s.peak = std::max(s.peak, vb);
  return s;
}

inline double sample_interval(const MotionTrace& trace) {
  return (trace.t.back() - trace.t.front()) / static_cast<double>(trace.size() - 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Segmentation

struct DetectOptions {
  double min_peak_height = 1.0;   // um/s
  double min_separation_s = 0.1;  // s
  double baseline_fraction = 0.10;
};

// Local maxima above the height floor, thinned so that kept peaks are at least
// min_separation_s apart (taller peaks win). Returns sample indices in time order.
inline std::vector<std::size_t> find_peaks(const MotionTrace& trace, double min_peak_height, double min_separation_s) {
  std::vector<std::size_t> candidates;
  const auto& s = trace.speed;
  for (std::size_t i = 1; i + 1 < s.size(); ++i)
    if (s[i] > s[i - 1] && s[i] >= s[i + 1] && s[i] > min_peak_height) candidates.push_back(i);
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t c : candidates) {
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return std::abs(trace.t[c] - trace.t[k]) >= min_separation_s;
    });
    if (clear) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

inline std::vector<BeatCycle> detect_beats(const MotionTrace& trace, const DetectOptions& opt = {}) {
  if (trace.empty()) throw Error(ErrorKind::empty, "empty motion trace");
  if (!(opt.min_separation_s > 0.0)) throw Error(ErrorKind::argument, "minimum peak separation must be positive");
  const auto peaks = find_peaks(trace, opt.min_peak_height, opt.min_separation_s);
  if (peaks.size() < 2)
    throw Error(ErrorKind::no_beats, "found " + std::to_string(peaks.size()) + " qualifying peak(s), need at least 2");

  const auto& s = trace.speed;
  const std::size_t n = s.size();
  std::vector<BeatCycle> cycles;
  for (std::size_t k = 0; k + 1 < peaks.size(); k += 2) {
    const std::size_t cp = peaks[k];
    const std::size_t rp = peaks[k + 1];
    // Each phase is bounded where the speed falls to a fraction of that phase's peak.
    const double thr_c = opt.baseline_fraction * s[cp];
    const double thr_r = opt.baseline_fraction * s[rp];

    std::size_t cs = cp;
    while (cs > 0 && s[cs] > thr_c) --cs;
    if (s[cs] > thr_c) continue;  // starts before the recording

    std::size_t ce = cp + 1;
    while (ce < rp && s[ce] > thr_c) ++ce;
    std::size_t rs = rp - 1;
    while (rs > ce && s[rs] > thr_r) --rs;
    if (ce == rp || s[rs] > thr_r) {
      // No return to baseline between the phases: split at the valley.
      ce = static_cast<std::size_t>(std::min_element(s.begin() + static_cast<long>(cp) + 1, s.begin() + static_cast<long>(rp)) -
                                    s.begin());
      rs = ce;
    }

    std::size_t re = rp + 1;
    while (re < n && s[re] > thr_r) ++re;
    if (re >= n) continue;  // incomplete trailing cycle

    BeatCycle c{trace.t[cs], trace.t[cp], trace.t[ce], trace.t[rs], trace.t[rp], trace.t[re]};
    if (!c.ordered()) continue;
    if (!cycles.empty() && c.c_start < cycles.back().r_end) continue;
    cycles.push_back(c);
  }
  if (cycles.empty()) throw Error(ErrorKind::no_beats, "no complete contraction/relaxation cycle in trace");
  return cycles;
}

inline std::vector<BeatCycle> apply_annotations(const MotionTrace& trace, const AnnotationSet& ann,
                                                const std::string& video_id) {
  const auto it = ann.find(video_id);
  if (it == ann.end()) throw Error(ErrorKind::annotation, "no annotations for video '" + video_id + "'");
  if (trace.empty()) throw Error(ErrorKind::empty, "empty motion trace");
  const double lo = trace.t.front(), hi = trace.t.back();
  for (std::size_t i = 0; i < it->second.size(); ++i) {
    const auto& c = it->second[i];
    if (!c.ordered())
      throw Error(ErrorKind::annotation, video_id + " cycle " + std::to_string(i) + " violates start<peak<end ordering");
    if (c.c_start < lo || c.r_end > hi)
      throw Error(ErrorKind::annotation, video_id + " cycle " + std::to_string(i) + " lies outside the trace");
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// Features

inline FeatureVector extract_features(const MotionTrace& trace, const std::vector<BeatCycle>& cycles) {
  if (cycles.empty()) throw Error(ErrorKind::no_beats, "no cycles to extract features from");
  if (trace.size() < 2) throw Error(ErrorKind::insufficient_data, "trace needs at least 2 samples");
  std::array<double, kFeatureCount> acc{};
  for (const auto& c : cycles) {
    const auto contraction = detail::segment_stats(trace, c.c_start, c.c_end);
    const auto relaxation = detail::segment_stats(trace, c.r_start, c.r_end);
    acc[0] += contraction.peak;
    acc[1] += c.c_end - c.c_start;
    acc[2] += relaxation.peak;
    acc[3] += c.r_end - c.r_start;
    acc[4] += c.r_peak - c.c_peak;
    acc[5] += c.r_end - c.c_start;
    acc[6] += c.c_peak - c.c_start;
    acc[7] += c.r_peak - c.r_start;
    acc[9] += contraction.integral;
  }
  const double n = static_cast<double>(cycles.size());
  for (auto& v : acc) v /= n;
  const double duration = detail::sample_interval(trace) * static_cast<double>(trace.size());
  acc[8] = 60.0 * n / duration;
  return FeatureVector::from_values(acc);
}

inline FeatureVector impute_beating_duration(FeatureVector features, double mean_plateau_time_s) {
  if (!(mean_plateau_time_s >= 0.0)) throw Error(ErrorKind::argument, "plateau time must be non-negative");
  if (!features.beating_duration_missing())
    throw Error(ErrorKind::argument, "beating duration is already present");
  features.beating_duration = features.c_time + features.r_time + mean_plateau_time_s;
  features.beating_duration_imputed = true;
  return features;
}

// Plateau between the phases of a fully measured vector.
inline double plateau_time(const FeatureVector& f) { return f.beating_duration - f.c_time - f.r_time; }

// ---------------------------------------------------------------------------
// z-normalization

struct ZStats {
  std::vector<double> mean;
  std::vector<double> std;  // population; 0 marks a constant column

  std::size_t size() const { return mean.size(); }

  void apply_inplace(std::span<double> x) const {
    if (x.size() != mean.size()) throw Error(ErrorKind::shape, "feature count does not match normalization stats");
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = std[j] > 0.0 ? (x[j] - mean[j]) / std[j] : 0.0;
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> out(x.begin(), x.end());
    apply_inplace(out);
    return out;
  }

  Matrix apply(const Matrix& m) const {
    Matrix out = m;
    for (std::size_t i = 0; i < out.rows(); ++i) apply_inplace(out.row(i));
    return out;
  }
};

inline ZStats fit_zstats(const Matrix& m) {
  if (m.rows() < 2) throw Error(ErrorKind::insufficient_data, "z-normalization needs at least 2 samples");
  ZStats z;
  z.mean.assign(m.cols(), 0.0);
  z.std.assign(m.cols(), 0.0);
  const double n = static_cast<double>(m.rows());
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, j);
    const double mu = s / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) ss += (m(i, j) - mu) * (m(i, j) - mu);
    z.mean[j] = mu;
    const double sd = std::sqrt(ss / n);
    // Treat round-off-level spread as constant.
    z.std[j] = sd > 1e-12 * std::max(1.0, std::abs(mu)) ? sd : 0.0;
  }
  return z;
}

struct Normalized {
  Matrix matrix;
  ZStats stats;
};

inline Normalized znormalize(const Matrix& m) {
  auto stats = fit_zstats(m);
  return {stats.apply(m), std::move(stats)};
}

// ---------------------------------------------------------------------------
// Annotation file: {"video_id": [[c_start, c_peak, c_end, r_start, r_peak, r_end], ...]}

inline AnnotationSet annotations_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::annotation, "annotation file must be a JSON object");
  AnnotationSet set;
  for (const auto& [id, cycles] : j.items()) {
    if (!cycles.is_array()) throw Error(ErrorKind::annotation, id + ": expected a list of cycles");
    auto& out = set[id];
    for (const auto& c : cycles) {
      if (!c.is_array() || c.size() != 6) throw Error(ErrorKind::annotation, id + ": each cycle needs 6 timestamps");
      const auto v = c.get<std::vector<double>>();
      out.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
    }
  }
  return set;
}

inline nlohmann::json annotations_to_json(const AnnotationSet& set) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, cycles] : set) {
    auto arr = nlohmann::json::array();
    for (const auto& c : cycles) arr.push_back({c.c_start, c.c_peak, c.c_end, c.r_start, c.r_peak, c.r_end});
    j[id] = std::move(arr);
  }
  return j;
}

}  // namespace beatsvm
