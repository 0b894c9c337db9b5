#pragma once

// Signed decision distances per sample, their histogram, and Gaussian KDE curves per group.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "beatsvm/dataset.hpp"
#include "beatsvm/error.hpp"
#include "beatsvm/io.hpp"
#include "beatsvm/svm.hpp"

namespace beatsvm {

struct DistanceEntry {
  std::string id;
  Group group = Group::d21_b27;
  double distance = 0.0;
  Label predicted = Label::immature;
};

struct Histogram {
  std::vector<double> edges;                          // bins + 1
  std::map<Group, std::vector<std::size_t>> counts;  // per group, one per bin
};

struct KdeCurve {
  Group group = Group::d21_b27;
  double bandwidth = 0.0;
  bool fallback_bandwidth = false;
  std::vector<double> density;  // on DistanceReport::kde_grid
};

struct DistanceReport {
  std::vector<DistanceEntry> entries;
  Histogram histogram;
  std::vector<double> kde_grid;
  std::vector<KdeCurve> kde;
  std::vector<std::string> warnings;
};

struct DistanceReportOptions {
  std::size_t bins = 0;                  // 0 = Freedman-Diaconis
  std::optional<double> bandwidth;       // unset = Scott's rule per group
  double fallback_bandwidth = 0.25;      // used when Scott's rule is undefined
  std::size_t grid_points = 512;
  double grid_padding_bandwidths = 4.0;  // grid spans data range +- this many bandwidths
  std::vector<Group> groups;             // empty = every group present
};

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Scott's rule: sample sd * n^(-1/5). Undefined (nullopt) for n < 2 or zero spread.
inline std::optional<double> scott_bandwidth(const std::vector<double>& v) {
  if (v.size() < 2) return std::nullopt;
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) return std::nullopt;
  return sd * std::pow(n, -0.2);
}

inline double gaussian_kde(const std::vector<double>& data, double bandwidth, double at) {
  const double norm = 1.0 / (static_cast<double>(data.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  double s = 0.0;
  for (double x : data) {
    const double u = (at - x) / bandwidth;
    s += std::exp(-0.5 * u * u);
  }
  return s * norm;
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

inline Histogram make_histogram(const std::vector<DistanceEntry>& entries, std::size_t bins) {
  std::vector<double> d;
  for (const auto& e : entries) d.push_back(e.distance);
  const auto [lo_it, hi_it] = std::minmax_element(d.begin(), d.end());
  double lo = *lo_it, hi = *hi_it;
  if (bins == 0) {
    const double iqr = quantile(d, 0.75) - quantile(d, 0.25);
    const double width = 2.0 * iqr * std::pow(static_cast<double>(d.size()), -1.0 / 3.0);
    if (width > 0.0 && hi > lo)
      bins = static_cast<std::size_t>(std::ceil((hi - lo) / width));
    else  // Sturges
      bins = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(d.size())))) + 1;
    bins = std::clamp<std::size_t>(bins, 1, 1000);
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins));
  for (const auto& e : entries) {
    auto& c = h.counts[e.group];
    if (c.empty()) c.assign(bins, 0);
    auto k = static_cast<std::size_t>((e.distance - lo) / (hi - lo) * static_cast<double>(bins));
    ++c[std::min(k, bins - 1)];
  }
  return h;
}

inline DistanceReport distance_report(const SvmModel& model, const std::vector<Sample>& samples,
                                      const DistanceReportOptions& opt = {}) {
  if (samples.empty()) throw Error(ErrorKind::size, "no samples for the distance report");
  DistanceReport rep;
  std::map<Group, std::vector<double>> by_group;
  for (const auto& s : samples) {
    const auto v = s.features.values();
    const double f = decision_raw(model, v);
    rep.entries.push_back({s.video_id, s.group, f, label_for(f)});
    by_group[s.group].push_back(f);
  }
  for (Group g : opt.groups)
    if (!by_group.count(g)) throw Error(ErrorKind::size, std::string("no samples in group ") + to_string(g));

  rep.histogram = make_histogram(rep.entries, opt.bins);

  double max_bw = 0.0;
  for (const auto& [g, d] : by_group) {
    if (!opt.groups.empty() && std::find(opt.groups.begin(), opt.groups.end(), g) == opt.groups.end()) continue;
    KdeCurve c;
    c.group = g;
    if (opt.bandwidth) {
      c.bandwidth = *opt.bandwidth;
    } else if (auto bw = scott_bandwidth(d)) {
      c.bandwidth = *bw;
    } else {
      c.bandwidth = opt.fallback_bandwidth;
      c.fallback_bandwidth = true;
      rep.warnings.push_back(std::string("group ") + to_string(g) + ": Scott bandwidth undefined for " +
                             std::to_string(d.size()) + " sample(s), using fixed bandwidth " +
                             io::format_double(opt.fallback_bandwidth, 6));
    }
    max_bw = std::max(max_bw, c.bandwidth);
    rep.kde.push_back(std::move(c));
  }
  if (!(max_bw > 0.0)) throw Error(ErrorKind::argument, "KDE bandwidth must be positive");

  double lo = rep.entries.front().distance, hi = lo;
  for (const auto& e : rep.entries) {
    lo = std::min(lo, e.distance);
    hi = std::max(hi, e.distance);
  }
  lo -= opt.grid_padding_bandwidths * max_bw;
  hi += opt.grid_padding_bandwidths * max_bw;
  const std::size_t n = std::max<std::size_t>(opt.grid_points, 2);
  for (std::size_t i = 0; i < n; ++i) rep.kde_grid.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  for (auto& c : rep.kde) {
    const auto& d = by_group[c.group];
    c.density.reserve(n);
    for (double x : rep.kde_grid) c.density.push_back(gaussian_kde(d, c.bandwidth, x));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// CSV / SVG output

inline std::string distances_to_csv(const DistanceReport& r) {
  std::string out = "id,group,distance,predicted\n";
  for (const auto& e : r.entries)
    out += e.id + "," + to_string(e.group) + "," + io::format_double(e.distance) + "," + to_string(e.predicted) + "\n";
  return out;
}

inline std::string histogram_to_csv(const DistanceReport& r) {
  const auto& h = r.histogram;
  std::string out = "bin_lo,bin_hi";
  for (const auto& [g, c] : h.counts) out += std::string(",") + to_string(g);
  out += "\n";
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
    out += io::format_double(h.edges[b]) + "," + io::format_double(h.edges[b + 1]);
    for (const auto& [g, c] : h.counts) out += "," + std::to_string(c[b]);
    out += "\n";
  }
  return out;
}

inline std::string kde_to_csv(const DistanceReport& r) {
  std::string out = "distance";
  for (const auto& c : r.kde) out += std::string(",") + to_string(c.group);
  out += "\n";
  for (std::size_t i = 0; i < r.kde_grid.size(); ++i) {
    out += io::format_double(r.kde_grid[i]);
    for (const auto& c : r.kde) out += "," + io::format_double(c.density[i]);
    out += "\n";
  }
  return out;
}

namespace detail {

inline const char* group_color(Group g) {
  switch (g) {
    case Group::d21_b27: return "#1f77b4";
    case Group::d42_mm: return "#d62728";
    case Group::d42_b27: return "#2ca02c";
  }
  return "#000000";
}

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

// Two panels: stacked histogram of distances (top) and KDE curves (bottom).
inline std::string distance_report_svg(const DistanceReport& r) {
  constexpr double W = 640, H = 480, M = 40, PH = (H - 3 * M) / 2;
  const double lo = r.kde_grid.front(), hi = r.kde_grid.back();
  auto sx = [&](double v) { return M + (v - lo) / (hi - lo) * (W - 2 * M); };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  std::size_t max_count = 1;
  const auto& h = r.histogram;
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
    std::size_t total = 0;
    for (const auto& [g, c] : h.counts) total += c[b];
    max_count = std::max(max_count, total);
  }
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
    double y = M + PH;
    for (const auto& [g, c] : h.counts) {
      const double bh = PH * static_cast<double>(c[b]) / static_cast<double>(max_count);
      y -= bh;
      s += "<rect x=\"" + detail::svg_num(sx(h.edges[b])) + "\" y=\"" + detail::svg_num(y) + "\" width=\"" +
           detail::svg_num(sx(h.edges[b + 1]) - sx(h.edges[b])) + "\" height=\"" + detail::svg_num(bh) +
           "\" fill=\"" + detail::group_color(g) + "\" fill-opacity=\"0.7\"/>\n";
    }
  }

  double max_d = 0.0;
  for (const auto& c : r.kde)
    for (double v : c.density) max_d = std::max(max_d, v);
  const double base = 2 * M + 2 * PH;
  for (const auto& c : r.kde) {
    s += "<polyline fill=\"none\" stroke=\"" + std::string(detail::group_color(c.group)) + "\" points=\"";
    for (std::size_t i = 0; i < r.kde_grid.size(); ++i)
      s += detail::svg_num(sx(r.kde_grid[i])) + "," + detail::svg_num(base - PH * c.density[i] / (max_d > 0 ? max_d : 1)) + " ";
    s += "\"/>\n";
  }
  const double zero = sx(0.0);
  s += "<line x1=\"" + detail::svg_num(zero) + "\" y1=\"" + detail::svg_num(M) + "\" x2=\"" + detail::svg_num(zero) +
       "\" y2=\"" + detail::svg_num(base) + "\" stroke=\"black\" stroke-dasharray=\"4 3\"/>\n";
  double ly = 14;
  for (const auto& c : r.kde) {
    s += "<text x=\"" + detail::svg_num(W - 110) + "\" y=\"" + detail::svg_num(ly) + "\" fill=\"" +
         detail::group_color(c.group) + "\">" + to_string(c.group) + "</text>\n";
    ly += 14;
  }
  s += "<text x=\"" + detail::svg_num(W / 2 - 60) + "\" y=\"" + detail::svg_num(H - 8) + "\">decision function f(x)</text>\n";
  return s + "</svg>\n";
}

}  // namespace beatsvm
