#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "beatsvm/report.hpp"
#include "beatsvm/selection.hpp"
#include "beatsvm/synthetic.hpp"

using namespace beatsvm;

namespace {

// f(x) = max_c, with no normalization.
SvmModel max_c_model() {
  SvmModel m;
  m.kernel = KernelConfig::linear();
  Matrix sv(1, kFeatureCount, 0.0);
  sv(0, 0) = 1.0;
  m.support_vectors = sv;
  m.dual_coefs = {1.0};
  return m;
}

Sample sample_with(const std::string& id, Group g, double max_c) {
  Sample s;
  s.video_id = id;
  s.group = g;
  s.cell_line = "L1";
  std::array<double, kFeatureCount> v{};
  v.fill(1.0);
  v[0] = max_c;
  s.features = FeatureVector::from_values(v);
  return s;
}

SyntheticSpec separable_spec() {
  SyntheticSpec spec;
  spec.n_immature = spec.n_mature = 40;
  spec.n_b27 = 10;
  spec.cell_line_effect = 0.0;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    spec.immature[j].scale *= 0.15;
    spec.mature[j].scale *= 0.15;
  }
  return spec;
}

double mass_where(const DistanceReport& r, const KdeCurve& c, bool positive) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < r.kde_grid.size(); ++i) {
    x.push_back(r.kde_grid[i]);
    y.push_back((r.kde_grid[i] > 0.0) == positive ? c.density[i] : 0.0);
  }
  return trapezoid(x, y);
}

}  // namespace

TEST(Kde, SinglePointModeAtItsDistance) {
  const std::vector<Sample> s{sample_with("a", Group::d42_mm, 2.0)};
  const auto r = distance_report(max_c_model(), s);
  ASSERT_EQ(r.kde.size(), 1u);
  EXPECT_TRUE(r.kde[0].fallback_bandwidth);
  EXPECT_DOUBLE_EQ(r.kde[0].bandwidth, 0.25);
  ASSERT_EQ(r.warnings.size(), 1u);
  const auto peak = std::max_element(r.kde[0].density.begin(), r.kde[0].density.end()) - r.kde[0].density.begin();
  const double spacing = r.kde_grid[1] - r.kde_grid[0];
  EXPECT_NEAR(r.kde_grid[static_cast<std::size_t>(peak)], 2.0, spacing);
  EXPECT_DOUBLE_EQ(r.entries[0].distance, 2.0);
}

TEST(Kde, GaussianAgainstClosedForm) {
  const std::vector<double> d{0.0, 1.0};
  const double h = 0.5;
  const double expect = (std::exp(-0.5 * 0.25 / 0.25) + std::exp(-0.5 * 0.25 / 0.25)) / (2 * h * std::sqrt(2 * std::numbers::pi));
  EXPECT_NEAR(gaussian_kde(d, h, 0.5), expect, 1e-15);
}

TEST(Kde, ScottBandwidth) {
  const std::vector<double> d{1.0, 2.0, 3.0, 4.0, 5.0};
  EXPECT_NEAR(*scott_bandwidth(d), std::sqrt(2.5) * std::pow(5.0, -0.2), 1e-14);
  EXPECT_FALSE(scott_bandwidth({1.0}).has_value());
  EXPECT_FALSE(scott_bandwidth({1.0, 1.0}).has_value());
}

TEST(Kde, CurvesIntegrateToOne) {
  const auto s = generate_synthetic(SyntheticSpec{});
  const auto model = fit(select(s, [&] {
                           std::vector<std::string> ids;
                           for (const auto& x : s)
                             if (x.group != Group::d42_b27) ids.push_back(x.video_id);
                           return ids;
                         }()),
                         Hyperparams{});
  const auto r = distance_report(model, s);
  ASSERT_EQ(r.kde.size(), 3u);
  for (const auto& c : r.kde) EXPECT_NEAR(trapezoid(r.kde_grid, c.density), 1.0, 1e-3) << to_string(c.group);
}

TEST(Report, SignMatchesPrediction) {
  const auto s = generate_synthetic(separable_spec());
  std::vector<Sample> labeled;
  for (const auto& x : s)
    if (x.group != Group::d42_b27) labeled.push_back(x);
  const auto model = fit(labeled, Hyperparams{});
  const auto r = distance_report(model, s);
  ASSERT_EQ(r.entries.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(r.entries[i].predicted, predict(model, model.normalization.apply(s[i].features.values())));
    EXPECT_EQ(r.entries[i].predicted == Label::mature, r.entries[i].distance > 0.0);
  }
}

TEST(Report, SeparableClassesHaveDisjointSignSupport) {
  const auto s = generate_synthetic(separable_spec());
  std::vector<Sample> labeled;
  for (const auto& x : s)
    if (x.group != Group::d42_b27) labeled.push_back(x);
  const auto model = fit(labeled, Hyperparams{});
  DistanceReportOptions opt;
  opt.groups = {Group::d21_b27, Group::d42_mm};
  const auto r = distance_report(model, labeled, opt);
  for (const auto& e : r.entries) EXPECT_EQ(e.distance > 0.0, e.group == Group::d42_mm) << e.id;
  for (const auto& c : r.kde) {
    const bool mature = c.group == Group::d42_mm;
    EXPECT_LT(mass_where(r, c, !mature), 1e-3) << to_string(c.group);
  }
}

TEST(Report, RequestedGroupMustBePresent) {
  const std::vector<Sample> s{sample_with("a", Group::d42_mm, 2.0), sample_with("b", Group::d42_mm, 1.0)};
  DistanceReportOptions opt;
  opt.groups = {Group::d42_b27};
  try {
    distance_report(max_c_model(), s, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::size);
  }
}

TEST(Histogram, CountsCoverEverySample) {
  std::vector<Sample> s;
  for (int i = 0; i < 30; ++i)
    s.push_back(sample_with("s" + std::to_string(i), i % 3 ? Group::d42_mm : Group::d21_b27, 0.1 * i - 1.0));
  DistanceReportOptions opt;
  opt.bins = 6;
  const auto r = distance_report(max_c_model(), s, opt);
  ASSERT_EQ(r.histogram.edges.size(), 7u);
  EXPECT_DOUBLE_EQ(r.histogram.edges.front(), -1.0);
  EXPECT_NEAR(r.histogram.edges.back(), 1.9, 1e-12);
  std::size_t total = 0;
  for (const auto& [g, c] : r.histogram.counts) {
    EXPECT_EQ(c.size(), 6u);
    for (auto n : c) total += n;
  }
  EXPECT_EQ(total, 30u);
  // 30 evenly spaced values in 6 bins: 5 each.
  for (std::size_t b = 0; b < 6; ++b) {
    std::size_t n = 0;
    for (const auto& [g, c] : r.histogram.counts) n += c[b];
    EXPECT_EQ(n, 5u) << b;
  }
}

TEST(Histogram, FreedmanDiaconisDefault) {
  std::vector<DistanceEntry> e;
  for (int i = 0; i < 100; ++i) e.push_back({"x", Group::d42_mm, static_cast<double>(i), Label::mature});
  // IQR 49.5, width 2 * 49.5 / 100^(1/3), range 99
  const auto h = make_histogram(e, 0);
  const double width = 99.0 / std::pow(100.0, 1.0 / 3.0);
  EXPECT_EQ(h.edges.size() - 1, static_cast<std::size_t>(std::ceil(99.0 / width)));
}

TEST(Output, CsvAndSvgShapes) {
  std::vector<Sample> s{sample_with("a", Group::d42_mm, 2.0), sample_with("b", Group::d21_b27, -1.0),
                        sample_with("c", Group::d21_b27, -1.5)};
  const auto r = distance_report(max_c_model(), s);
  const auto d = distances_to_csv(r);
  EXPECT_EQ(d.substr(0, d.find('\n')), "id,group,distance,predicted");
  EXPECT_NE(d.find("a,d42_mm,2,mature"), std::string::npos);
  const auto k = kde_to_csv(r);
  EXPECT_EQ(std::count(k.begin(), k.end(), '\n'), 513);
  const auto svg = distance_report_svg(r);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
