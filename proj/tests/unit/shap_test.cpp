#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "beatsvm/selection.hpp"
#include "beatsvm/shap.hpp"
#include "beatsvm/synthetic.hpp"
#include "oracles/shapley.hpp"

using namespace beatsvm;

namespace {

BackgroundSet background(const std::vector<std::vector<double>>& rows) { return {Matrix::from_rows(rows)}; }

struct Linear {
  std::vector<double> w;
  double b = 0;
  double operator()(std::span<const double> v) const {
    double s = b;
    for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * v[i];
    return s;
  }
};

std::vector<double> column_means(const std::vector<std::vector<double>>& rows) {
  std::vector<double> mu(rows.front().size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) mu[j] += r[j] / static_cast<double>(rows.size());
  return mu;
}

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::input;
}

}  // namespace

TEST(Coalition, FullSetIsModelOutput) {
  std::mt19937_64 gen(1);
  const auto f = oracle::random_probe(gen, 4);
  const auto x = oracle::random_rows(gen, 1, 4)[0];
  const auto bg = background(oracle::random_rows(gen, 7, 4));
  EXPECT_DOUBLE_EQ(coalition_value(f, x, std::uint64_t{0b1111}, bg), f(x));
}

TEST(Coalition, EmptySetIsBackgroundMean) {
  std::mt19937_64 gen(2);
  const auto f = oracle::random_probe(gen, 3);
  const auto rows = oracle::random_rows(gen, 5, 3);
  const auto x = oracle::random_rows(gen, 1, 3)[0];
  double mean = 0;
  for (const auto& r : rows) mean += f(r) / 5.0;
  EXPECT_NEAR(coalition_value(f, x, std::uint64_t{0}, background(rows)), mean, 1e-14);
}

TEST(Coalition, AdditiveExample) {
  const Linear f{{1.0, 1.0}};
  const std::vector<double> x{3.0, 5.0};
  EXPECT_DOUBLE_EQ(coalition_value(f, x, std::vector<std::size_t>{0}, background({{0.0, 0.0}})), 3.0);
}

TEST(Coalition, EmptyBackgroundIsSizeError) {
  const Linear f{{1.0}};
  const std::vector<double> x{1.0};
  EXPECT_EQ(kind_of([&] { coalition_value(f, x, std::uint64_t{0}, BackgroundSet{Matrix(0, 1)}); }), ErrorKind::size);
}

TEST(Weights, KnownValues) {
  EXPECT_DOUBLE_EQ(shapley_weight(0, 10), 1.0 / 10.0);
  EXPECT_DOUBLE_EQ(shapley_weight(4, 10), 1.0 / 1260.0);
  EXPECT_DOUBLE_EQ(shapley_weight(9, 10), 1.0 / 10.0);
  EXPECT_DOUBLE_EQ(shapley_weight(0, 1), 1.0);
}

TEST(Weights, NormalizationIdentity) {
  for (int p = 1; p <= 20; ++p) {
    double total = 0, binom = 1;
    for (int s = 0; s < p; ++s) {
      total += binom * shapley_weight(s, p);
      binom = binom * (p - 1 - s) / (s + 1);
    }
    EXPECT_NEAR(total, 1.0, 1e-12) << p;
  }
}

TEST(Weights, OutOfRangeIsArgumentError) {
  EXPECT_EQ(kind_of([] { shapley_weight(10, 10); }), ErrorKind::argument);
  EXPECT_EQ(kind_of([] { shapley_weight(-1, 10); }), ErrorKind::argument);
}

TEST(Exact, MatchesPermutationAverage) {
  std::mt19937_64 gen(3);
  for (int t = 0; t < 20; ++t) {
    const std::size_t p = 2 + t % 4;
    const auto f = oracle::random_probe(gen, p);
    const auto rows = oracle::random_rows(gen, 6, p);
    const auto x = oracle::random_rows(gen, 1, p)[0];
    const auto e = exact_shapley(f, x, background(rows));
    const auto ref = oracle::permutation_shapley(f, x, rows);
    for (std::size_t i = 0; i < p; ++i) EXPECT_NEAR(e.phi[i], ref[i], 1e-10) << "case " << t;
  }
}

TEST(Exact, LinearClosedForm) {
  std::mt19937_64 gen(4);
  for (std::size_t p : {3u, 10u}) {
    const auto rows = oracle::random_rows(gen, 12, p);
    const auto x = oracle::random_rows(gen, 1, p)[0];
    Linear f{oracle::random_rows(gen, 1, p)[0], 0.7};
    const auto e = exact_shapley(f, x, background(rows));
    const auto mu = column_means(rows);
    for (std::size_t i = 0; i < p; ++i) EXPECT_NEAR(e.phi[i], f.w[i] * (x[i] - mu[i]), 1e-9);
  }
}

TEST(Exact, Axioms) {
  std::mt19937_64 gen(5);
  const std::size_t p = 6;
  for (int t = 0; t < 20; ++t) {
    const auto g = oracle::random_probe(gen, p);
    auto rows = oracle::random_rows(gen, 8, p);
    auto x = oracle::random_rows(gen, 1, p)[0];

    // Efficiency.
    const auto e = exact_shapley(g, x, background(rows));
    double sum = e.base_value;
    for (double v : e.phi) sum += v;
    EXPECT_NEAR(sum, g(x), 1e-9);

    // Dummy: feature 2 equal in x and every background row.
    for (auto& r : rows) r[2] = x[2];
    EXPECT_NEAR(exact_shapley(g, x, background(rows)).phi[2], 0.0, 1e-12);

    // Symmetry: model symmetric in features 0 and 1, identical columns.
    auto sym = [&](std::span<const double> v) {
      std::vector<double> s(v.begin(), v.end());
      std::swap(s[0], s[1]);
      return g(v) + g(s);
    };
    for (auto& r : rows) r[1] = r[0];
    x[1] = x[0];
    const auto es = exact_shapley(sym, x, background(rows));
    EXPECT_NEAR(es.phi[0], es.phi[1], 1e-9);

    // Linearity.
    const auto h = oracle::random_probe(gen, p);
    auto both = [&](std::span<const double> v) { return g(v) + h(v); };
    const auto eg = exact_shapley(g, x, background(rows));
    const auto eh = exact_shapley(h, x, background(rows));
    const auto eb = exact_shapley(both, x, background(rows));
    for (std::size_t i = 0; i < p; ++i) EXPECT_NEAR(eb.phi[i], eg.phi[i] + eh.phi[i], 1e-9);
  }
}

TEST(Exact, ZeroWeightFeatureGetsNothing) {
  std::mt19937_64 gen(6);
  const auto rows = oracle::random_rows(gen, 5, 4);
  const auto x = oracle::random_rows(gen, 1, 4)[0];
  const auto e = exact_shapley(Linear{{1.0, 0.0, -2.0, 0.5}}, x, background(rows));
  EXPECT_NEAR(e.phi[1], 0.0, 1e-9);
}

TEST(Exact, ThreadCountDoesNotChangeResult) {
  std::mt19937_64 gen(7);
  const auto f = oracle::random_probe(gen, 8);
  const auto rows = oracle::random_rows(gen, 10, 8);
  const auto x = oracle::random_rows(gen, 1, 8)[0];
  const auto a = exact_shapley(f, x, background(rows), 1);
  const auto b = exact_shapley(f, x, background(rows), 4);
  EXPECT_EQ(a.phi, b.phi);
}

TEST(Exact, TooManyFeaturesIsSizeError) {
  const std::vector<double> x(21, 0.0);
  const Linear f{std::vector<double>(21, 1.0)};
  EXPECT_EQ(kind_of([&] { exact_shapley(f, x, BackgroundSet{Matrix(1, 21)}); }), ErrorKind::size);
}

TEST(Exact, ExplainsTrainedSvm) {
  SyntheticSpec spec;
  spec.n_immature = spec.n_mature = 20;
  spec.n_b27 = 0;
  const auto s = generate_synthetic(spec);
  const auto model = fit(s, Hyperparams{});
  const auto x = znormalize(feature_matrix(s)).matrix;
  const BackgroundSet bg{x};
  const auto e = exact_shapley(SvmDecision{&model}, x.row(0), bg);
  ASSERT_EQ(e.phi.size(), kFeatureCount);
  double sum = e.base_value;
  for (double v : e.phi) sum += v;
  EXPECT_NEAR(sum, decision_function(model, x.row(0)), 1e-9);
  EXPECT_NEAR(e.fx, decision_raw(model, s[0].features.values()), 1e-9);
}

TEST(Sampled, AgreesWithExactWithinThreeStandardErrors) {
  std::mt19937_64 gen(8);
  const std::size_t p = 10;
  const auto f = oracle::random_probe(gen, p);
  const auto rows = oracle::random_rows(gen, 10, p);
  const auto x = oracle::random_rows(gen, 1, p)[0];
  const auto exact = exact_shapley(f, x, background(rows));
  const auto est = sampled_shapley(f, x, background(rows), 2000, 42);
  for (std::size_t i = 0; i < p; ++i) EXPECT_LE(std::abs(est.estimate.phi[i] - exact.phi[i]), 3.0 * est.std_error[i] + 1e-12) << i;
}

TEST(Sampled, DeterministicGivenSeed) {
  std::mt19937_64 gen(9);
  const auto f = oracle::random_probe(gen, 5);
  const auto rows = oracle::random_rows(gen, 4, 5);
  const auto x = oracle::random_rows(gen, 1, 5)[0];
  const auto a = sampled_shapley(f, x, background(rows), 50, 11);
  const auto b = sampled_shapley(f, x, background(rows), 50, 11);
  EXPECT_EQ(a.estimate.phi, b.estimate.phi);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(Sampled, SingleFeatureIsExact) {
  const auto f = [](std::span<const double> v) { return std::sin(v[0]) * 3.0; };
  const std::vector<double> x{0.4};
  const auto bg = background({{1.0}, {-0.5}, {2.0}});
  const auto r = sampled_shapley(f, x, bg, 3, 1);
  EXPECT_DOUBLE_EQ(r.estimate.phi[0], r.estimate.fx - r.estimate.base_value);
}

TEST(Export, BeeswarmRanksByMeanAbsolutePhi) {
  std::vector<ShapExplanation> ex(2);
  ex[0].phi = {0.1, -0.5, 0.2};
  ex[1].phi = {0.1, 0.3, -0.6};
  const Matrix raw{{1, 2, 3}, {4, 5, 6}};
  const auto rows = beeswarm_export(ex, {"a", "b"}, raw, {"f0", "f1", "f2"});
  ASSERT_EQ(rows.size(), 6u);
  // mean |phi|: f0 0.1, f1 0.4, f2 0.4 (tie keeps input order)
  EXPECT_EQ(rows[0].feature, "f1");
  EXPECT_EQ(rows[1].feature, "f2");
  EXPECT_EQ(rows[2].feature, "f0");
  EXPECT_EQ(rows[0].rank, 1u);
  EXPECT_EQ(rows[2].rank, 3u);
  EXPECT_EQ(rows[3].sample_id, "b");
  EXPECT_DOUBLE_EQ(rows[3].feature_value, 5.0);
  EXPECT_DOUBLE_EQ(rows[3].shap_value, 0.3);
}

TEST(Export, BeeswarmSingleSampleAndTies) {
  std::vector<ShapExplanation> one(1);
  one[0].phi = {0.1, -0.9, 0.5};
  const Matrix raw{{0, 0, 0}};
  const auto r = beeswarm_export(one, {"s"}, raw, {"a", "b", "c"});
  EXPECT_EQ(r[0].feature, "b");
  EXPECT_EQ(r[1].feature, "c");
  EXPECT_EQ(r[2].feature, "a");
  one[0].phi = {0.0, 0.0, 0.0};
  const auto z = beeswarm_export(one, {"s"}, raw, {"a", "b", "c"});
  EXPECT_EQ(z[0].feature, "a");
  EXPECT_EQ(z[2].feature, "c");
  EXPECT_EQ(beeswarm_to_csv(z).substr(0, 44), "sample_id,feature,shap_value,feature_value,r");
}

TEST(Export, WaterfallTelescopes) {
  std::mt19937_64 gen(10);
  const auto rows = oracle::random_rows(gen, 6, 4);
  const auto x = oracle::random_rows(gen, 1, 4)[0];
  const Linear f{{2.0, -1.0, 0.0, 0.5}, 0.3};
  const auto e = exact_shapley(f, x, background(rows));
  const auto w = waterfall_export(e, {"a", "b", "c", "d"});
  ASSERT_EQ(w.size(), 4u);
  EXPECT_NEAR(w.back().cumulative, e.fx, 1e-9);
  const auto mu = column_means(rows);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (k > 0) {
      EXPECT_GE(std::abs(w[k - 1].phi), std::abs(w[k].phi));
    }
    const std::size_t j = static_cast<std::size_t>(w[k].feature[0] - 'a');
    EXPECT_NEAR(w[k].phi, f.w[j] * (x[j] - mu[j]), 1e-9);
    EXPECT_DOUBLE_EQ(w[k].normalized_value, x[j]);
  }
}

TEST(Export, WaterfallSingleNonzero) {
  ShapExplanation e;
  e.phi = {0.0, 0.7, 0.0};
  e.base_value = 1.0;
  const auto w = waterfall_export(e, {"a", "b", "c"});
  EXPECT_EQ(w[0].feature, "b");
  EXPECT_DOUBLE_EQ(w[0].cumulative, 1.7);
  EXPECT_DOUBLE_EQ(w[2].cumulative, 1.7);
}

TEST(Export, RescaledOutputs) {
  const auto r = rescaled_outputs({-2.0, 0.0, 2.0});
  EXPECT_DOUBLE_EQ(r[0], 0.0);
  EXPECT_DOUBLE_EQ(r[1], 0.5);
  EXPECT_DOUBLE_EQ(r[2], 1.0);
  EXPECT_EQ(rescaled_outputs({1.0, 1.0}), (std::vector<double>{0.0, 0.0}));
}
