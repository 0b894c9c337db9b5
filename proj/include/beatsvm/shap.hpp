#pragma once

// Shapley attributions of a model output under the interventional value function
//
//   val(S) = mean_b f(x_S, b_{F\S})
//   phi_i  = sum_{S ⊆ F\{i}} |S|! (p-|S|-1)! / p! * (val(S ∪ {i}) - val(S))
//
// computed exactly by enumerating all 2^p coalitions, plus a permutation-sampling
// estimator used as an independent cross-check.

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "beatsvm/error.hpp"
#include "beatsvm/io.hpp"
#include "beatsvm/matrix.hpp"
#include "beatsvm/parallel.hpp"
#include "beatsvm/rng.hpp"
#include "beatsvm/svm.hpp"

namespace beatsvm {

template <class F>
concept ScalarModel = requires(const F& f, std::span<const double> x) {
  { f(x) } -> std::convertible_to<double>;
};

// Decision function of a trained SVM over normalized inputs.
struct SvmDecision {
  const SvmModel* model;
  double operator()(std::span<const double> x) const { return decision_function(*model, x); }
};

struct BackgroundSet {
  Matrix rows;  // normalized feature space

  std::size_t size() const { return rows.rows(); }
};

struct ShapExplanation {
  std::vector<double> phi;
  double base_value = 0.0;
  double fx = 0.0;
  std::vector<double> feature_values;  // normalized
};

struct SampledExplanation {
  ShapExplanation estimate;
  std::vector<double> std_error;
};

inline constexpr std::size_t kMaxExactFeatures = 20;

namespace detail {

inline void check_background(const BackgroundSet& bg, std::size_t p) {
  if (bg.size() == 0) throw Error(ErrorKind::size, "empty background set");
  if (bg.rows.cols() != p)
    throw Error(ErrorKind::shape, "background has " + std::to_string(bg.rows.cols()) + " features, sample has " +
                                      std::to_string(p));
}

}  // namespace detail

// Coalition given as a bitmask over features (bit i set = feature i taken from x).
template <ScalarModel F>
double coalition_value(const F& f, std::span<const double> x, std::uint64_t coalition, const BackgroundSet& bg) {
  detail::check_background(bg, x.size());
  std::vector<double> z(x.size());
  double sum = 0.0;
  for (std::size_t b = 0; b < bg.size(); ++b) {
    const auto row = bg.rows.row(b);
    for (std::size_t j = 0; j < x.size(); ++j) z[j] = (coalition >> j) & 1u ? x[j] : row[j];
    sum += f(std::span<const double>(z));
  }
  return sum / static_cast<double>(bg.size());
}

template <ScalarModel F>
double coalition_value(const F& f, std::span<const double> x, const std::vector<std::size_t>& features,
                       const BackgroundSet& bg) {
  std::uint64_t mask = 0;
  for (auto j : features) {
    if (j >= x.size() || j >= 64) throw Error(ErrorKind::argument, "feature index out of range");
    mask |= std::uint64_t{1} << j;
  }
  return coalition_value(f, x, mask, bg);
}

// s! (p-s-1)! / p!  ==  1 / (p * binom(p-1, s)), with the binomial in exact integers.
inline double shapley_weight(int s, int p) {
  if (p < 1 || p > 62 || s < 0 || s > p - 1)
    throw Error(ErrorKind::argument, "shapley weight needs 0 <= s <= p-1, got s=" + std::to_string(s) +
                                         ", p=" + std::to_string(p));
  const int k = std::min(s, p - 1 - s);
  std::uint64_t binom = 1;
  for (int i = 1; i <= k; ++i) binom = binom * static_cast<std::uint64_t>(p - 1 - k + i) / static_cast<std::uint64_t>(i);
  return 1.0 / (static_cast<double>(p) * static_cast<double>(binom));
}

template <ScalarModel F>
ShapExplanation exact_shapley(const F& f, std::span<const double> x, const BackgroundSet& bg, unsigned threads = 1) {
  const std::size_t p = x.size();
  if (p == 0) throw Error(ErrorKind::argument, "sample has no features");
  if (p > kMaxExactFeatures)
    throw Error(ErrorKind::size, std::to_string(p) + " features exceed the exact enumeration bound of " +
                                     std::to_string(kMaxExactFeatures) + "; use sampled_shapley");
  detail::check_background(bg, p);

  const std::uint64_t full = (std::uint64_t{1} << p) - 1;
  std::vector<double> value(full + 1);
  parallel_for(value.size() - 1, threads, [&](std::size_t mask) { value[mask] = coalition_value(f, x, mask, bg); });
  value[full] = f(x);

  std::vector<double> weight(p);
  for (std::size_t s = 0; s < p; ++s) weight[s] = shapley_weight(static_cast<int>(s), static_cast<int>(p));

  ShapExplanation e;
  e.phi.assign(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    double acc = 0.0;
    for (std::uint64_t mask = 0; mask <= full; ++mask) {
      if (mask & bit) continue;
      acc += weight[static_cast<std::size_t>(std::popcount(mask))] * (value[mask | bit] - value[mask]);
    }
    e.phi[i] = acc;
  }
  e.base_value = value[0];
  e.fx = value[full];
  e.feature_values.assign(x.begin(), x.end());
  return e;
}

// Permutation sampling: each permutation adds features one at a time and records the
// marginal change of val. Reports the per-feature standard error of the mean.
template <ScalarModel F>
SampledExplanation sampled_shapley(const F& f, std::span<const double> x, const BackgroundSet& bg,
                                   std::size_t n_permutations, std::uint64_t seed) {
  const std::size_t p = x.size();
  if (p == 0 || p > 63) throw Error(ErrorKind::argument, "sampled shapley supports 1..63 features");
  if (n_permutations == 0) throw Error(ErrorKind::argument, "need at least one permutation");
  detail::check_background(bg, p);

  auto rng = Rng::stream(seed, "sampled_shapley");
  const double base = coalition_value(f, x, std::uint64_t{0}, bg);
  const double fx = f(x);
  std::vector<double> sum(p, 0.0), sum_sq(p, 0.0);
  std::vector<std::size_t> order(p);
  for (std::size_t perm = 0; perm < n_permutations; ++perm) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::uint64_t mask = 0;
    double prev = base;
    for (std::size_t k = 0; k < p; ++k) {
      mask |= std::uint64_t{1} << order[k];
      const double cur = k + 1 == p ? fx : coalition_value(f, x, mask, bg);
      const double delta = cur - prev;
      sum[order[k]] += delta;
      sum_sq[order[k]] += delta * delta;
      prev = cur;
    }
  }
  SampledExplanation out;
  const double n = static_cast<double>(n_permutations);
  out.estimate.phi.resize(p);
  out.std_error.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    const double mean = sum[i] / n;
    out.estimate.phi[i] = mean;
    const double var = n > 1 ? std::max(0.0, (sum_sq[i] - n * mean * mean) / (n - 1.0)) : 0.0;
    out.std_error[i] = std::sqrt(var / n);
  }
  out.estimate.base_value = base;
  out.estimate.fx = fx;
  out.estimate.feature_values.assign(x.begin(), x.end());
  return out;
}

// ---------------------------------------------------------------------------
// Exports

struct BeeswarmRow {
  std::string sample_id;
  std::string feature;
  double shap_value = 0.0;
  double feature_value = 0.0;  // raw
  std::size_t rank = 0;        // 1 = largest mean |phi|
};

// Feature order by mean |phi| over all explanations, descending; ties keep input order.
inline std::vector<std::size_t> importance_order(const std::vector<ShapExplanation>& explanations) {
  if (explanations.empty()) return {};
  const std::size_t p = explanations.front().phi.size();
  std::vector<double> mean_abs(p, 0.0);
  for (const auto& e : explanations)
    for (std::size_t j = 0; j < p; ++j) mean_abs[j] += std::abs(e.phi[j]);
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean_abs[a] > mean_abs[b]; });
  return order;
}

inline std::vector<BeeswarmRow> beeswarm_export(const std::vector<ShapExplanation>& explanations,
                                                const std::vector<std::string>& sample_ids, const Matrix& raw_values,
                                                const std::vector<std::string>& feature_names) {
  if (explanations.empty()) throw Error(ErrorKind::size, "no explanations to export");
  if (sample_ids.size() != explanations.size() || raw_values.rows() != explanations.size())
    throw Error(ErrorKind::shape, "sample ids / raw values do not match the explanations");
  const std::size_t p = explanations.front().phi.size();
  if (feature_names.size() != p || raw_values.cols() != p)
    throw Error(ErrorKind::shape, "feature names / raw values do not match the explanation width");
  const auto order = importance_order(explanations);
  std::vector<std::size_t> rank(p);
  for (std::size_t r = 0; r < p; ++r) rank[order[r]] = r + 1;
  std::vector<BeeswarmRow> rows;
  for (std::size_t i = 0; i < explanations.size(); ++i)
    for (std::size_t r = 0; r < p; ++r) {
      const std::size_t j = order[r];
      rows.push_back({sample_ids[i], feature_names[j], explanations[i].phi[j], raw_values(i, j), rank[j]});
    }
  return rows;
}

struct WaterfallRow {
  std::string feature;
  double normalized_value = 0.0;
  double phi = 0.0;
  double cumulative = 0.0;  // base_value + phi of this and all earlier rows
};

inline std::vector<WaterfallRow> waterfall_export(const ShapExplanation& e, const std::vector<std::string>& feature_names) {
  const std::size_t p = e.phi.size();
  if (feature_names.size() != p) throw Error(ErrorKind::shape, "feature names do not match the explanation width");
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(e.phi[a]) > std::abs(e.phi[b]); });
  std::vector<WaterfallRow> rows;
  double running = e.base_value;
  for (std::size_t j : order) {
    running += e.phi[j];
    rows.push_back({feature_names[j], e.feature_values.empty() ? 0.0 : e.feature_values[j], e.phi[j], running});
  }
  return rows;
}

// (f - min) / (max - min) over a set of outputs; all zeros if they coincide.
inline std::vector<double> rescaled_outputs(const std::vector<double>& fx) {
  std::vector<double> out(fx.size(), 0.0);
  if (fx.empty()) return out;
  const auto [lo, hi] = std::minmax_element(fx.begin(), fx.end());
  const double span = *hi - *lo;
  if (span > 0.0)
    for (std::size_t i = 0; i < fx.size(); ++i) out[i] = (fx[i] - *lo) / span;
  return out;
}

inline std::string beeswarm_to_csv(const std::vector<BeeswarmRow>& rows) {
  std::string out = "sample_id,feature,shap_value,feature_value,rank\n";
  for (const auto& r : rows)
    out += r.sample_id + "," + r.feature + "," + io::format_double(r.shap_value) + "," +
           io::format_double(r.feature_value) + "," + std::to_string(r.rank) + "\n";
  return out;
}

inline std::string waterfall_to_csv(const std::vector<WaterfallRow>& rows) {
  std::string out = "feature,normalized_value,phi,cumulative\n";
  for (const auto& r : rows)
    out += r.feature + "," + io::format_double(r.normalized_value) + "," + io::format_double(r.phi) + "," +
           io::format_double(r.cumulative) + "\n";
  return out;
}

}  // namespace beatsvm
