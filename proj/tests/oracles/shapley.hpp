#pragma once

// Shapley values by averaging marginal contributions over every ordering of the
// features (p! orderings), plus random probe models for the axiom checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace oracle {

using Model = std::function<double(std::span<const double>)>;

inline double interventional_value(const Model& f, const std::vector<double>& x, const std::vector<bool>& in_s,
                                   const std::vector<std::vector<double>>& bg) {
  double s = 0;
  std::vector<double> z(x.size());
  for (const auto& b : bg) {
    for (std::size_t j = 0; j < x.size(); ++j) z[j] = in_s[j] ? x[j] : b[j];
    s += f(z);
  }
  return s / static_cast<double>(bg.size());
}

inline std::vector<double> permutation_shapley(const Model& f, const std::vector<double>& x,
                                               const std::vector<std::vector<double>>& bg) {
  const std::size_t p = x.size();
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0u);
  std::vector<double> phi(p, 0.0);
  double count = 0;
  do {
    std::vector<bool> in_s(p, false);
    double prev = interventional_value(f, x, in_s, bg);
    for (std::size_t k : order) {
      in_s[k] = true;
      const double cur = interventional_value(f, x, in_s, bg);
      phi[k] += cur - prev;
      prev = cur;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& v : phi) v /= count;
  return phi;
}

// Random smooth nonlinear model: linear + pairwise products + a tanh ridge.
struct ProbeModel {
  std::vector<double> w;
  std::vector<std::vector<double>> pair;
  std::vector<double> ridge;
  double bias = 0;

  double operator()(std::span<const double> v) const {
    double s = bias, r = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      s += w[i] * v[i];
      r += ridge[i] * v[i];
      for (std::size_t j = i + 1; j < v.size(); ++j) s += pair[i][j] * v[i] * v[j];
    }
    return s + std::tanh(r);
  }
};

inline ProbeModel random_probe(std::mt19937_64& gen, std::size_t p) {
  std::normal_distribution<double> n;
  ProbeModel m;
  m.w.resize(p);
  m.ridge.resize(p);
  m.pair.assign(p, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < p; ++i) {
    m.w[i] = n(gen);
    m.ridge[i] = 0.5 * n(gen);
    for (std::size_t j = i + 1; j < p; ++j) m.pair[i][j] = 0.3 * n(gen);
  }
  m.bias = n(gen);
  return m;
}

inline std::vector<std::vector<double>> random_rows(std::mt19937_64& gen, std::size_t rows, std::size_t p) {
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> out(rows, std::vector<double>(p));
  for (auto& r : out)
    for (auto& v : r) v = n(gen);
  return out;
}

}  // namespace oracle
