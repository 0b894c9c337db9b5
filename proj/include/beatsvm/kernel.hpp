#pragma once

#include <cmath>
#include <span>
#include <string>

#include "beatsvm/error.hpp"
#include "beatsvm/matrix.hpp"

namespace beatsvm {

enum class KernelKind { rbf, polynomial, sigmoid };

// How gamma is obtained: 1/p ("auto"), 1/(p * pooled variance) ("scale"), or given.
enum class GammaMode { automatic, scale, fixed };

inline const char* to_string(KernelKind k) {
  switch (k) {
    case KernelKind::rbf: return "rbf";
    case KernelKind::polynomial: return "poly";
    case KernelKind::sigmoid: return "sigmoid";
  }
  return "?";
}

inline const char* to_string(GammaMode g) {
  switch (g) {
    case GammaMode::automatic: return "auto";
    case GammaMode::scale: return "scale";
    case GammaMode::fixed: return "fixed";
  }
  return "?";
}

inline KernelKind parse_kernel(const std::string& s) {
  if (s == "rbf") return KernelKind::rbf;
  if (s == "poly" || s == "polynomial") return KernelKind::polynomial;
  if (s == "sigmoid") return KernelKind::sigmoid;
  throw Error(ErrorKind::input, "unknown kernel '" + s + "'");
}

inline GammaMode parse_gamma_mode(const std::string& s) {
  if (s == "auto") return GammaMode::automatic;
  if (s == "scale") return GammaMode::scale;
  if (s == "fixed") return GammaMode::fixed;
  throw Error(ErrorKind::input, "unknown gamma mode '" + s + "'");
}

struct KernelConfig {
  KernelKind kind = KernelKind::rbf;
  GammaMode gamma_mode = GammaMode::scale;
  double gamma = 0.0;  // explicit value, or the resolved one once trained
  int degree = 3;      // polynomial only
  double coef0 = 0.0;  // polynomial and sigmoid

  // Linear kernel <x, z>.
  static KernelConfig linear() { return {KernelKind::polynomial, GammaMode::fixed, 1.0, 1, 0.0}; }

  bool operator==(const KernelConfig&) const = default;
};

inline double resolve_gamma(GammaMode mode, const Matrix& x, double fixed_value = 0.0) {
  if (x.rows() < 1 || x.cols() < 1) throw Error(ErrorKind::shape, "gamma needs a non-empty training matrix");
  const double p = static_cast<double>(x.cols());
  switch (mode) {
    case GammaMode::automatic:
      return 1.0 / p;
    case GammaMode::scale: {
      const auto& d = x.data();
      double mean = 0.0;
      for (double v : d) mean += v;
      mean /= static_cast<double>(d.size());
      double var = 0.0;
      for (double v : d) var += (v - mean) * (v - mean);
      var /= static_cast<double>(d.size());
      if (!(var > 0.0)) throw Error(ErrorKind::degenerate_data, "scale gamma on a matrix with zero variance");
      return 1.0 / (p * var);
    }
    case GammaMode::fixed:
      if (!(fixed_value > 0.0)) throw Error(ErrorKind::argument, "explicit gamma must be positive");
      return fixed_value;
  }
  return fixed_value;
}

inline KernelConfig resolve(KernelConfig cfg, const Matrix& x) {
  if (cfg.degree < 1) throw Error(ErrorKind::argument, "polynomial degree must be at least 1");
  cfg.gamma = resolve_gamma(cfg.gamma_mode, x, cfg.gamma);
  return cfg;
}

inline double ipow(double base, int exp) {
  double r = 1.0;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

inline double kernel_eval(const KernelConfig& cfg, std::span<const double> x, std::span<const double> z) {
  if (x.size() != z.size())
    throw Error(ErrorKind::shape, "kernel arguments differ in dimension (" + std::to_string(x.size()) + " vs " +
                                      std::to_string(z.size()) + ")");
  switch (cfg.kind) {
    case KernelKind::rbf: {
      double d2 = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) d2 += (x[k] - z[k]) * (x[k] - z[k]);
      return std::exp(-cfg.gamma * d2);
    }
    case KernelKind::polynomial:
    case KernelKind::sigmoid: {
      double dot = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) dot += x[k] * z[k];
      const double a = cfg.gamma * dot + cfg.coef0;
      return cfg.kind == KernelKind::polynomial ? ipow(a, cfg.degree) : std::tanh(a);
    }
  }
  return 0.0;
}

inline Matrix gram_matrix(const KernelConfig& cfg, const Matrix& x) {
  Matrix k(x.rows(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j <= i; ++j) k(i, j) = k(j, i) = kernel_eval(cfg, x.row(i), x.row(j));
  return k;
}

}  // namespace beatsvm
