#pragma once

// Soft-margin kernel SVM trained in the dual by sequential minimal optimization.
//
//   max_a  sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
//   s.t.   0 <= a_i <= C,  sum_i a_i y_i = 0
//
// Working pairs are the maximal KKT violators; the solver stops once the violation
// gap m(a) - M(a) falls below the KKT tolerance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beatsvm/beats.hpp"
#include "beatsvm/dataset.hpp"
#include "beatsvm/error.hpp"
#include "beatsvm/kernel.hpp"
#include "beatsvm/matrix.hpp"

namespace beatsvm {

struct TrainConfig {
  double C = 1.0;
  double kkt_tolerance = 1e-3;
  int max_passes = 1000;  // iteration cap is max_passes * n
  double numerical_floor = 1e-8;
  std::uint64_t seed = 42;
};

struct SvmModel {
  Matrix support_vectors;
  std::vector<double> dual_coefs;  // a_i * y_i
  double bias = 0.0;
  KernelConfig kernel;  // gamma resolved
  double C = 1.0;
  ZStats normalization;  // empty means inputs are used as given
  std::uint64_t seed = 42;

  std::size_t dimension() const { return support_vectors.cols(); }
};

struct TrainResult {
  SvmModel model;
  std::vector<double> alpha;  // one per training row
  double dual_objective = 0.0;
  std::size_t iterations = 0;
  bool converged = true;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, TrainResult best)
      : Error(ErrorKind::convergence, what), best_(std::move(best)) {}
  const TrainResult& best() const { return best_; }

 private:
  TrainResult best_;
};

inline double dual_objective(const Matrix& q, std::span<const double> alpha) {
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    lin += alpha[i];
    if (alpha[i] == 0.0) continue;
    for (std::size_t j = 0; j < alpha.size(); ++j) quad += alpha[i] * alpha[j] * q(i, j);
  }
  return lin - 0.5 * quad;
}

namespace detail {

inline void validate_training_input(const Matrix& x, std::span<const int> y) {
  if (x.rows() != y.size()) throw Error(ErrorKind::shape, "label count does not match row count");
  if (x.rows() < 2) throw Error(ErrorKind::insufficient_data, "training needs at least 2 samples");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == -1) neg = true;
    else throw Error(ErrorKind::label, "labels must be -1 or +1");
  }
  if (!pos || !neg) throw Error(ErrorKind::label, "training labels contain a single class");
  for (double v : x.data())
    if (!std::isfinite(v)) throw Error(ErrorKind::input, "training matrix has a non-finite entry");
}

}  // namespace detail

inline TrainResult train_detailed(const Matrix& x, std::span<const int> y, const KernelConfig& kernel,
                                  const TrainConfig& cfg) {
  detail::validate_training_input(x, y);
  if (!(cfg.C > 0.0)) throw Error(ErrorKind::argument, "C must be positive");
  if (!(cfg.kkt_tolerance > 0.0)) throw Error(ErrorKind::argument, "KKT tolerance must be positive");

  const std::size_t n = x.rows();
  const double c = cfg.C;
  const KernelConfig kc = resolve(kernel, x);
  const Matrix k = gram_matrix(kc, x);
  Matrix q(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q(i, j) = static_cast<double>(y[i] * y[j]) * k(i, j);

  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);  // Q a - e
  constexpr double kTau = 1e-12;
  const std::size_t max_iter = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.max_passes)) * n;

  auto in_up = [&](std::size_t t) { return y[t] == 1 ? alpha[t] < c : alpha[t] > 0.0; };
  auto in_low = [&](std::size_t t) { return y[t] == 1 ? alpha[t] > 0.0 : alpha[t] < c; };

  std::size_t iter = 0;
  bool converged = false;
  for (; iter < max_iter; ++iter) {
    std::size_t i = n, j = n;
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -static_cast<double>(y[t]) * grad[t];
      if (in_up(t) && v > g_max) {
        g_max = v;
        i = t;
      }
      if (in_low(t) && v < g_min) {
        g_min = v;
        j = t;
      }
    }
    if (i == n || j == n || g_max - g_min < cfg.kkt_tolerance) {
      converged = true;
      break;
    }

    const double old_ai = alpha[i], old_aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = sum;
        }
        if (alpha[i] < 0.0) {
          alpha[i] = 0.0;
          alpha[j] = sum;
        }
      }
    }
    const double di = alpha[i] - old_ai, dj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q(t, i) * di + q(t, j) * dj;
  }

  // Bias: mean over free vectors, else the midpoint of the feasible interval.
  double free_sum = 0.0;
  std::size_t free_n = 0;
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = static_cast<double>(y[t]) * grad[t];
    if (alpha[t] > 0.0 && alpha[t] < c) {
      free_sum += yg;
      ++free_n;
    } else if (alpha[t] >= c) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    }
  }
  const double rho = free_n > 0 ? free_sum / static_cast<double>(free_n) : 0.5 * (ub + lb);

  TrainResult result;
  result.alpha = alpha;
  result.iterations = iter;
  result.converged = converged;
  result.dual_objective = dual_objective(q, alpha);
  auto& m = result.model;
  m.kernel = kc;
  m.C = c;
  m.bias = -rho;
  m.seed = cfg.seed;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > cfg.numerical_floor) {
      m.support_vectors.append_row(x.row(t));
      m.dual_coefs.push_back(alpha[t] * static_cast<double>(y[t]));
    }
  }
  if (m.support_vectors.cols() == 0) m.support_vectors = Matrix(0, x.cols());
  if (!converged)
    throw ConvergenceError("SMO did not converge within " + std::to_string(max_iter) + " iterations", result);
  return result;
}

inline SvmModel train(const Matrix& x, std::span<const int> y, const KernelConfig& kernel, const TrainConfig& cfg) {
  return train_detailed(x, y, kernel, cfg).model;
}

// f(x) for an already-normalized input.
inline double decision_function(const SvmModel& model, std::span<const double> x) {
  if (x.size() != model.dimension())
    throw Error(ErrorKind::shape, "input has " + std::to_string(x.size()) + " features, model expects " +
                                      std::to_string(model.dimension()));
  double f = model.bias;
  for (std::size_t i = 0; i < model.dual_coefs.size(); ++i)
    f += model.dual_coefs[i] * kernel_eval(model.kernel, model.support_vectors.row(i), x);
  return f;
}

// f(x) for a raw feature vector; applies the model's normalization first.
inline double decision_raw(const SvmModel& model, std::span<const double> raw) {
  if (model.normalization.size() == 0) return decision_function(model, raw);
  const auto z = model.normalization.apply(raw);
  return decision_function(model, z);
}

inline Label label_for(double decision) { return decision > 0.0 ? Label::mature : Label::immature; }

inline Label predict(const SvmModel& model, std::span<const double> x) { return label_for(decision_function(model, x)); }

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const KernelConfig& k) {
  return {{"kind", to_string(k.kind)},
          {"gamma_mode", to_string(k.gamma_mode)},
          {"gamma", k.gamma},
          {"degree", k.degree},
          {"coef0", k.coef0}};
}

inline KernelConfig kernel_from_json(const nlohmann::json& j) {
  KernelConfig k;
  k.kind = parse_kernel(j.at("kind").get<std::string>());
  k.gamma_mode = parse_gamma_mode(j.at("gamma_mode").get<std::string>());
  k.gamma = j.at("gamma").get<double>();
  k.degree = j.at("degree").get<int>();
  k.coef0 = j.at("coef0").get<double>();
  return k;
}

inline nlohmann::json to_json(const SvmModel& m) {
  auto svs = nlohmann::json::array();
  for (std::size_t i = 0; i < m.support_vectors.rows(); ++i) {
    const auto r = m.support_vectors.row(i);
    svs.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"kernel", to_json(m.kernel)},
          {"C", m.C},
          {"bias", m.bias},
          {"dual_coefs", m.dual_coefs},
          {"support_vectors", svs},
          {"normalization", {{"mean", m.normalization.mean}, {"std", m.normalization.std}}},
          {"seed", m.seed}};
}

inline SvmModel model_from_json(const nlohmann::json& j) {
  try {
    SvmModel m;
    m.kernel = kernel_from_json(j.at("kernel"));
    m.C = j.at("C").get<double>();
    m.bias = j.at("bias").get<double>();
    m.dual_coefs = j.at("dual_coefs").get<std::vector<double>>();
    m.support_vectors = Matrix::from_rows(j.at("support_vectors").get<std::vector<std::vector<double>>>());
    m.normalization.mean = j.at("normalization").at("mean").get<std::vector<double>>();
    m.normalization.std = j.at("normalization").at("std").get<std::vector<double>>();
    m.seed = j.value("seed", std::uint64_t{42});
    if (m.support_vectors.rows() != m.dual_coefs.size())
      throw Error(ErrorKind::input, "model has " + std::to_string(m.dual_coefs.size()) + " coefficients for " +
                                        std::to_string(m.support_vectors.rows()) + " support vectors");
    if (m.normalization.mean.size() != m.normalization.std.size())
      throw Error(ErrorKind::input, "model normalization stats are inconsistent");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::input, std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace beatsvm
