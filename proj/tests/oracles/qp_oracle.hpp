#pragma once

// Reference solver for the soft-margin SVM dual
//
//   max  sum(a) - 1/2 a'Qa   s.t.  0 <= a_i <= C,  sum(y_i a_i) = 0,   Q_ij = y_i y_j K_ij
//
// by accelerated projected-gradient ascent. The projection onto the box plus the
// hyperplane is found by bisection on the multiplier of the equality constraint.
// The bias is recovered separately by minimizing the primal hinge loss over b.
// Shares no code with the library solver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec matvec(const Mat& m, const Vec& v) {
  Vec out(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = dot(m[i], v);
  return out;
}

inline double dual_value(const Mat& q, const Vec& a) {
  double lin = 0;
  for (double v : a) lin += v;
  return lin - 0.5 * dot(a, matvec(q, a));
}

// Euclidean projection of v onto {0 <= a <= C, y'a = 0}. With a(lam) = clip(v - lam y),
// h(lam) = y'a(lam) is piecewise linear and nonincreasing; its root is found exactly
// between consecutive breakpoints.
inline Vec project(const Vec& v, const std::vector<int>& y, double c) {
  auto at = [&](double lam) {
    Vec a(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) a[i] = std::clamp(v[i] - lam * y[i], 0.0, c);
    return a;
  };
  auto h = [&](double lam) {
    double s = 0;
    const Vec a = at(lam);
    for (std::size_t i = 0; i < v.size(); ++i) s += y[i] * a[i];
    return s;
  };
  Vec knots;
  for (std::size_t i = 0; i < v.size(); ++i) {
    knots.push_back(v[i] * y[i]);
    knots.push_back((v[i] - c) * y[i]);
  }
  std::sort(knots.begin(), knots.end());
  // h(knots.front()) >= 0 >= h(knots.back()) since every a_i is then at a bound
  // favouring one sign; find the segment containing the root.
  std::size_t lo = 0, hi = knots.size() - 1;
  if (h(knots[lo]) <= 0) return at(knots[lo]);
  if (h(knots[hi]) >= 0) return at(knots[hi]);
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    (h(knots[mid]) > 0 ? lo : hi) = mid;
  }
  const double h0 = h(knots[lo]), h1 = h(knots[hi]);
  const double lam = h0 == h1 ? knots[lo] : knots[lo] + (knots[hi] - knots[lo]) * h0 / (h0 - h1);
  return at(lam);
}

// Projected-gradient optimality residual: |a - P(a + grad)|_inf.
inline double kkt_residual(const Mat& q, const Vec& a, const std::vector<int>& y, double c) {
  const Vec qa = matvec(q, a);
  Vec v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i] + (1.0 - qa[i]);
  const Vec p = project(v, y, c);
  double r = 0;
  for (std::size_t i = 0; i < a.size(); ++i) r = std::max(r, std::abs(p[i] - a[i]));
  return r;
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double spectral_bound(const Mat& q) {
  Vec v(q.size(), 1.0);
  double lambda = 0;
  for (int it = 0; it < 500; ++it) {
    Vec w = matvec(q, v);
    const double norm = std::sqrt(dot(w, w));
    if (norm == 0) return 1.0;
    for (auto& x : w) x /= norm;
    lambda = norm / std::sqrt(dot(v, v));
    v = w;
  }
  return lambda * 1.01 + 1e-12;
}

struct QpSolution {
  Vec alpha;
  double objective = 0;
  double bias = 0;
  std::size_t iterations = 0;
  double residual = 0;
};

// Primal-optimal bias for fixed kernel expansion values g_i = sum_j a_j y_j K_ij:
// argmin_b sum_i max(0, 1 - y_i (g_i + b)). Convex piecewise linear with kinks at
// b = y_i - g_i; the minimizing set is an interval between two kinks, whose
// midpoint is returned.
inline double hinge_bias(const Vec& g, const std::vector<int>& y) {
  auto loss = [&](double b) {
    double s = 0;
    for (std::size_t i = 0; i < g.size(); ++i) s += std::max(0.0, 1.0 - y[i] * (g[i] + b));
    return s;
  };
  Vec kinks;
  for (std::size_t i = 0; i < g.size(); ++i) kinks.push_back(y[i] - g[i]);
  double best = std::numeric_limits<double>::infinity();
  for (double b : kinks) best = std::min(best, loss(b));
  const double tol = 1e-9 * (1.0 + best);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double b : kinks)
    if (loss(b) <= best + tol) {
      lo = std::min(lo, b);
      hi = std::max(hi, b);
    }
  return 0.5 * (lo + hi);
}

inline QpSolution solve_dual(const Mat& k, const std::vector<int>& y, double c, double tol = 1e-11,
                             std::size_t max_iter = 1'000'000) {
  const std::size_t n = y.size();
  Mat q(n, Vec(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q[i][j] = y[i] * y[j] * k[i][j];
  const double step = 1.0 / spectral_bound(q);

  Vec a = project(Vec(n, 0.0), y, c), z = a;
  double t = 1.0;
  bool restarted = true;
  QpSolution sol;
  double prev_obj = dual_value(q, a);
  for (sol.iterations = 0; sol.iterations < max_iter; ++sol.iterations) {
    const Vec qz = matvec(q, z);
    Vec v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = z[i] + step * (1.0 - qz[i]);
    const Vec next = project(v, y, c);
    const double obj = dual_value(q, next);
    // Drop the momentum whenever it would decrease the objective; a plain
    // projected step from a is always accepted.
    if (obj < prev_obj && !restarted) {
      z = a;
      t = 1.0;
      restarted = true;
      continue;
    }
    restarted = false;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    for (std::size_t i = 0; i < n; ++i) z[i] = next[i] + (t - 1.0) / t_next * (next[i] - a[i]);
    t = t_next;
    a = next;
    prev_obj = obj;
    if (sol.iterations % 16 == 0) {
      sol.residual = kkt_residual(q, a, y, c);
      if (sol.residual < tol) break;
    }
  }
  sol.alpha = a;
  sol.objective = dual_value(q, a);
  Vec g(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g[i] += a[j] * y[j] * k[i][j];
  sol.bias = hinge_bias(g, y);
  return sol;
}

// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
inline double min_eigenvalue(Mat a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t r = p + 1; r < n; ++r) {
        if (std::abs(a[p][r]) < 1e-300) continue;
        const double theta = (a[r][r] - a[p][p]) / (2 * a[p][r]);
        const double t = (theta >= 0 ? 1 : -1) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double cs = 1 / std::sqrt(t * t + 1), sn = t * cs;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akr = a[k][r];
          a[k][p] = cs * akp - sn * akr;
          a[k][r] = sn * akp + cs * akr;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], ark = a[r][k];
          a[p][k] = cs * apk - sn * ark;
          a[r][k] = sn * apk + cs * ark;
        }
      }
  }
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::min(m, a[i][i]);
  return m;
}

// Independent kernel definitions.
inline double rbf(const Vec& x, const Vec& z, double gamma) {
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - z[i]) * (x[i] - z[i]);
  return std::exp(-gamma * d);
}
inline double poly(const Vec& x, const Vec& z, double gamma, double coef0, int degree) {
  return std::pow(gamma * dot(x, z) + coef0, degree);
}
inline double sigmoid(const Vec& x, const Vec& z, double gamma, double coef0) {
  return std::tanh(gamma * dot(x, z) + coef0);
}

inline Mat gram(const Mat& x, const std::function<double(const Vec&, const Vec&)>& kernel) {
  Mat k(x.size(), Vec(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) k[i][j] = kernel(x[i], x[j]);
  return k;
}

}  // namespace oracle
