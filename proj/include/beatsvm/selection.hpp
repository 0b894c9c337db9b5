#pragma once

// Cross-validated scoring, the random + grid hyperparameter search, and hold-out evaluation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beatsvm/dataset.hpp"
#include "beatsvm/error.hpp"
#include "beatsvm/io.hpp"
#include "beatsvm/parallel.hpp"
#include "beatsvm/rng.hpp"
#include "beatsvm/svm.hpp"

namespace beatsvm {

struct Hyperparams {
  double C = 1.0;
  KernelKind kernel = KernelKind::rbf;
  GammaMode gamma_mode = GammaMode::scale;
  int degree = 3;
  double coef0 = 0.0;

  KernelConfig kernel_config() const { return {kernel, gamma_mode, 0.0, degree, coef0}; }

  bool operator==(const Hyperparams&) const = default;
};

inline nlohmann::json to_json(const Hyperparams& h) {
  return {{"C", h.C},
          {"kernel", to_string(h.kernel)},
          {"gamma", to_string(h.gamma_mode)},
          {"degree", h.degree},
          {"coef0", h.coef0}};
}

inline Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams h;
  h.C = j.at("C").get<double>();
  h.kernel = parse_kernel(j.at("kernel").get<std::string>());
  h.gamma_mode = parse_gamma_mode(j.at("gamma").get<std::string>());
  h.degree = j.at("degree").get<int>();
  h.coef0 = j.at("coef0").get<double>();
  return h;
}

// ---------------------------------------------------------------------------
// Metrics (positive class = mature)

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  double accuracy() const { return total() ? double(tp + tn) / double(total()) : 0.0; }
  // 0 when nothing was predicted positive.
  double precision() const { return tp + fp ? double(tp) / double(tp + fp) : 0.0; }
  double recall() const { return tp + fn ? double(tp) / double(tp + fn) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }

  void add(Label truth, Label predicted) {
    if (truth == Label::mature) (predicted == Label::mature ? tp : fn)++;
    else (predicted == Label::mature ? fp : tn)++;
  }

  bool operator==(const Confusion&) const = default;
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

// "99.5 ± 1.1 %"
inline std::string format_percent(const MeanSd& m, int decimals = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f \xC2\xB1 %.*f %%", decimals, 100.0 * m.mean, decimals, 100.0 * m.sd);
  return buf;
}

struct MetricsReport {
  MeanSd accuracy, precision, recall, f1;
  std::vector<Confusion> per_fold;
  bool failed = false;
  std::string failure;

  // Undefined precision (no positive predictions) occurred in at least one fold.
  bool precision_undefined() const {
    return std::any_of(per_fold.begin(), per_fold.end(), [](const Confusion& c) { return c.tp + c.fp == 0; });
  }
};

inline MetricsReport aggregate(std::vector<Confusion> confusions) {
  std::vector<double> a, p, r, f;
  for (const auto& c : confusions) {
    a.push_back(c.accuracy());
    p.push_back(c.precision());
    r.push_back(c.recall());
    f.push_back(c.f1());
  }
  MetricsReport rep;
  rep.accuracy = mean_sd(a);
  rep.precision = mean_sd(p);
  rep.recall = mean_sd(r);
  rep.f1 = mean_sd(f);
  rep.per_fold = std::move(confusions);
  return rep;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  auto ms = [](const MeanSd& m) { return nlohmann::json{{"mean", m.mean}, {"sd", m.sd}}; };
  auto folds = nlohmann::json::array();
  for (const auto& c : r.per_fold) folds.push_back({{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}});
  nlohmann::json j = {{"accuracy", ms(r.accuracy)},
                      {"precision", ms(r.precision)},
                      {"recall", ms(r.recall)},
                      {"f1", ms(r.f1)},
                      {"per_fold", folds}};
  if (r.failed) j["failure"] = r.failure;
  return j;
}

enum class Objective { accuracy, precision, recall, f1 };

inline Objective parse_objective(const std::string& s) {
  if (s == "accuracy") return Objective::accuracy;
  if (s == "precision") return Objective::precision;
  if (s == "recall") return Objective::recall;
  if (s == "f1") return Objective::f1;
  throw Error(ErrorKind::argument, "unknown objective '" + s + "'");
}

inline const char* to_string(Objective o) {
  switch (o) {
    case Objective::accuracy: return "accuracy";
    case Objective::precision: return "precision";
    case Objective::recall: return "recall";
    case Objective::f1: return "f1";
  }
  return "?";
}

inline double score(const MetricsReport& r, Objective o) {
  switch (o) {
    case Objective::accuracy: return r.accuracy.mean;
    case Objective::precision: return r.precision.mean;
    case Objective::recall: return r.recall.mean;
    case Objective::f1: return r.f1.mean;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Fitting

// z-normalizes on `train`, resolves gamma on the normalized matrix, trains.
inline SvmModel fit(const std::vector<Sample>& train_set, const Hyperparams& hp, TrainConfig cfg = {}) {
  const Matrix raw = feature_matrix(train_set);
  auto [x, stats] = znormalize(raw);
  const auto y = sign_labels(train_set);
  cfg.C = hp.C;
  SvmModel model = train(x, y, hp.kernel_config(), cfg);
  model.normalization = std::move(stats);
  return model;
}

inline Confusion confusion_of(const SvmModel& model, const std::vector<Sample>& samples) {
  Confusion c;
  for (const auto& s : samples) {
    const auto v = s.features.values();
    c.add(require_label(s), label_for(decision_raw(model, v)));
  }
  return c;
}

inline std::vector<SvmModel> fit_fold_models(const std::vector<Sample>& samples, const std::vector<Fold>& folds,
                                             const Hyperparams& hp, const TrainConfig& cfg = {}) {
  std::vector<SvmModel> models;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    try {
      models.push_back(fit(select(samples, folds[f].train_ids), hp, cfg));
    } catch (const Error& e) {
      throw Error(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
    }
  }
  return models;
}

inline MetricsReport cross_validate(const std::vector<Sample>& samples, const std::vector<Fold>& folds,
                                    const Hyperparams& hp, const TrainConfig& cfg = {}) {
  std::vector<Confusion> confusions;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    try {
      const auto model = fit(select(samples, folds[f].train_ids), hp, cfg);
      confusions.push_back(confusion_of(model, select(samples, folds[f].val_ids)));
    } catch (const Error& e) {
      throw Error(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
    }
  }
  return aggregate(std::move(confusions));
}

inline MetricsReport evaluate_holdout(const std::vector<SvmModel>& models, const std::vector<Sample>& test_set) {
  if (test_set.empty()) throw Error(ErrorKind::size, "empty test set");
  if (models.empty()) throw Error(ErrorKind::size, "no models to evaluate");
  std::vector<Confusion> confusions;
  for (const auto& m : models) confusions.push_back(confusion_of(m, test_set));
  return aggregate(std::move(confusions));
}

// ---------------------------------------------------------------------------
// Search

struct Candidate {
  std::size_t index = 0;  // draw or enumeration order
  Hyperparams params;
  MetricsReport report;
};

struct RandomSearchSpace {
  double c_min = 0.1;
  double c_max = 3.0;
  std::vector<KernelKind> kernels{KernelKind::rbf, KernelKind::polynomial, KernelKind::sigmoid};
  std::vector<GammaMode> gamma_modes{GammaMode::automatic, GammaMode::scale};
  std::vector<int> degrees{2, 3, 4};
  double coef0_min = 0.0;
  double coef0_max = 1.0;
  std::size_t iterations = 200;
  Objective objective = Objective::precision;

  void validate() const {
    if (iterations == 0) throw Error(ErrorKind::argument, "random search needs at least one iteration");
    if (!(c_min > 0.0 && c_max >= c_min)) throw Error(ErrorKind::argument, "bad C range");
    if (kernels.empty() || gamma_modes.empty() || degrees.empty()) throw Error(ErrorKind::argument, "empty axis");
  }
};

struct GridSearchSpace {
  std::vector<double> c_values;
  std::vector<KernelKind> kernels{KernelKind::rbf, KernelKind::polynomial};
  std::vector<GammaMode> gamma_modes{GammaMode::automatic, GammaMode::scale};
  std::vector<int> degrees{2, 3};
  std::vector<double> coef0_values;
  Objective objective = Objective::accuracy;
  bool prune_inert_axes = false;  // rbf ignores degree and coef0

  GridSearchSpace() {
    for (int i = 1; i <= 10; ++i) c_values.push_back(0.1 * i);
    for (int i = 0; i <= 20; ++i) coef0_values.push_back(0.05 * i);
  }

  // Same grid moved so its C and coef0 axes are centred on `center`; C values that
  // would become non-positive are dropped.
  GridSearchSpace recentered(const Hyperparams& center) const {
    GridSearchSpace g = *this;
    auto mid = [](const std::vector<double>& v) { return 0.5 * (v.front() + v.back()); };
    const double c_shift = center.C - mid(c_values);
    const double k_shift = center.coef0 - mid(coef0_values);
    g.c_values.clear();
    for (double c : c_values)
      if (c + c_shift > 0.0) g.c_values.push_back(c + c_shift);
    for (double& k : g.coef0_values) k += k_shift;
    return g;
  }

  // Enumeration order: C, kernel, gamma mode, degree, coef0 (innermost).
  std::vector<Hyperparams> enumerate() const {
    std::vector<Hyperparams> out;
    for (double c : c_values)
      for (auto k : kernels)
        for (auto g : gamma_modes) {
          if (prune_inert_axes && k == KernelKind::rbf) {
            out.push_back({c, k, g, degrees.front(), coef0_values.front()});
            continue;
          }
          for (int d : degrees)
            for (double c0 : coef0_values) out.push_back({c, k, g, d, c0});
        }
    return out;
  }

  nlohmann::json definition() const {
    std::vector<std::string> ks, gs;
    for (auto k : kernels) ks.push_back(to_string(k));
    for (auto g : gamma_modes) gs.push_back(to_string(g));
    return {{"C", c_values},  {"kernel", ks},         {"gamma", gs}, {"degree", degrees}, {"coef0", coef0_values},
            {"objective", to_string(objective)}, {"prune_inert_axes", prune_inert_axes}};
  }
};

inline std::vector<Hyperparams> draw_random_candidates(const RandomSearchSpace& space, std::uint64_t seed) {
  space.validate();
  auto rng = Rng::stream(seed, "random_search");
  const double lo = std::log(space.c_min), hi = std::log(space.c_max);
  std::vector<Hyperparams> out;
  out.reserve(space.iterations);
  for (std::size_t i = 0; i < space.iterations; ++i) {
    Hyperparams h;
    h.C = std::clamp(std::exp(rng.uniform(lo, hi)), space.c_min, space.c_max);
    h.kernel = space.kernels[rng.below(space.kernels.size())];
    h.gamma_mode = space.gamma_modes[rng.below(space.gamma_modes.size())];
    h.degree = space.degrees[rng.below(space.degrees.size())];
    h.coef0 = rng.uniform(space.coef0_min, space.coef0_max);
    out.push_back(h);
  }
  return out;
}

namespace detail {

inline std::vector<Candidate> evaluate_all(const std::vector<Sample>& samples, const std::vector<Fold>& folds,
                                           const std::vector<Hyperparams>& params, const TrainConfig& cfg,
                                           unsigned threads) {
  std::vector<Candidate> out(params.size());
  parallel_for(params.size(), threads, [&](std::size_t i) {
    out[i].index = i;
    out[i].params = params[i];
    try {
      out[i].report = cross_validate(samples, folds, params[i], cfg);
    } catch (const Error& e) {
      out[i].report = MetricsReport{};
      out[i].report.failed = true;
      out[i].report.failure = e.what();
    }
  });
  return out;
}

}  // namespace detail

// Candidates ranked by the objective, then mean accuracy, then draw order.
inline std::vector<Candidate> random_search(const std::vector<Sample>& samples, const std::vector<Fold>& folds,
                                            const RandomSearchSpace& space, std::uint64_t seed,
                                            const TrainConfig& cfg = {}, unsigned threads = 1) {
  auto ranked = detail::evaluate_all(samples, folds, draw_random_candidates(space, seed), cfg, threads);
  std::stable_sort(ranked.begin(), ranked.end(), [&](const Candidate& a, const Candidate& b) {
    const double sa = score(a.report, space.objective), sb = score(b.report, space.objective);
    if (sa != sb) return sa > sb;
    if (a.report.accuracy.mean != b.report.accuracy.mean) return a.report.accuracy.mean > b.report.accuracy.mean;
    return a.index < b.index;
  });
  return ranked;
}

struct GridResult {
  Hyperparams best;
  std::size_t best_index = 0;
  std::vector<Candidate> table;  // enumeration order
};

// Full Cartesian product; best by objective, then smaller C, then enumeration order.
inline GridResult grid_search(const std::vector<Sample>& samples, const std::vector<Fold>& folds,
                              const GridSearchSpace& space, const TrainConfig& cfg = {}, unsigned threads = 1) {
  const auto params = space.enumerate();
  if (params.empty()) throw Error(ErrorKind::argument, "empty grid");
  GridResult res;
  res.table = detail::evaluate_all(samples, folds, params, cfg, threads);
  std::size_t best = 0;
  for (std::size_t i = 1; i < res.table.size(); ++i) {
    const double si = score(res.table[i].report, space.objective);
    const double sb = score(res.table[best].report, space.objective);
    if (si > sb || (si == sb && res.table[i].params.C < res.table[best].params.C)) best = i;
  }
  res.best_index = best;
  res.best = res.table[best].params;
  return res;
}

// Rank order used when writing a grid table: objective desc, C asc, enumeration order.
inline std::vector<Candidate> ranked(std::vector<Candidate> table, Objective objective) {
  std::stable_sort(table.begin(), table.end(), [&](const Candidate& a, const Candidate& b) {
    const double sa = score(a.report, objective), sb = score(b.report, objective);
    if (sa != sb) return sa > sb;
    if (a.params.C != b.params.C) return a.params.C < b.params.C;
    return a.index < b.index;
  });
  return table;
}

inline std::string results_to_csv(const std::vector<Candidate>& rows) {
  std::string out =
      "rank,index,C,kernel,gamma,degree,coef0,accuracy_mean,accuracy_sd,precision_mean,precision_sd,"
      "recall_mean,recall_sd,f1_mean,f1_sd,failed\n";
  auto f = [](double v) { return io::format_double(v); };
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& c = rows[r];
    const auto& m = c.report;
    out += std::to_string(r + 1) + "," + std::to_string(c.index) + "," + f(c.params.C) + "," +
           to_string(c.params.kernel) + "," + to_string(c.params.gamma_mode) + "," + std::to_string(c.params.degree) +
           "," + f(c.params.coef0) + "," + f(m.accuracy.mean) + "," + f(m.accuracy.sd) + "," + f(m.precision.mean) +
           "," + f(m.precision.sd) + "," + f(m.recall.mean) + "," + f(m.recall.sd) + "," + f(m.f1.mean) + "," +
           f(m.f1.sd) + "," + (m.failed ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace beatsvm
