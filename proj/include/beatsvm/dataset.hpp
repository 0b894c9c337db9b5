#pragma once

// Labeled feature table, class balancing, seeded stratified splitting and k-fold plans.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "beatsvm/beats.hpp"
#include "beatsvm/error.hpp"
#include "beatsvm/io.hpp"
#include "beatsvm/matrix.hpp"
#include "beatsvm/rng.hpp"

namespace beatsvm {

enum class Label { immature, mature };

enum class Group { d21_b27, d42_mm, d42_b27 };

inline const char* to_string(Label l) { return l == Label::mature ? "mature" : "immature"; }

inline const char* to_string(Group g) {
  switch (g) {
    case Group::d21_b27: return "d21_b27";
    case Group::d42_mm: return "d42_mm";
    case Group::d42_b27: return "d42_b27";
  }
  return "?";
}

inline Group parse_group(const std::string& s) {
  if (s == "d21_b27") return Group::d21_b27;
  if (s == "d42_mm") return Group::d42_mm;
  if (s == "d42_b27") return Group::d42_b27;
  throw Error(ErrorKind::input, "unknown group '" + s + "'");
}

// Training label implied by the culture group; d42_b27 carries none.
inline std::optional<Label> label_of(Group g) {
  switch (g) {
    case Group::d21_b27: return Label::immature;
    case Group::d42_mm: return Label::mature;
    case Group::d42_b27: return std::nullopt;
  }
  return std::nullopt;
}

// SVM sign convention: mature = +1.
inline int sign_of(Label l) { return l == Label::mature ? +1 : -1; }

struct Sample {
  std::string video_id;
  FeatureVector features;
  std::string cell_line;
  Group group = Group::d21_b27;

  std::optional<Label> label() const { return label_of(group); }
};

struct SplitPlan {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
  double test_fraction = 0.0;
};

struct Fold {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

// ---------------------------------------------------------------------------
// Helpers

inline Label require_label(const Sample& s) {
  const auto l = s.label();
  if (!l) throw Error(ErrorKind::label, "sample '" + s.video_id + "' (d42_b27) has no training label");
  return *l;
}

inline Matrix feature_matrix(const std::vector<Sample>& samples) {
  Matrix m(samples.size(), kFeatureCount);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto v = samples[i].features.values();
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      if (std::isnan(v[j]))
        throw Error(ErrorKind::input, "sample '" + samples[i].video_id + "' has a missing " +
                                          std::string(kFeatureNames[j]) + " (impute first)");
      m(i, j) = v[j];
    }
  }
  return m;
}

inline std::vector<int> sign_labels(const std::vector<Sample>& samples) {
  std::vector<int> y;
  y.reserve(samples.size());
  for (const auto& s : samples) y.push_back(sign_of(require_label(s)));
  return y;
}

inline std::vector<Sample> select(const std::vector<Sample>& samples, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const Sample*> by_id;
  for (const auto& s : samples) by_id.emplace(s.video_id, &s);
  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorKind::input, "unknown video id '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

inline std::vector<std::string> ids_of(const std::vector<Sample>& samples) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.video_id);
  return ids;
}

// Largest-remainder apportionment of `total` across cells of the given sizes,
// proportional to size. Remainder ties go to the earlier cell.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& sizes) {
  std::size_t n = 0;
  for (auto s : sizes) n += s;
  std::vector<std::size_t> out(sizes.size(), 0);
  if (n == 0) return out;
  std::vector<std::pair<std::uint64_t, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::uint64_t num = static_cast<std::uint64_t>(total) * sizes[i];
    out[i] = static_cast<std::size_t>(num / n);
    assigned += out[i];
    remainders.emplace_back(num % n, i);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[remainders[k].second];
  return out;
}

namespace detail {

// Indices of `samples` grouped by (label, cell line); lines in lexicographic order.
using Cells = std::map<Label, std::map<std::string, std::vector<std::size_t>>>;

inline Cells cells_of(const std::vector<Sample>& samples) {
  Cells cells;
  for (std::size_t i = 0; i < samples.size(); ++i) cells[require_label(samples[i])][samples[i].cell_line].push_back(i);
  return cells;
}

inline std::vector<std::size_t> sizes_of(const std::map<std::string, std::vector<std::size_t>>& lines) {
  std::vector<std::size_t> sizes;
  for (const auto& [line, idx] : lines) sizes.push_back(idx.size());
  return sizes;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations

// Keeps exactly per_class samples of each training class, spread over cell lines in
// proportion to availability. Unlabeled (d42_b27) samples are not part of the result.
inline std::vector<Sample> balance_subsample(const std::vector<Sample>& samples, std::size_t per_class,
                                             std::uint64_t seed) {
  std::vector<Sample> labeled;
  for (const auto& s : samples)
    if (s.label()) labeled.push_back(s);
  auto cells = detail::cells_of(labeled);
  for (Label l : {Label::immature, Label::mature}) {
    std::size_t have = 0;
    for (const auto& [line, idx] : cells[l]) have += idx.size();
    if (have < per_class)
      throw Error(ErrorKind::size, std::string("class ") + to_string(l) + " has " + std::to_string(have) +
                                       " samples, " + std::to_string(per_class) + " requested");
  }
  auto rng = Rng::stream(seed, "balance");
  std::vector<bool> keep(labeled.size(), false);
  for (auto& [label, lines] : cells) {
    const auto quota = apportion(per_class, detail::sizes_of(lines));
    std::size_t k = 0;
    for (auto& [line, idx] : lines) {
      rng.shuffle(idx);
      for (std::size_t q = 0; q < quota[k]; ++q) keep[idx[q]] = true;
      ++k;
    }
  }
  std::vector<Sample> out;
  for (std::size_t i = 0; i < labeled.size(); ++i)
    if (keep[i]) out.push_back(labeled[i]);
  return out;
}

inline SplitPlan stratified_split(const std::vector<Sample>& samples, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error(ErrorKind::argument, "test fraction must lie strictly between 0 and 1");
  auto cells = detail::cells_of(samples);
  auto rng = Rng::stream(seed, "split");
  std::vector<bool> is_test(samples.size(), false);

  // Per-class test counts round(n * fraction). Exact half ties are settled in class
  // order so the total equals round(N * fraction).
  std::map<Label, std::size_t> n_test;
  std::vector<Label> ties;
  std::size_t total = 0;
  for (const auto& [label, lines] : cells) {
    std::size_t n = 0;
    for (auto s : detail::sizes_of(lines)) n += s;
    total += n;
    const double exact = static_cast<double>(n) * test_fraction;
    const double base = std::floor(exact);
    n_test[label] = static_cast<std::size_t>(base) + (exact - base > 0.5 ? 1 : 0);
    if (exact - base == 0.5) ties.push_back(label);
  }
  std::size_t assigned = 0;
  for (const auto& [label, k] : n_test) assigned += k;
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(total) * test_fraction));
  for (Label l : ties)
    if (assigned < target) ++n_test[l], ++assigned;

  for (auto& [label, lines] : cells) {
    const auto sizes = detail::sizes_of(lines);
    std::size_t n = 0;
    for (auto s : sizes) n += s;
    // A single-sample class cannot be split and lands on one side.
    if (n > 1 && (n_test[label] == 0 || n_test[label] >= n))
      throw Error(ErrorKind::stratification, std::string("class ") + to_string(label) + " of size " +
                                                 std::to_string(n) + " cannot be split at fraction " +
                                                 io::format_double(test_fraction, 6));
    const auto quota = apportion(n_test[label], sizes);
    std::size_t k = 0;
    for (auto& [line, idx] : lines) {
      rng.shuffle(idx);
      for (std::size_t q = 0; q < quota[k]; ++q) is_test[idx[q]] = true;
      ++k;
    }
  }
  if (assigned == 0 || assigned >= total)
    throw Error(ErrorKind::stratification, "split at fraction " + io::format_double(test_fraction, 6) +
                                               " leaves the train or test side empty");
  SplitPlan plan;
  plan.seed = seed;
  plan.test_fraction = test_fraction;
  for (std::size_t i = 0; i < samples.size(); ++i)
    (is_test[i] ? plan.test_ids : plan.train_ids).push_back(samples[i].video_id);
  return plan;
}

// Stratified k-fold plan. Each class is shuffled within cell lines and dealt round-robin
// over the folds, the deal continuing across classes so fold sizes differ by at most 1.
inline std::vector<Fold> kfold(const std::vector<Sample>& samples, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::fold, "k must be at least 2");
  auto cells = detail::cells_of(samples);
  for (Label l : {Label::immature, Label::mature}) {
    std::size_t have = 0;
    for (const auto& [line, idx] : cells[l]) have += idx.size();
    if (have < k)
      throw Error(ErrorKind::fold, std::string("class ") + to_string(l) + " has " + std::to_string(have) +
                                       " samples, fewer than k = " + std::to_string(k));
  }
  auto rng = Rng::stream(seed, "kfold");
  std::vector<std::size_t> fold_of(samples.size(), 0);
  std::size_t deal = 0;
  for (auto& [label, lines] : cells) {
    for (auto& [line, idx] : lines) {
      rng.shuffle(idx);
      for (std::size_t i : idx) fold_of[i] = deal++ % k;
    }
  }
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t f = 0; f < k; ++f)
      (fold_of[i] == f ? folds[f].val_ids : folds[f].train_ids).push_back(samples[i].video_id);
  return folds;
}

// Fills missing beating durations with c_time + r_time + the cell line's mean plateau,
// the mean taken over that line's fully measured samples (all groups). Lines without
// any measured sample fall back to the mean over all lines. Returns the count imputed.
inline std::size_t impute_missing_durations(std::vector<Sample>& samples) {
  std::map<std::string, std::pair<double, std::size_t>> per_line;
  double total = 0.0;
  std::size_t total_n = 0;
  for (const auto& s : samples) {
    if (s.features.beating_duration_missing() || s.features.beating_duration_imputed) continue;
    auto& [sum, n] = per_line[s.cell_line];
    sum += plateau_time(s.features);
    ++n;
    total += plateau_time(s.features);
    ++total_n;
  }
  std::size_t imputed = 0;
  for (auto& s : samples) {
    if (!s.features.beating_duration_missing()) continue;
    const auto it = per_line.find(s.cell_line);
    double plateau;
    if (it != per_line.end()) {
      plateau = it->second.first / static_cast<double>(it->second.second);
    } else if (total_n > 0) {
      plateau = total / static_cast<double>(total_n);
    } else {
      throw Error(ErrorKind::insufficient_data, "no sample with a measured beating duration to impute from");
    }
    s.features = impute_beating_duration(s.features, std::max(0.0, plateau));
    ++imputed;
  }
  return imputed;
}

// ---------------------------------------------------------------------------
// Feature table CSV

inline const std::string& feature_table_header() {
  static const std::string header = [] {
    std::string h = "video_id,cell_line,group";
    for (auto name : kFeatureNames) h += "," + std::string(name);
    return h + ",imputed";
  }();
  return header;
}

inline std::string feature_table_to_csv(const std::vector<Sample>& samples) {
  std::string out = feature_table_header() + "\n";
  for (const auto& s : samples) {
    out += s.video_id + "," + s.cell_line + "," + to_string(s.group);
    for (double v : s.features.values()) out += "," + (std::isnan(v) ? std::string() : io::format_double(v));
    out += s.features.beating_duration_imputed ? ",1\n" : ",0\n";
  }
  return out;
}

inline std::vector<Sample> feature_table_from_csv(const std::string& text) {
  const auto table = io::parse_csv(text);
  const auto c_id = table.column("video_id");
  const auto c_line = table.column("cell_line");
  const auto c_group = table.column("group");
  std::array<std::size_t, kFeatureCount> c_feat{};
  for (std::size_t j = 0; j < kFeatureCount; ++j) c_feat[j] = table.column(kFeatureNames[j]);
  std::optional<std::size_t> c_imp;
  for (std::size_t i = 0; i < table.header.size(); ++i)
    if (table.header[i] == "imputed") c_imp = i;

  std::vector<Sample> samples;
  std::set<std::string> seen;
  for (const auto& row : table.rows) {
    Sample s;
    s.video_id = row[c_id];
    if (s.video_id.empty() || !seen.insert(s.video_id).second)
      throw Error(ErrorKind::input, "empty or duplicate video id '" + s.video_id + "'");
    s.cell_line = row[c_line];
    s.group = parse_group(row[c_group]);
    std::array<double, kFeatureCount> v{};
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      const auto& cell = row[c_feat[j]];
      if (cell.empty() || cell == "nan" || cell == "NaN") {
        if (j != static_cast<std::size_t>(Feature::beating_duration))
          throw Error(ErrorKind::input, s.video_id + ": only beating_duration may be missing");
        v[j] = std::numeric_limits<double>::quiet_NaN();
      } else {
        v[j] = io::parse_double(cell);
      }
    }
    s.features = FeatureVector::from_values(v);
    if (c_imp) s.features.beating_duration_imputed = row[*c_imp] == "1" || row[*c_imp] == "true";
    samples.push_back(std::move(s));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Split / fold JSON

inline nlohmann::json to_json(const SplitPlan& plan) {
  return {{"seed", plan.seed},
          {"test_fraction", plan.test_fraction},
          {"train_ids", plan.train_ids},
          {"test_ids", plan.test_ids}};
}

inline SplitPlan split_from_json(const nlohmann::json& j) {
  SplitPlan plan;
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.test_fraction = j.value("test_fraction", 0.0);
  plan.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  plan.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  return plan;
}

inline nlohmann::json folds_to_json(const std::vector<Fold>& folds, std::uint64_t seed) {
  auto arr = nlohmann::json::array();
  for (const auto& f : folds) arr.push_back({{"train_ids", f.train_ids}, {"val_ids", f.val_ids}});
  return {{"seed", seed}, {"k", folds.size()}, {"folds", arr}};
}

inline std::vector<Fold> folds_from_json(const nlohmann::json& j) {
  std::vector<Fold> folds;
  for (const auto& f : j.at("folds"))
    folds.push_back({f.at("train_ids").get<std::vector<std::string>>(), f.at("val_ids").get<std::vector<std::string>>()});
  return folds;
}

}  // namespace beatsvm
