// beatsvm command-line front end.
//
//   beatsvm [--seed N] [--threads N] [--out-dir DIR] [--config FILE] <command> [options]
//
// Every command prints a one-line JSON summary to stdout on success. Errors go to
// stderr and produce a nonzero exit status.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "beatsvm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace beatsvm;

namespace {

struct Globals {
  std::uint64_t seed = 42;
  unsigned threads = 1;
  std::string out_dir = ".";
  std::string config;
};

fs::path out_path(const Globals& g, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : fs::path(g.out_dir) / p;
}

void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::input, path.string() + ": " + e.what());
  }
}

void emit(const json& summary) { std::cout << summary.dump() << std::endl; }

std::vector<Sample> load_table(const std::string& path) { return feature_table_from_csv(io::read_file(path)); }

std::vector<Sample> labeled_only(const std::vector<Sample>& samples) {
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (label_of(s.group)) out.push_back(s);
  return out;
}

json counts_by_label(const std::vector<Sample>& samples) {
  std::size_t imm = 0, mat = 0;
  for (const auto& s : samples) (require_label(s) == Label::mature ? mat : imm)++;
  return {{"immature", imm}, {"mature", mat}, {"total", imm + mat}};
}

json metric_lines(const MetricsReport& r) {
  return {{"accuracy", format_percent(r.accuracy)},
          {"precision", format_percent(r.precision)},
          {"recall", format_percent(r.recall)},
          {"f1", format_percent(r.f1)}};
}

std::vector<Fold> folds_for(const Globals& g, const std::string& folds_file, const std::vector<Sample>& train,
                            std::size_t k) {
  if (!folds_file.empty()) return folds_from_json(read_json(folds_file));
  return kfold(train, k, g.seed);
}

std::vector<SvmModel> load_models(const std::vector<std::string>& paths) {
  std::vector<SvmModel> models;
  for (const auto& p : paths) models.push_back(model_from_json(read_json(p)));
  return models;
}

// Flags in a JSON config object become command-line arguments unless already given.
// Keys are option names without dashes; nested objects keyed by a subcommand name
// apply to that subcommand only.
std::vector<std::string> config_args(const CLI::App& app, const std::vector<std::string>& argv) {
  std::string path;
  for (std::size_t i = 0; i + 1 < argv.size(); ++i)
    if (argv[i] == "--config") path = argv[i + 1];
  for (const auto& a : argv)
    if (a.rfind("--config=", 0) == 0) path = a.substr(9);
  if (path.empty()) return {};
  const json cfg = read_json(path);
  if (!cfg.is_object()) throw Error(ErrorKind::input, "config file must hold a JSON object");

  const CLI::App* sub = nullptr;
  for (const auto& a : argv)
    if (auto* s = app.get_subcommand_no_throw(a)) {
      sub = s;
      break;
    }
  std::set<std::string> given;
  for (const auto& a : argv)
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));

  std::vector<std::string> extra;
  auto add = [&](const std::string& key, const json& value, const CLI::App& owner) {
    if (key == "config" || given.count(key)) return;
    const CLI::Option* opt = owner.get_option_no_throw("--" + key);
    if (!opt) opt = app.get_option_no_throw("--" + key);
    if (!opt) throw Error(ErrorKind::argument, "config key '" + key + "' is not a flag of this command");
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back("--" + key);
      return;
    }
    extra.push_back("--" + key);
    auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array())
      for (const auto& v : value) extra.push_back(scalar(v));
    else
      extra.push_back(scalar(value));
  };
  for (const auto& [key, value] : cfg.items()) {
    if (value.is_object()) {
      if (sub && key == sub->get_name())
        for (const auto& [k2, v2] : value.items()) add(k2, v2, *sub);
      continue;
    }
    if (app.get_option_no_throw("--" + key)) {
      add(key, value, app);
    } else if (sub && sub->get_option_no_throw("--" + key)) {
      add(key, value, *sub);
    }
  }
  return extra;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maturity classification of beating cardiomyocyte videos"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Directory for relative output paths")->capture_default_str();
  app.add_option("--config", g.config, "JSON file supplying any flag");

  // extract ------------------------------------------------------------------
  auto* extract = app.add_subcommand("extract", "Frames to motion-speed trace CSV");
  struct {
    std::string frames, output = "trace.csv";
    double fps = 60.0, pixel_um = 0.65, block_um = 10.4, offset_ms = 67.0, shift_um = 4.69;
  } ex;
  extract->add_option("--frames", ex.frames, "PGM directory, PGM file or raw container")->required();
  extract->add_option("--fps", ex.fps)->capture_default_str();
  extract->add_option("--pixel-size", ex.pixel_um, "Micrometres per pixel")->capture_default_str();
  extract->add_option("--block-um", ex.block_um)->capture_default_str();
  extract->add_option("--offset-ms", ex.offset_ms)->capture_default_str();
  extract->add_option("--max-shift-um", ex.shift_um)->capture_default_str();
  extract->add_option("--output", ex.output)->capture_default_str();

  // features -----------------------------------------------------------------
  auto* features = app.add_subcommand("features", "Traces and annotations to feature table");
  struct {
    std::string manifest, annotations, table, output = "features.csv";
    double min_peak = 1.0, min_sep = 0.1, baseline = 0.10;
    bool no_impute = false;
  } fe;
  auto* fe_manifest = features->add_option("--manifest", fe.manifest, "CSV: video_id,cell_line,group,trace");
  auto* fe_table = features->add_option("--table", fe.table, "Existing feature table to impute");
  fe_manifest->excludes(fe_table);
  features->add_option("--annotations", fe.annotations, "JSON map video_id -> cycles");
  features->add_option("--min-peak-height", fe.min_peak)->capture_default_str();
  features->add_option("--min-separation-s", fe.min_sep)->capture_default_str();
  features->add_option("--baseline-fraction", fe.baseline)->capture_default_str();
  features->add_flag("--no-impute", fe.no_impute, "Leave missing beating durations empty");
  features->add_option("--output", fe.output)->capture_default_str();

  // split --------------------------------------------------------------------
  auto* split = app.add_subcommand("split", "Balance, stratified hold-out split and CV folds");
  struct {
    std::string features, output = "split.json", folds_output = "folds.json", balanced_output = "balanced.csv";
    std::size_t per_class = 115, k = 5;
    double test_fraction = 0.2;
  } sp;
  split->add_option("--features", sp.features)->required();
  split->add_option("--per-class", sp.per_class)->capture_default_str();
  split->add_option("--test-fraction", sp.test_fraction)->capture_default_str();
  split->add_option("--folds", sp.k)->capture_default_str();
  split->add_option("--output", sp.output)->capture_default_str();
  split->add_option("--folds-output", sp.folds_output)->capture_default_str();
  split->add_option("--balanced-output", sp.balanced_output)->capture_default_str();

  // tune ---------------------------------------------------------------------
  auto* tune = app.add_subcommand("tune", "Random search then grid search");
  struct {
    std::string features, split, folds_file, objective = "precision", grid_objective = "accuracy";
    std::size_t random_iters = 200, k = 5;
    bool prune = false, recenter = false;
    double tol = 1e-3;
  } tu;
  tune->add_option("--features", tu.features)->required();
  tune->add_option("--split", tu.split)->required();
  tune->add_option("--folds-file", tu.folds_file, "Fold assignment JSON (default: recomputed from seed)");
  tune->add_option("--random-iters", tu.random_iters)->capture_default_str()->check(CLI::PositiveNumber);
  tune->add_option("--folds", tu.k)->capture_default_str();
  tune->add_option("--objective", tu.objective, "Random-search objective")->capture_default_str();
  tune->add_option("--grid-objective", tu.grid_objective)->capture_default_str();
  tune->add_flag("--prune-inert-axes", tu.prune, "Skip degree/coef0 variation under rbf");
  tune->add_flag("--recenter", tu.recenter, "Centre the grid on the random-search winner");
  tune->add_option("--kkt-tolerance", tu.tol)->capture_default_str();

  // train --------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Fold models and final model");
  struct {
    std::string features, split, params, folds_file, model_dir = "models";
    std::size_t k = 5;
    double tol = 1e-3;
  } tr;
  train_cmd->add_option("--features", tr.features)->required();
  train_cmd->add_option("--split", tr.split)->required();
  train_cmd->add_option("--params", tr.params, "best.json from tune, or a hyperparameter object")->required();
  train_cmd->add_option("--folds-file", tr.folds_file);
  train_cmd->add_option("--folds", tr.k)->capture_default_str();
  train_cmd->add_option("--model-dir", tr.model_dir)->capture_default_str();
  train_cmd->add_option("--kkt-tolerance", tr.tol)->capture_default_str();

  // evaluate -----------------------------------------------------------------
  auto* evaluate = app.add_subcommand("evaluate", "Hold-out metrics of fold models");
  struct {
    std::string features, split, params, output = "metrics.json";
    std::vector<std::string> models;
    bool full_cv = false;
    std::size_t k = 5;
  } ev;
  evaluate->add_option("--features", ev.features)->required();
  evaluate->add_option("--split", ev.split, "Split JSON; its test ids form the hold-out set");
  evaluate->add_option("--models", ev.models, "Model JSON files")->required();
  evaluate->add_flag("--full-cv", ev.full_cv, "Also cross-validate on train+test");
  evaluate->add_option("--params", ev.params, "Hyperparameters for --full-cv");
  evaluate->add_option("--folds", ev.k)->capture_default_str();
  evaluate->add_option("--output", ev.output)->capture_default_str();

  // explain ------------------------------------------------------------------
  auto* explain = app.add_subcommand("explain", "Exact Shapley attributions");
  struct {
    std::string model, features, split, samples = "test", waterfall, beeswarm_out = "beeswarm.csv",
                                                            waterfall_out = "waterfall.csv";
    std::size_t permutations = 0;
  } xp;
  explain->add_option("--model", xp.model)->required();
  explain->add_option("--features", xp.features)->required();
  explain->add_option("--split", xp.split, "Background = train ids (default: all labeled samples)");
  explain->add_option("--samples", xp.samples, "test | train | all | labeled")->capture_default_str();
  explain->add_option("--waterfall", xp.waterfall, "Sample id for the waterfall export (default: first)");
  explain->add_option("--permutations", xp.permutations, "Monte Carlo cross-check permutations (0 = off)");
  explain->add_option("--beeswarm-output", xp.beeswarm_out)->capture_default_str();
  explain->add_option("--waterfall-output", xp.waterfall_out)->capture_default_str();

  // report -------------------------------------------------------------------
  auto* report = app.add_subcommand("report", "Decision distances, histogram and KDE");
  struct {
    std::string model, features, prefix = "distance";
    std::size_t bins = 0, grid = 512;
    double bandwidth = 0.0, fallback = 0.25;
    bool svg = true;
  } rp;
  report->add_option("--model", rp.model)->required();
  report->add_option("--features", rp.features)->required();
  report->add_option("--bins", rp.bins, "0 = Freedman-Diaconis")->capture_default_str();
  report->add_option("--bandwidth", rp.bandwidth, "0 = Scott's rule")->capture_default_str();
  report->add_option("--fallback-bandwidth", rp.fallback)->capture_default_str();
  report->add_option("--grid-points", rp.grid)->capture_default_str();
  report->add_option("--prefix", rp.prefix)->capture_default_str();
  report->add_flag("!--no-svg", rp.svg, "Skip the SVG rendering");

  // synth --------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Synthetic feature table or traces");
  SyntheticSpec spec;
  struct {
    std::string output = "features.csv", trace_dir = "traces";
    bool traces = false, no_signal = false;
  } sy;
  synth->add_option("--n-immature", spec.n_immature)->capture_default_str();
  synth->add_option("--n-mature", spec.n_mature)->capture_default_str();
  synth->add_option("--n-b27", spec.n_b27)->capture_default_str();
  synth->add_option("--missing-fraction", spec.missing_duration_fraction)->capture_default_str();
  synth->add_option("--cell-line-effect", spec.cell_line_effect)->capture_default_str();
  synth->add_flag("--no-signal", sy.no_signal, "Both classes from one profile");
  synth->add_flag("--traces", sy.traces, "Also render traces, manifest and annotations");
  synth->add_option("--trace-dir", sy.trace_dir)->capture_default_str();
  synth->add_option("--fps", spec.frame_rate_hz)->capture_default_str();
  synth->add_option("--duration-s", spec.recording_s)->capture_default_str();
  synth->add_option("--output", sy.output)->capture_default_str();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    const auto extra = config_args(app, args);
    args.insert(args.end(), extra.begin(), extra.end());
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "beatsvm: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*extract) {
      const auto seq = load_frames(ex.frames, ex.fps, ex.pixel_um);
      const auto cfg = config_from_physical(ex.block_um, ex.offset_ms, ex.shift_um, seq);
      const auto trace = estimate_motion(seq, cfg, g.threads);
      const auto out = out_path(g, ex.output);
      io::write_file_atomic(out, trace_to_csv(trace));
      emit({{"command", "extract"},
            {"frames", seq.frames.size()},
            {"samples", trace.t.size()},
            {"blocks", trace.n_blocks},
            {"block_width_px", cfg.block_width_px},
            {"frame_offset_frames", cfg.frame_offset_frames},
            {"max_shift_px", cfg.max_shift_px},
            {"output", out.string()}});
    } else if (*features) {
      std::vector<Sample> samples;
      std::size_t annotated = 0, detected = 0;
      if (!fe.table.empty()) {
        samples = load_table(fe.table);
      } else if (!fe.manifest.empty()) {
        AnnotationSet ann;
        if (!fe.annotations.empty()) ann = annotations_from_json(read_json(fe.annotations));
        const auto table = io::parse_csv(io::read_file(fe.manifest));
        const auto c_id = table.column("video_id"), c_line = table.column("cell_line"),
                   c_group = table.column("group"), c_trace = table.column("trace");
        const fs::path base = fs::path(fe.manifest).parent_path();
        std::set<std::string> seen;
        for (const auto& row : table.rows) {
          Sample s;
          s.video_id = row[c_id];
          if (!seen.insert(s.video_id).second) throw Error(ErrorKind::input, "duplicate video id " + s.video_id);
          s.cell_line = row[c_line];
          s.group = parse_group(row[c_group]);
          fs::path tp(row[c_trace]);
          if (tp.is_relative()) tp = base / tp;
          try {
            const auto trace = trace_from_csv(io::read_file(tp));
            std::vector<BeatCycle> cycles;
            if (ann.count(s.video_id)) {
              cycles = apply_annotations(trace, ann, s.video_id);
              ++annotated;
            } else {
              cycles = detect_beats(trace, {fe.min_peak, fe.min_sep, fe.baseline});
              ++detected;
            }
            s.features = extract_features(trace, cycles);
          } catch (const Error& e) {
            throw Error(e.kind(), s.video_id + ": " + e.what());
          }
          samples.push_back(std::move(s));
        }
      } else {
        throw Error(ErrorKind::argument, "features needs --manifest or --table");
      }
      const std::size_t imputed = fe.no_impute ? 0 : impute_missing_durations(samples);
      const auto out = out_path(g, fe.output);
      io::write_file_atomic(out, feature_table_to_csv(samples));
      emit({{"command", "features"},
            {"samples", samples.size()},
            {"annotated", annotated},
            {"detected", detected},
            {"imputed", imputed},
            {"output", out.string()}});
    } else if (*split) {
      const auto all = labeled_only(load_table(sp.features));
      for (const auto& s : all)
        if (s.features.beating_duration_missing())
          throw Error(ErrorKind::input, s.video_id + ": missing beating_duration; run features --table first");
      const auto balanced = balance_subsample(all, sp.per_class, g.seed);
      const auto plan = stratified_split(balanced, sp.test_fraction, g.seed);
      const auto folds = kfold(select(balanced, plan.train_ids), sp.k, g.seed);
      io::write_file_atomic(out_path(g, sp.balanced_output), feature_table_to_csv(balanced));
      write_json(out_path(g, sp.output), to_json(plan));
      write_json(out_path(g, sp.folds_output), folds_to_json(folds, g.seed));
      std::vector<std::size_t> fold_sizes;
      for (const auto& f : folds) fold_sizes.push_back(f.val_ids.size());
      emit({{"command", "split"},
            {"seed", g.seed},
            {"balanced", counts_by_label(balanced)},
            {"train", counts_by_label(select(balanced, plan.train_ids))},
            {"test", counts_by_label(select(balanced, plan.test_ids))},
            {"fold_sizes", fold_sizes},
            {"output", out_path(g, sp.output).string()}});
    } else if (*tune) {
      const auto samples = load_table(tu.features);
      const auto plan = split_from_json(read_json(tu.split));
      const auto train_set = select(samples, plan.train_ids);
      const auto folds = folds_for(g, tu.folds_file, train_set, tu.k);
      TrainConfig cfg;
      cfg.kkt_tolerance = tu.tol;
      cfg.seed = g.seed;

      RandomSearchSpace rs;
      rs.iterations = tu.random_iters;
      rs.objective = parse_objective(tu.objective);
      const auto random = random_search(train_set, folds, rs, g.seed, cfg, g.threads);
      io::write_file_atomic(out_path(g, "random_search.csv"), results_to_csv(random));

      GridSearchSpace gs;
      gs.objective = parse_objective(tu.grid_objective);
      gs.prune_inert_axes = tu.prune;
      if (tu.recenter) gs = gs.recentered(random.front().params);
      const auto grid = grid_search(train_set, folds, gs, cfg, g.threads);
      io::write_file_atomic(out_path(g, "grid_search.csv"), results_to_csv(ranked(grid.table, gs.objective)));

      const auto& best = grid.table[grid.best_index];
      const json summary = {{"command", "tune"},
                            {"seed", g.seed},
                            {"folds", folds.size()},
                            {"random_iterations", random.size()},
                            {"random_best", to_json(random.front().params)},
                            {"random_best_report", to_json(random.front().report)},
                            {"grid_cells", grid.table.size()},
                            {"grid", gs.definition()},
                            {"best", to_json(best.params)},
                            {"best_report", to_json(best.report)},
                            {"best_lines", metric_lines(best.report)}};
      write_json(out_path(g, "best.json"), summary);
      emit({{"command", "tune"},
            {"random_iterations", random.size()},
            {"grid_cells", grid.table.size()},
            {"best", to_json(best.params)},
            {"cv_accuracy", format_percent(best.report.accuracy)},
            {"output", out_path(g, "best.json").string()}});
    } else if (*train_cmd) {
      const auto samples = load_table(tr.features);
      const auto plan = split_from_json(read_json(tr.split));
      const auto train_set = select(samples, plan.train_ids);
      const json pj = read_json(tr.params);
      const auto hp = hyperparams_from_json(pj.contains("best") ? pj.at("best") : pj);
      const auto folds = folds_for(g, tr.folds_file, train_set, tr.k);
      TrainConfig cfg;
      cfg.kkt_tolerance = tr.tol;
      cfg.seed = g.seed;
      const auto models = fit_fold_models(train_set, folds, hp, cfg);
      std::vector<std::string> paths;
      for (std::size_t f = 0; f < models.size(); ++f) {
        const auto p = out_path(g, (fs::path(tr.model_dir) / ("fold_" + std::to_string(f) + ".json")).string());
        write_json(p, to_json(models[f]));
        paths.push_back(p.string());
      }
      const auto final_model = fit(train_set, hp, cfg);
      const auto final_path = out_path(g, (fs::path(tr.model_dir) / "model.json").string());
      write_json(final_path, to_json(final_model));
      std::vector<std::size_t> n_sv;
      for (const auto& m : models) n_sv.push_back(m.dual_coefs.size());
      emit({{"command", "train"},
            {"params", to_json(hp)},
            {"fold_models", paths},
            {"support_vectors", n_sv},
            {"model", final_path.string()}});
    } else if (*evaluate) {
      const auto samples = load_table(ev.features);
      std::vector<Sample> test_set;
      if (!ev.split.empty()) test_set = select(samples, split_from_json(read_json(ev.split)).test_ids);
      else test_set = labeled_only(samples);
      const auto models = load_models(ev.models);
      const auto rep = evaluate_holdout(models, test_set);
      json out = {{"command", "evaluate"},
                  {"models", models.size()},
                  {"test_samples", test_set.size()},
                  {"holdout", to_json(rep)},
                  {"holdout_lines", metric_lines(rep)}};
      if (rep.precision_undefined()) out["warnings"] = {"precision undefined (no positive predictions) in some model; reported as 0"};
      for (const char* m : {"accuracy", "precision", "recall", "f1"})
        std::cerr << "test " << m << ": " << out["holdout_lines"][m].get<std::string>() << "\n";
      if (ev.full_cv) {
        if (ev.split.empty() || ev.params.empty()) throw Error(ErrorKind::argument, "--full-cv needs --split and --params");
        const auto plan = split_from_json(read_json(ev.split));
        auto ids = plan.train_ids;
        ids.insert(ids.end(), plan.test_ids.begin(), plan.test_ids.end());
        const auto full = select(samples, ids);
        const json pj = read_json(ev.params);
        const auto hp = hyperparams_from_json(pj.contains("best") ? pj.at("best") : pj);
        const auto cv = cross_validate(full, kfold(full, ev.k, g.seed), hp);
        out["full_cv"] = to_json(cv);
        out["full_cv_lines"] = metric_lines(cv);
        out["full_cv_seed"] = g.seed;
      }
      write_json(out_path(g, ev.output), out);
      emit({{"command", "evaluate"},
            {"test_samples", test_set.size()},
            {"accuracy", format_percent(rep.accuracy)},
            {"precision", format_percent(rep.precision)},
            {"recall", format_percent(rep.recall)},
            {"f1", format_percent(rep.f1)},
            {"accuracy_mean", rep.accuracy.mean},
            {"accuracy_sd", rep.accuracy.sd},
            {"output", out_path(g, ev.output).string()}});
    } else if (*explain) {
      const auto model = model_from_json(read_json(xp.model));
      const auto samples = load_table(xp.features);
      std::vector<Sample> background_set, targets;
      std::optional<SplitPlan> plan;
      if (!xp.split.empty()) plan = split_from_json(read_json(xp.split));
      background_set = plan ? select(samples, plan->train_ids) : labeled_only(samples);
      if (xp.samples == "test") targets = plan ? select(samples, plan->test_ids) : labeled_only(samples);
      else if (xp.samples == "train") targets = background_set;
      else if (xp.samples == "labeled") targets = labeled_only(samples);
      else if (xp.samples == "all") targets = samples;
      else throw Error(ErrorKind::argument, "unknown --samples '" + xp.samples + "'");
      if (targets.empty()) throw Error(ErrorKind::size, "no samples to explain");

      auto normalize = [&](const std::vector<Sample>& v) {
        const Matrix raw = feature_matrix(v);
        return model.normalization.size() ? model.normalization.apply(raw) : raw;
      };
      const BackgroundSet bg{normalize(background_set)};
      const Matrix raw_targets = feature_matrix(targets);
      const Matrix xs = normalize(targets);
      const SvmDecision f{&model};
      std::vector<ShapExplanation> expl(targets.size());
      for (std::size_t i = 0; i < targets.size(); ++i) expl[i] = exact_shapley(f, xs.row(i), bg, g.threads);

      std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
      const auto ids = ids_of(targets);
      io::write_file_atomic(out_path(g, xp.beeswarm_out), beeswarm_to_csv(beeswarm_export(expl, ids, raw_targets, names)));
      std::size_t wf = 0;
      if (!xp.waterfall.empty()) {
        const auto it = std::find(ids.begin(), ids.end(), xp.waterfall);
        if (it == ids.end()) throw Error(ErrorKind::argument, "waterfall sample '" + xp.waterfall + "' not explained");
        wf = static_cast<std::size_t>(it - ids.begin());
      }
      io::write_file_atomic(out_path(g, xp.waterfall_out), waterfall_to_csv(waterfall_export(expl[wf], names)));

      std::vector<double> fx;
      double max_eff = 0.0;
      for (const auto& e : expl) {
        fx.push_back(e.fx);
        double s = e.base_value;
        for (double p : e.phi) s += p;
        max_eff = std::max(max_eff, std::abs(s - e.fx));
      }
      const auto rescaled = rescaled_outputs(fx);
      const auto order = importance_order(expl);
      std::vector<std::string> ranking;
      for (auto j : order) ranking.push_back(names[j]);
      json summary = {{"command", "explain"},
                      {"samples", targets.size()},
                      {"background", bg.size()},
                      {"coalitions", std::size_t{1} << kFeatureCount},
                      {"base_value", expl.front().base_value},
                      {"ranking", ranking},
                      {"max_efficiency_error", max_eff},
                      {"waterfall_sample", ids[wf]},
                      {"waterfall_fx", expl[wf].fx},
                      {"waterfall_fx_rescaled", rescaled[wf]},
                      {"beeswarm", out_path(g, xp.beeswarm_out).string()},
                      {"waterfall", out_path(g, xp.waterfall_out).string()}};
      if (xp.permutations > 0) {
        const auto mc = sampled_shapley(f, xs.row(wf), bg, xp.permutations, g.seed);
        double worst = 0.0;
        for (std::size_t j = 0; j < kFeatureCount; ++j) {
          const double se = mc.std_error[j];
          const double dev = std::abs(mc.estimate.phi[j] - expl[wf].phi[j]);
          worst = std::max(worst, se > 0 ? dev / se : (dev > 1e-12 ? INFINITY : 0.0));
        }
        summary["sampled_max_z"] = worst;
      }
      emit(summary);
    } else if (*report) {
      const auto model = model_from_json(read_json(rp.model));
      const auto samples = load_table(rp.features);
      DistanceReportOptions opt;
      opt.bins = rp.bins;
      if (rp.bandwidth > 0.0) opt.bandwidth = rp.bandwidth;
      opt.fallback_bandwidth = rp.fallback;
      opt.grid_points = rp.grid;
      const auto rep = distance_report(model, samples, opt);
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
      io::write_file_atomic(out_path(g, rp.prefix + "_values.csv"), distances_to_csv(rep));
      io::write_file_atomic(out_path(g, rp.prefix + "_histogram.csv"), histogram_to_csv(rep));
      io::write_file_atomic(out_path(g, rp.prefix + "_kde.csv"), kde_to_csv(rep));
      if (rp.svg) io::write_file_atomic(out_path(g, rp.prefix + ".svg"), distance_report_svg(rep));
      json groups = json::object();
      for (const auto& c : rep.kde) {
        double lo = INFINITY, hi = -INFINITY, mean = 0.0;
        std::size_t n = 0;
        for (const auto& e : rep.entries)
          if (e.group == c.group) {
            lo = std::min(lo, e.distance);
            hi = std::max(hi, e.distance);
            mean += e.distance;
            ++n;
          }
        groups[to_string(c.group)] = {{"n", n},
                                      {"min", lo},
                                      {"max", hi},
                                      {"mean", mean / static_cast<double>(n)},
                                      {"bandwidth", c.bandwidth},
                                      {"kde_integral", trapezoid(rep.kde_grid, c.density)}};
      }
      emit({{"command", "report"},
            {"samples", rep.entries.size()},
            {"bins", rep.histogram.edges.size() - 1},
            {"groups", groups},
            {"warnings", rep.warnings},
            {"output_prefix", out_path(g, rp.prefix).string()}});
    } else if (*synth) {
      const std::size_t n_imm = spec.n_immature, n_mat = spec.n_mature, n_b27 = spec.n_b27;
      const double missing = spec.missing_duration_fraction, effect = spec.cell_line_effect;
      if (sy.no_signal) spec = SyntheticSpec::no_signal();
      spec.n_immature = n_imm;
      spec.n_mature = n_mat;
      spec.n_b27 = n_b27;
      spec.missing_duration_fraction = missing;
      spec.cell_line_effect = effect;
      spec.seed = g.seed;
      json summary = {{"command", "synth"}, {"seed", g.seed}};
      if (sy.traces) {
        const auto videos = generate_synthetic_traces(spec);
        std::string manifest = "video_id,cell_line,group,trace\n";
        AnnotationSet ann;
        std::vector<Sample> targets;
        const fs::path trace_dir = out_path(g, sy.trace_dir);
        for (const auto& v : videos) {
          const auto name = v.sample.video_id + ".csv";
          io::write_file_atomic(trace_dir / name, trace_to_csv(v.trace));
          manifest += v.sample.video_id + "," + v.sample.cell_line + "," + to_string(v.sample.group) + "," +
                      (fs::path(sy.trace_dir) / name).string() + "\n";
          ann[v.sample.video_id] = v.cycles;
          targets.push_back(v.sample);
        }
        io::write_file_atomic(out_path(g, "manifest.csv"), manifest);
        write_json(out_path(g, "annotations.json"), annotations_to_json(ann));
        io::write_file_atomic(out_path(g, sy.output), feature_table_to_csv(targets));
        summary["videos"] = videos.size();
        summary["manifest"] = out_path(g, "manifest.csv").string();
        summary["annotations"] = out_path(g, "annotations.json").string();
      } else {
        const auto samples = generate_synthetic(spec);
        io::write_file_atomic(out_path(g, sy.output), feature_table_to_csv(samples));
        summary["samples"] = samples.size();
      }
      summary["output"] = out_path(g, sy.output).string();
      emit(summary);
    }
  } catch (const std::exception& e) {
    std::cerr << "beatsvm: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
