// SPDX-License-Identifier: Apache-2.0
#include "ensnet/commands.hpp"

#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>

#include "ensnet/checkpoint.hpp"
#include "ensnet/metrics.hpp"
#include "ensnet/rng.hpp"
#include "ensnet/trainer.hpp"

namespace ensnet {

namespace fs = std::filesystem;

namespace {

LoadOptions load_options(const ArchConfig& arch) {
  return {arch.input_channels, arch.input_size, arch.num_classes};
}

void require_file(const fs::path& p, const char* flag) {
  if (p.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::is_regular_file(p)) throw UsageError(std::string(flag) + ": no such file " + p.string());
}

Dataset strip_labels(Dataset d) {
  for (auto& s : d) s.label.reset();
  return d;
}

fs::path parent_or_cwd(const fs::path& p) {
  return p.has_parent_path() ? p.parent_path() : fs::path(".");
}

std::string fold_list(std::span<const std::size_t> folds) {
  std::string s;
  for (std::size_t i = 0; i < folds.size(); ++i) s += (i ? " " : "") + std::to_string(folds[i]);
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

struct TrialOutcome {
  TrialRates rates;
  std::string log;
};

TrialOutcome run_trial(const RunConfig& config, const Dataset& data, const FoldAssignment& folds,
                       std::size_t t, const fs::path& dir, std::ostream* live) {
  std::ostringstream buffer;
  std::ostream& log = live ? *live : buffer;
  const TrialSplit split = split_trial(t);
  const std::array<std::size_t, 1> test_fold{split.test}, val_fold{split.val};
  const Dataset labelled = select_folds(data, folds, split.labelled);
  const Dataset unlabelled = strip_labels(select_folds(data, folds, split.unlabelled));
  const Dataset val = select_folds(data, folds, val_fold);
  const Dataset test = select_folds(data, folds, test_fold);
  log << "trial " << t << ": test fold " << split.test << ", val fold " << split.val << ", labelled folds "
      << fold_list(split.labelled) << ", unlabelled folds " << fold_list(split.unlabelled) << " ("
      << labelled.size() << "/" << unlabelled.size() << "/" << val.size() << "/" << test.size()
      << " samples)\n";

  // Independent, reproducible streams per trial.
  Phase1Config p1 = config.phase1;
  Phase2Config p2 = config.phase2;
  p1.seed = stream_seed(config.phase1.seed, {t});
  p2.seed = stream_seed(config.phase2.seed, {t});
  EnsembleNetwork<float> net(config.arch, stream_seed(config.seed, {t}));

  auto p1r = run_phase1(std::move(net), labelled, val, p1, &log);
  p1r.curve.write_csv(dir / "phase1.curves.csv");
  save_checkpoint(p1r.best, dir / "before.ckpt");

  TrialOutcome out;
  out.rates.fold = t;
  out.rates.train_before = evaluate(p1r.best, labelled, EvalTarget::ensemble()).rate;
  out.rates.val_before = evaluate(p1r.best, val, EvalTarget::ensemble()).rate;
  out.rates.test_before = evaluate(p1r.best, test, EvalTarget::ensemble()).rate;

  const std::vector<NamedDataset> evals{{"train", &labelled}, {"val", &val}, {"test", &test}};
  auto p2r = run_phase2(std::move(p1r.best), unlabelled, evals, p2, &log);
  p2r.curve.write_csv(dir / "phase2.curves.csv");
  save_checkpoint(p2r.net, dir / "after.ckpt", &p2r.optimizer);
  out.rates.train_after = evaluate(p2r.net, labelled, EvalTarget::ensemble()).rate;
  out.rates.val_after = evaluate(p2r.net, val, EvalTarget::ensemble()).rate;
  out.rates.test_after = evaluate(p2r.net, test, EvalTarget::ensemble()).rate;

  std::ostringstream rates;
  rates << "set,before,after\n"
        << "train," << format_rate(out.rates.train_before) << ',' << format_rate(out.rates.train_after) << '\n'
        << "val," << format_rate(out.rates.val_before) << ',' << format_rate(out.rates.val_after) << '\n'
        << "test," << format_rate(out.rates.test_before) << ',' << format_rate(out.rates.test_after) << '\n';
  write_text(dir / "rates.csv", rates.str());
  log << "trial " << t << " test before " << format_rate(out.rates.test_before) << " after "
      << format_rate(out.rates.test_after) << '\n';
  if (!live) {
    out.log = buffer.str();
    write_text(dir / "log.txt", out.log);
  }
  return out;
}

std::string stats_cells(const ColumnStats& s) {
  return format_rate(s.mean) + "," + format_rate(s.std);
}

}  // namespace

fs::path curves_path_for(const fs::path& ckpt) {
  fs::path p = ckpt;
  return p.replace_extension(".curves.csv");
}

fs::path config_path_for(const fs::path& ckpt) {
  fs::path p = ckpt;
  return p.replace_extension(".config");
}

void ensure_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".ensnet_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw UsageError("output directory not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

void cmd_synth(const SynthOptions& options, std::ostream& log) {
  if (options.out.empty()) throw UsageError("--out is required");
  try {
    options.spec.validate();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  ensure_writable_dir(options.out);
  const SyntheticResult r = gen_synthetic(options.spec, options.out);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * r.calibration_accuracy);
  log << "manifest: " << r.manifest.string() << '\n'
      << "samples: " << r.samples << '\n'
      << "nearest-prototype accuracy: " << buf << "%\n";
}

void cmd_train(const TrainOptions& options, std::ostream& log) {
  RunConfig config = load_run_config(options.config, options.overrides);
  if (!options.data.empty()) config.data_labelled = options.data.string();
  if (!options.val.empty()) config.data_val = options.val.string();
  if (config.data_val.empty()) throw UsageError("--val is required");
  if (options.out.empty()) throw UsageError("--out is required");
  require_file(config.data_labelled, "--data");
  require_file(config.data_val, "--val");
  ensure_writable_dir(parent_or_cwd(options.out));
  write_run_config(config, config_path_for(options.out));

  const Dataset labelled = load_manifest(config.data_labelled, load_options(config.arch));
  const Dataset val = load_manifest(config.data_val, load_options(config.arch));
  log << "phase 1: " << labelled.size() << " labelled, " << val.size() << " validation samples, "
      << config.arch.num_branches << " branches\n";
  auto r = run_phase1(EnsembleNetwork<float>(config.arch, config.seed), labelled, val, config.phase1, &log);
  save_checkpoint(r.best, options.out);
  r.curve.write_csv(curves_path_for(options.out));
  log << "best epoch " << r.best_epoch << " val " << format_rate(r.best_val_rate) << '\n'
      << "checkpoint: " << options.out.string() << '\n';
}

void cmd_retrain(const RetrainOptions& options, std::ostream& log) {
  RunConfig config = load_run_config(options.config, options.overrides);
  if (!options.unlabelled.empty()) config.data_unlabelled = options.unlabelled.string();
  if (options.out.empty()) throw UsageError("--out is required");
  require_file(options.ckpt, "--ckpt");
  require_file(config.data_unlabelled, "--unlabelled");
  std::vector<std::pair<std::string, fs::path>> eval_paths;
  for (const auto& e : options.evals) {
    const auto eq = e.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == e.size())
      throw UsageError("--eval expects name=manifest, got '" + e + "'");
    eval_paths.emplace_back(e.substr(0, eq), e.substr(eq + 1));
    require_file(eval_paths.back().second, "--eval");
  }
  ensure_writable_dir(parent_or_cwd(options.out));

  Checkpoint<float> ck = read_checkpoint<float>(options.ckpt);
  // The checkpoint's architecture is authoritative.
  config.arch = ck.net.config();
  write_run_config(config, config_path_for(options.out));
  const LoadOptions lo = load_options(config.arch);
  const Dataset unlabelled = strip_labels(load_manifest(config.data_unlabelled, lo));
  if (unlabelled.empty()) throw DataError("unlabelled manifest is empty: " + config.data_unlabelled);
  std::vector<Dataset> eval_data;
  eval_data.reserve(eval_paths.size());
  for (const auto& [name, path] : eval_paths) eval_data.push_back(load_manifest(path, lo));
  std::vector<NamedDataset> evals;
  for (std::size_t i = 0; i < eval_paths.size(); ++i) evals.push_back({eval_paths[i].first, &eval_data[i]});

  log << "phase 2: " << unlabelled.size() << " unlabelled samples, " << evals.size() << " eval sets\n";
  auto r = run_phase2(std::move(ck.net), unlabelled, evals, config.phase2, &log);
  save_checkpoint(r.net, options.out, &r.optimizer);
  r.curve.write_csv(curves_path_for(options.out));
  log << "checkpoint: " << options.out.string() << '\n';
}

void cmd_xval(const XvalOptions& options, std::ostream& log) {
  RunConfig config = load_run_config(options.config, options.overrides);
  if (!options.data.empty()) config.data_labelled = options.data.string();
  if (options.out.empty()) throw UsageError("--out is required");
  require_file(config.data_labelled, "--data");
  std::vector<std::size_t> trials = options.folds_subset;
  if (trials.empty())
    for (std::size_t t = 1; t <= kNumFolds; ++t) trials.push_back(t);
  for (std::size_t t : trials)
    if (t < 1 || t > kNumFolds) throw UsageError("--folds-subset entries must be in 1..10");
  ensure_writable_dir(options.out);
  write_run_config(config, options.out / "resolved.config");

  const Dataset data = load_manifest(config.data_labelled, load_options(config.arch));
  const FoldAssignment folds = assign_folds(subjects_of(data));
  log << "cross-validation: " << data.size() << " samples, " << folds.sorted_subjects.size() << " subjects, "
      << trials.size() << " trials\n";

  std::vector<TrialOutcome> outcomes(trials.size());
  std::vector<fs::path> dirs;
  for (std::size_t t : trials) {
    char name[32];
    std::snprintf(name, sizeof name, "trial_%02zu", t);
    dirs.push_back(options.out / name);
    ensure_writable_dir(dirs.back());
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  // Trials only share read-only inputs; each writes its own directory.
#pragma omp parallel for schedule(dynamic) if (options.parallel_trials)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(trials.size()); ++i) {
    try {
      outcomes[i] = run_trial(config, data, folds, trials[i], dirs[i], options.parallel_trials ? nullptr : &log);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  if (options.parallel_trials)
    for (const auto& o : outcomes) log << o.log;

  std::vector<TrialRates> rates;
  for (const auto& o : outcomes) rates.push_back(o.rates);
  const TrialSummary s = aggregate_trials(rates);
  const std::string n = std::to_string(config.arch.num_branches);

  std::ostringstream t1;
  t1 << "branches,train_mean,train_std,val_mean,val_std,test_mean,test_std\n"
     << n << ',' << stats_cells(s.train_before) << ',' << stats_cells(s.val_before) << ','
     << stats_cells(s.test_before) << '\n'
     << n << " (US)," << stats_cells(s.train_after) << ',' << stats_cells(s.val_after) << ','
     << stats_cells(s.test_after) << '\n';
  write_text(options.out / "table1.csv", t1.str());

  std::ostringstream t2;
  t2 << "folds";
  for (const auto& r : s.trials) t2 << ',' << r.fold;
  t2 << '\n' << n << " Branches (US)";
  for (const auto& r : s.trials) t2 << ',' << format_rate(r.test_after);
  t2 << '\n' << n << " Branches";
  for (const auto& r : s.trials) t2 << ',' << format_rate(r.test_before);
  t2 << "\nDifference";
  for (double d : s.test_difference) t2 << ',' << format_difference(d);
  t2 << '\n';
  write_text(options.out / "table2.csv", t2.str());

  std::ostringstream tt;
  std::vector<double> before, after;
  for (const auto& r : s.trials) {
    before.push_back(r.test_before);
    after.push_back(r.test_after);
  }
  try {
    const TTestResult res = paired_t_test(before, after);
    char buf[160];
    std::snprintf(buf, sizeof buf, "t=%.6f\ndf=%zu\np_two_tailed=%.6f\n", res.t, res.df, res.p_two_tailed);
    tt << buf;
  } catch (const DegenerateError& e) {
    tt << "not computed: " << e.what() << '\n';
  }
  write_text(options.out / "ttest.txt", tt.str());

  std::ostringstream report;
  report << "table 1 (mean,std over trials)\n" << t1.str() << "\ntable 2 (test rate per fold)\n" << t2.str()
         << "\npaired t-test on test rates (after - before)\n" << tt.str();
  write_text(options.out / "report.txt", report.str());
  log << '\n' << report.str();
}

void cmd_eval(const EvalOptions& options, std::ostream& log) {
  require_file(options.ckpt, "--ckpt");
  require_file(options.data, "--data");
  if (!options.out.empty()) ensure_writable_dir(options.out);
  const EnsembleNetwork<float> net = load_checkpoint<float>(options.ckpt);
  const Dataset data = load_manifest(options.data, load_options(net.config()));
  const FullEvaluation<float> ev = evaluate_all(net, data);

  auto print_matrix = [&](const std::string& title, const Evaluation& e) {
    log << title << " rate " << format_rate(e.rate) << '\n';
    for (std::size_t i = 0; i < e.matrix.num_classes(); ++i) {
      for (std::size_t j = 0; j < e.matrix.num_classes(); ++j) log << (j ? " " : "  ") << e.matrix.at(i, j);
      log << '\n';
    }
  };
  std::ostringstream rates;
  rates << "classifier,rate\n";
  if (options.per_branch) {
    for (std::size_t b = 0; b < ev.branches.size(); ++b) {
      print_matrix("branch " + std::to_string(b), ev.branches[b]);
      rates << "branch" << b << ',' << format_rate(ev.branches[b].rate) << '\n';
      if (!options.out.empty())
        ev.branches[b].matrix.write_csv(options.out / ("branch" + std::to_string(b) + "_confusion.csv"));
    }
  }
  print_matrix("ensemble", ev.ensemble);
  rates << "ensemble," << format_rate(ev.ensemble.rate) << '\n';
  if (!options.out.empty()) {
    ev.ensemble.matrix.write_csv(options.out / "ensemble_confusion.csv");
    write_text(options.out / "rates.csv", rates.str());
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return 2;
  return 1;
}

}  // namespace ensnet
