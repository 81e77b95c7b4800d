// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <CLI11.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "ensnet/checkpoint.hpp"
#include "ensnet/trainer.hpp"
#include "gradcheck_cases.hpp"

namespace fs = std::filesystem;
using namespace ensnet;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

/// Desk-scale training settings shared by criteria 4 and 5.
struct DeskScale {
  std::size_t image_size = 48;
  std::size_t p1_epochs = 30;
  std::size_t p2_epochs = 10;
  double p1_lr = 0.01;
  double p2_lr = 0.001;
  std::size_t batch = 32;
  double noise_a = 0.15;
  std::uint64_t data_seed = 2024;
  std::size_t shift_seeds = 3;
  bool verbose = false;
};

ArchConfig desk_arch(const DeskScale& d) {
  ArchConfig a;
  a.input_size = d.image_size;
  a.num_branches = 3;
  a.bn_momentum = 0.9;
  return a;
}

Phase1Config desk_phase1(const DeskScale& d, std::uint64_t seed) {
  Phase1Config c;
  c.epochs = d.p1_epochs;
  c.batch_size = d.batch;
  c.portion = 0.5;
  c.sgd.base_lr = d.p1_lr;
  c.seed = seed;
  return c;
}

Phase2Config desk_phase2(const DeskScale& d, std::uint64_t seed) {
  Phase2Config c;
  c.epochs = d.p2_epochs;
  c.batch_size = d.batch;
  c.sgd.base_lr = d.p2_lr;
  c.seed = seed;
  return c;
}

/// Samples whose subject is in `ids`.
Dataset subset(const Dataset& data, const std::set<std::string>& ids) {
  Dataset out;
  for (const auto& s : data)
    if (ids.count(s.subject_id)) out.push_back(s);
  return out;
}

Dataset without_labels(Dataset d) {
  for (auto& s : d) s.label.reset();
  return d;
}

/// Splits the sorted subject list into consecutive groups of the given sizes.
std::vector<std::set<std::string>> subject_groups(const Dataset& data, std::initializer_list<std::size_t> sizes) {
  std::vector<std::string> ids = subjects_of(data);
  std::sort(ids.begin(), ids.end(), subject_less);
  std::vector<std::set<std::string>> out;
  std::size_t at = 0;
  for (std::size_t n : sizes) {
    out.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(at), ids.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
  }
  return out;
}

Verdict criterion_gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_layer;
  for (const auto& [layer, name] : testing::gc_layers())
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
      const double e = testing::gc_layer_error<double>(layer, seed);
      if (!(e <= worst)) {
        worst = e;
        worst_layer = name;
      }
    }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 60.0,
          "max relative error " + fmt("%.3g", worst) + " (" + worst_layer + "), " + fmt("%.2f", secs) + " s"};
}

Verdict criterion_param_counts() {
  const auto pc = param_count(EnsembleNetwork<float>(ArchConfig{}, 1));
  const bool ok = pc.trunk == 154880 && pc.per_branch == 86134 && pc.shared_total == 585550 &&
                  pc.independent_equivalent == 1205070 && pc.savings() == 619520 &&
                  pc.savings() == (pc.num_branches - 1) * pc.trunk;
  std::ostringstream s;
  s << "trunk " << pc.trunk << ", per-branch " << pc.per_branch << ", shared " << pc.shared_total
    << ", independent " << pc.independent_equivalent << ", savings " << pc.savings();
  return {ok, s.str()};
}

Verdict criterion_votes() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> branches(1, 12);
  std::uniform_real_distribution<double> u(0.0, 1.0), temp(0.05, 5.0);
  std::size_t failures = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = branches(rng);
    std::vector<std::vector<double>> probs(n, std::vector<double>(8));
    for (auto& p : probs) {
      double sum = 0;
      for (auto& v : p) sum += (v = u(rng));
      for (auto& v : p) v /= sum;
    }
    const VoteVector votes = ensemble_vote(probs, temp(rng));
    std::uint32_t total = 0;
    for (auto v : votes.counts) total += v;
    const SoftTarget st = soft_target(votes);
    double sum = 0;
    for (double p : st.probs) sum += p;
    const bool ok = total == n && std::abs(sum - 1.0) <= 1e-9 &&
                    argmax_first(st.probs.begin(), st.probs.end()) ==
                        argmax_first(votes.counts.begin(), votes.counts.end());
    failures += ok ? 0 : 1;
  }
  std::vector<std::vector<double>> one_each(8, std::vector<double>(8, 0.0));
  for (std::size_t k = 0; k < 8; ++k) one_each[k][k] = 1.0;
  const SoftTarget uniform = soft_target(ensemble_vote(one_each));
  double dev = 0;
  for (double p : uniform.probs) dev = std::max(dev, std::abs(p - 0.125));
  return {failures == 0 && dev <= 1e-12,
          std::to_string(failures) + "/1000 property failures, uniform deviation " + fmt("%.3g", dev)};
}

Verdict criterion_semi_supervised(const DeskScale& d) {
  const auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.image_size = d.image_size;
  spec.num_subjects = 40;
  spec.seed = d.data_seed;
  const Dataset all = synthesize(spec);
  const auto groups = subject_groups(all, {16, 16, 8});
  const Dataset labelled = subset(all, groups[0]);
  const Dataset unlabelled = without_labels(subset(all, groups[1]));
  const Dataset test = subset(all, groups[2]);

  auto p1 = run_phase1(EnsembleNetwork<float>(desk_arch(d), 11), labelled, Dataset{}, desk_phase1(d, 12));
  const auto ev = evaluate_all(p1.best, test);
  double branch_mean = 0;
  for (const auto& b : ev.branches) branch_mean += b.rate;
  branch_mean /= static_cast<double>(ev.branches.size());
  const double before = ev.ensemble.rate;

  auto p2 = run_phase2(std::move(p1.best), unlabelled, {{"test", &test}}, desk_phase2(d, 13));
  const double after = evaluate(p2.net, test, EvalTarget::ensemble()).rate;
  const double secs = seconds_since(t0);

  const bool a = before >= branch_mean - 0.5, b = after >= before - 2.0, c = secs < 600.0;
  std::ostringstream s;
  s << "(a) ensemble " << format_rate(before) << " vs branch mean " << format_rate(branch_mean)
    << (a ? " ok" : " FAIL") << "; (b) after phase 2 " << format_rate(after) << (b ? " ok" : " FAIL")
    << "; (c) " << fmt("%.1f", secs) << " s" << (c ? " ok" : " FAIL");
  return {a && b && c, s.str()};
}

Verdict criterion_distribution_shift(const DeskScale& d) {
  std::size_t passes = 0;
  std::ostringstream s;
  for (std::size_t k = 0; k < d.shift_seeds; ++k) {
    const std::uint64_t seed = 500 + k;
    SyntheticSpec a;
    a.image_size = d.image_size;
    a.num_subjects = 16;
    a.subject_noise = d.noise_a;
    a.seed = seed;
    a.subject_prefix = "A";
    SyntheticSpec b = a;
    b.num_subjects = 24;
    b.subject_noise = 2.0 * d.noise_a;
    b.seed = seed + 1000;
    b.subject_prefix = "B";
    const Dataset da = synthesize(a);
    const Dataset db = synthesize(b);
    const auto groups = subject_groups(db, {16, 8});
    const Dataset b_unlabelled = without_labels(subset(db, groups[0]));
    const Dataset b_test = subset(db, groups[1]);

    auto p1 = run_phase1(EnsembleNetwork<float>(desk_arch(d), seed), da, Dataset{}, desk_phase1(d, seed + 1));
    const auto p2 = run_phase2(std::move(p1.best), b_unlabelled, {{"b_test", &b_test}}, desk_phase2(d, seed + 2));
    const auto curve = p2.curve.series("b_test");
    if (d.verbose) {
      std::cout << "  seed " << seed << " b_test curve:";
      for (double r : curve) std::cout << ' ' << format_rate(r);
      std::cout << std::endl;
    }
    const double gain = curve.back() - curve.front();
    const bool ok = gain >= 1.0;
    passes += ok ? 1 : 0;
    s << (k ? "; " : "") << "seed " << seed << ": " << format_rate(curve.front()) << " -> "
      << format_rate(curve.back()) << (ok ? " ok" : " short");
  }
  return {2 * passes > d.shift_seeds, std::to_string(passes) + "/" + std::to_string(d.shift_seeds) + " seeds; " + s.str()};
}

Verdict criterion_ttest() {
  const std::vector<double> before{80, 82, 84}, after{82, 85, 86};
  const auto r = paired_t_test(before, after);
  bool degenerate = false;
  const std::vector<double> shifted{81, 83, 85};
  try {
    paired_t_test(before, shifted);
  } catch (const DegenerateError&) {
    degenerate = true;
  }
  const bool ok = std::abs(r.t - 7.0) <= 1e-9 && std::abs(r.p_two_tailed - 0.0198) <= 1e-4 && r.df == 2 && degenerate;
  return {ok, "t " + fmt("%.12f", r.t) + ", p " + fmt("%.6f", r.p_two_tailed) +
                  (degenerate ? ", constant difference rejected" : ", constant difference NOT rejected")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + ENSNET_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict criterion_determinism(const fs::path& work) {
  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto w = dir.string();
  if (run_cli("synth --out " + w + "/lab --subjects 4 --per-class 1 --image-size 24 --seed 1", dir / "log.txt") != 0 ||
      run_cli("synth --out " + w + "/val --subjects 2 --per-class 1 --image-size 24 --seed 2 --subject-prefix V",
              dir / "log.txt") != 0)
    return {false, "synth failed: " + slurp(dir / "log.txt")};
  const std::string train = "train --data " + w + "/lab/manifest.csv --val " + w +
                            "/val/manifest.csv --set arch.input_size=24 --set arch.trunk_filters=8,8"
                            " --set arch.kernel=3 --set arch.num_branches=3 --set phase1.epochs=3"
                            " --set phase1.batch_size=16 --set phase1.lr=0.01 --out ";
  bool same_ckpt = true, same_csv = true;
  for (int r = 1; r <= 2; ++r) {
    const std::string run = w + "/run" + std::to_string(r);
    if (run_cli(train + run + "/model.ckpt", dir / "log.txt") != 0 ||
        run_cli("eval --ckpt " + run + "/model.ckpt --data " + w + "/val/manifest.csv --per-branch --out " + run +
                    "/eval",
                dir / "log.txt") != 0)
      return {false, "CLI run failed: " + slurp(dir / "log.txt")};
  }
  same_ckpt = slurp(dir / "run1/model.ckpt") == slurp(dir / "run2/model.ckpt") &&
              !slurp(dir / "run1/model.ckpt").empty();
  std::size_t csvs = 0;
  for (const auto& e : fs::directory_iterator(dir / "run1/eval")) {
    ++csvs;
    same_csv = same_csv && slurp(e.path()) == slurp(dir / "run2/eval" / e.path().filename());
  }
  return {same_ckpt && same_csv && csvs == 5,
          std::string("checkpoints ") + (same_ckpt ? "identical" : "differ") + ", " + std::to_string(csvs) +
              " eval CSVs " + (same_csv ? "identical" : "differ")};
}

Verdict criterion_serialization(const fs::path& work) {
  EnsembleNetwork<float> net(ArchConfig{}, 77);
  // Non-trivial running statistics.
  std::mt19937_64 rng(78);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (auto& blk : net.trunk()) {
    for (auto& v : blk.bn.running_mean.values()) v = u(rng) - 0.5f;
    for (auto& v : blk.bn.running_var.values()) v = 0.5f + u(rng);
  }
  const fs::path p = work / "serialization.ckpt";
  save_checkpoint(net, p);
  const auto back = load_checkpoint<float>(p);
  std::size_t mismatched = 0;
  for (int i = 0; i < 100; ++i) {
    Tensor<float> x({1, 1, 96, 96});
    for (auto& v : x.values()) v = u(rng);
    const auto y0 = net.infer_all(x), y1 = back.infer_all(x);
    for (std::size_t b = 0; b < y0.size(); ++b)
      if (!std::equal(y0[b].values().begin(), y0[b].values().end(), y1[b].values().begin())) ++mismatched;
  }
  auto bytes = slurp(p);
  bytes.back() = static_cast<char>(bytes.back() ^ 0x5a);
  const fs::path bad = work / "serialization_bad_crc.ckpt";
  std::ofstream(bad, std::ios::binary) << bytes;
  bool rejected = false;
  try {
    load_checkpoint<float>(bad);
  } catch (const FormatError&) {
    rejected = true;
  }
  return {mismatched == 0 && rejected, std::to_string(mismatched) + " of 500 branch outputs differ, corrupted CRC " +
                                           (rejected ? "rejected" : "ACCEPTED")};
}

Verdict criterion_folds() {
  std::vector<std::string> ids;
  for (int i = 1; i <= 123; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%03d", i);
    ids.push_back(buf);
  }
  const FoldAssignment fa = assign_folds(ids);
  const TrialSplit s9 = split_trial(9);
  bool example = s9.test == 9 && s9.val == 10 && s9.labelled == std::array<std::size_t, 4>{1, 2, 3, 4} &&
                 s9.unlabelled == std::array<std::size_t, 4>{5, 6, 7, 8};
  bool disjoint = true;
  for (std::size_t t = 1; t <= kNumFolds; ++t) {
    const TrialSplit s = split_trial(t);
    std::vector<std::size_t> roles{s.test, s.val};
    roles.insert(roles.end(), s.labelled.begin(), s.labelled.end());
    roles.insert(roles.end(), s.unlabelled.begin(), s.unlabelled.end());
    std::set<std::string> seen;
    std::size_t count = 0;
    for (std::size_t f : roles)
      for (const auto& id : fa.subjects_in(f)) {
        ++count;
        seen.insert(id);
      }
    disjoint = disjoint && count == 123 && seen.size() == 123 && std::set<std::size_t>(roles.begin(), roles.end()).size() == 10;
  }
  return {example && disjoint, std::string("t=9 split ") + (example ? "matches" : "DIFFERS") +
                                   ", subjects disjoint across roles in all 10 trials: " + (disjoint ? "yes" : "NO")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ensnet acceptance suite"};
  fs::path work = fs::temp_directory_path() / "ensnet_acceptance";
  std::vector<int> only;
  DeskScale desk;
  app.add_option("--work-dir", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--p1-epochs", desk.p1_epochs);
  app.add_option("--p2-epochs", desk.p2_epochs);
  app.add_option("--p1-lr", desk.p1_lr);
  app.add_option("--p2-lr", desk.p2_lr);
  app.add_option("--noise-a", desk.noise_a);
  app.add_option("--shift-seeds", desk.shift_seeds);
  app.add_flag("--verbose", desk.verbose, "Print learning curves");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient correctness", criterion_gradients},
      {"parameter-sharing arithmetic", criterion_param_counts},
      {"vote and soft-target invariants", criterion_votes},
      {"desk-scale semi-supervised improvement", [&] { return criterion_semi_supervised(desk); }},
      {"cross-distribution retraining", [&] { return criterion_distribution_shift(desk); }},
      {"statistics oracle", criterion_ttest},
      {"determinism", [&] { return criterion_determinism(work); }},
      {"serialization", [&] { return criterion_serialization(work); }},
      {"fold protocol", criterion_folds},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << v.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
