// SPDX-License-Identifier: Apache-2.0
// End-to-end runs of the ensnet binary.
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

// Scratch directory, removed at exit.
struct WorkDir {
  fs::path path = fs::temp_directory_path() / ("ensnet_cli_" + std::to_string(::getpid()));
  WorkDir() {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~WorkDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

const fs::path& work() {
  static const WorkDir d;
  return d.path;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run ensnet(const std::string& args) {
  const fs::path log = work() / "last_output.txt";
  const std::string cmd = std::string("\"") + ENSNET_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = slurp(log);
  return r;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Small, fast settings shared by the training commands.
const std::string kSmall =
    " --set arch.input_size=24 --set arch.trunk_filters=6,8 --set arch.kernel=3 --set arch.branch_filters=8"
    " --set arch.hidden_units=16 --set arch.num_branches=3 --set arch.bn_momentum=0.9"
    " --set phase1.batch_size=16 --set phase1.lr=0.01 --set phase2.batch_size=16";

// Datasets: lab (S*), val (V*), test (T*).
void make_sets() {
  static bool done = false;
  if (done) return;
  const auto w = work().string();
  REQUIRE(ensnet("synth --out " + w + "/lab --subjects 4 --per-class 1 --image-size 24 --seed 1").code == 0);
  REQUIRE(ensnet("synth --out " + w + "/val --subjects 2 --per-class 1 --image-size 24 --seed 2 --subject-prefix V").code == 0);
  REQUIRE(ensnet("synth --out " + w + "/test --subjects 2 --per-class 1 --image-size 24 --seed 3 --subject-prefix T").code == 0);
  done = true;
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(ensnet("--help").code == 0);
  CHECK(ensnet("").code == 2);
  CHECK(ensnet("frobnicate").code == 2);
  CHECK(ensnet("train --out x.ckpt --bogus 1").code == 2);
}

TEST_CASE("synth: defaults, determinism, unwritable directory") {
  const auto w = work().string();
  const auto r = ensnet("synth --out " + w + "/syn_a --subjects 12 --image-size 32");
  REQUIRE(r.code == 0);
  CHECK(r.output.find("manifest: ") != std::string::npos);
  CHECK(r.output.find("nearest-prototype accuracy: ") != std::string::npos);
  REQUIRE(ensnet("synth --out " + w + "/syn_b --subjects 12 --image-size 32").code == 0);
  CHECK(slurp(work() / "syn_a/manifest.csv") == slurp(work() / "syn_b/manifest.csv"));
  for (const auto& e : fs::directory_iterator(work() / "syn_a/images"))
    CHECK(slurp(e.path()) == slurp(work() / "syn_b/images" / e.path().filename()));
  CHECK(count_lines(slurp(work() / "syn_a/manifest.csv")) == 1 + 12 * 8 * 2);

  const auto d = ensnet("synth --out " + w + "/syn_default --image-size 16");
  REQUIRE(d.code == 0);
  CHECK(d.output.find("samples: 640") != std::string::npos);

  std::ofstream(work() / "a_file") << "x";
  const auto bad = ensnet("synth --out " + w + "/a_file/sub");
  CHECK(bad.code == 2);
  CHECK(bad.output.find("a_file") != std::string::npos);
  CHECK(ensnet("synth --out " + w + "/syn_c --subjects 0").code == 2);
}

TEST_CASE("train: usage errors, smoke run, determinism") {
  make_sets();
  const auto w = work().string();
  const std::string data = " --data " + w + "/lab/manifest.csv";
  const std::string val = " --val " + w + "/val/manifest.csv";

  CHECK(ensnet("train" + data + " --out " + w + "/t.ckpt").code == 2);  // missing --val
  CHECK(ensnet("train" + data + val + " --out " + w + "/t.ckpt --set arch.nope=1").code == 2);
  CHECK(ensnet("train" + data + val + " --out " + w + "/t.ckpt --set phase2.lr=0.5").code == 2);
  CHECK(ensnet("train --data " + w + "/missing.csv" + val + " --out " + w + "/t.ckpt").code == 2);
  std::ofstream(work() / "bad.cfg") << "arch.num_branches=3\nthis is not valid\n";
  const auto cfg = ensnet("train --config " + w + "/bad.cfg" + data + val + " --out " + w + "/t.ckpt");
  CHECK(cfg.code == 2);
  CHECK(cfg.output.find("bad.cfg:2:") != std::string::npos);

  const auto r = ensnet("train" + data + val + " --out " + w + "/run1/model.ckpt --set phase1.epochs=5" + kSmall);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::is_regular_file(work() / "run1/model.ckpt"));
  CHECK(fs::is_regular_file(work() / "run1/model.curves.csv"));
  CHECK(fs::is_regular_file(work() / "run1/model.config"));
  CHECK(count_lines(slurp(work() / "run1/model.curves.csv")) == 1 + 2 * 5);
  CHECK(r.output.find("phase1 epoch 5/5") != std::string::npos);

  REQUIRE(ensnet("train" + data + val + " --out " + w + "/run2/model.ckpt --set phase1.epochs=5" + kSmall).code == 0);
  CHECK(slurp(work() / "run1/model.ckpt") == slurp(work() / "run2/model.ckpt"));
  CHECK(slurp(work() / "run1/model.curves.csv") == slurp(work() / "run2/model.curves.csv"));
}

TEST_CASE("retrain and eval") {
  make_sets();
  const auto w = work().string();
  const std::string lab = w + "/lab/manifest.csv", val = w + "/val/manifest.csv", test = w + "/test/manifest.csv";
  REQUIRE(ensnet("train --data " + lab + " --val " + val + " --out " + w + "/base.ckpt --set phase1.epochs=3" + kSmall).code == 0);

  const std::string evals = " --eval train=" + lab + " --eval val=" + val + " --eval test=" + test;
  const auto r = ensnet("retrain --ckpt " + w + "/base.ckpt --unlabelled " + test + evals + " --out " + w +
                        "/re.ckpt --set phase2.epochs=2 --set phase2.batch_size=16");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(count_lines(slurp(work() / "re.curves.csv")) == 1 + 3 * (2 + 1));

  // Zero epochs: forward-identical output checkpoint (parameters and statistics unchanged).
  REQUIRE(ensnet("retrain --ckpt " + w + "/base.ckpt --unlabelled " + test + " --eval test=" + test + " --out " + w +
                 "/zero.ckpt --set phase2.epochs=0").code == 0);
  REQUIRE(ensnet("eval --ckpt " + w + "/base.ckpt --data " + test + " --per-branch --out " + w + "/ev_base").code == 0);
  REQUIRE(ensnet("eval --ckpt " + w + "/zero.ckpt --data " + test + " --per-branch --out " + w + "/ev_zero").code == 0);
  for (const char* f : {"rates.csv", "ensemble_confusion.csv", "branch0_confusion.csv", "branch2_confusion.csv"})
    CHECK(slurp(work() / "ev_base" / f) == slurp(work() / "ev_zero" / f));

  CHECK(ensnet("retrain --ckpt " + w + "/base.ckpt --unlabelled " + test + " --eval test --out " + w + "/x.ckpt").code == 2);
  std::ofstream(work() / "garbage.ckpt") << "not a checkpoint at all";
  CHECK(ensnet("retrain --ckpt " + w + "/garbage.ckpt --unlabelled " + test + " --out " + w + "/x.ckpt").code == 1);

  const auto e1 = ensnet("eval --ckpt " + w + "/re.ckpt --data " + test + " --per-branch --out " + w + "/ev1");
  REQUIRE(e1.code == 0);
  const auto e2 = ensnet("eval --ckpt " + w + "/re.ckpt --data " + test + " --per-branch --out " + w + "/ev2");
  CHECK(e1.output == e2.output);
  std::size_t matrices = 0;
  for (const auto& e : fs::directory_iterator(work() / "ev1")) {
    const auto name = e.path().filename().string();
    if (name.find("_confusion.csv") != std::string::npos) {
      ++matrices;
      CHECK(slurp(e.path()) == slurp(work() / "ev2" / name));
    }
  }
  CHECK(matrices == 4);  // 3 branches + ensemble
  CHECK(slurp(work() / "ev1/rates.csv") == slurp(work() / "ev2/rates.csv"));
  CHECK(count_lines(slurp(work() / "ev1/rates.csv")) == 1 + 4);
  CHECK(e1.output.find("ensemble rate ") != std::string::npos);
  const auto no_branches = ensnet("eval --ckpt " + w + "/re.ckpt --data " + test);
  CHECK(no_branches.output.find("branch 0") == std::string::npos);
}

TEST_CASE("eval with five branches prints six matrices") {
  make_sets();
  const auto w = work().string();
  const std::string lab = w + "/lab/manifest.csv", val = w + "/val/manifest.csv";
  REQUIRE(ensnet("train --data " + lab + " --val " + val + " --out " + w + "/five.ckpt --set phase1.epochs=1" + kSmall +
                 " --set arch.num_branches=5").code == 0);
  const auto r = ensnet("eval --ckpt " + w + "/five.ckpt --data " + val + " --per-branch");
  REQUIRE(r.code == 0);
  std::size_t titles = 0;
  for (std::size_t pos = 0; (pos = r.output.find(" rate ", pos)) != std::string::npos; ++pos) ++titles;
  CHECK(titles == 6);
}

TEST_CASE("xval: ten trials and a folds subset") {
  const auto w = work().string();
  REQUIRE(ensnet("synth --out " + w + "/xdata --subjects 12 --per-class 1 --image-size 24 --seed 4").code == 0);
  const std::string base = "xval --data " + w + "/xdata/manifest.csv --set phase1.epochs=1 --set phase2.epochs=1" + kSmall;
  const auto r = ensnet(base + " --out " + w + "/xv");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  std::size_t trials = 0;
  for (const auto& e : fs::directory_iterator(work() / "xv"))
    if (e.is_directory()) {
      ++trials;
      for (const char* f : {"phase1.curves.csv", "before.ckpt", "phase2.curves.csv", "after.ckpt", "rates.csv"})
        CHECK(fs::is_regular_file(e.path() / f));
    }
  CHECK(trials == 10);
  for (const char* f : {"resolved.config", "table1.csv", "table2.csv", "ttest.txt", "report.txt"})
    CHECK(fs::is_regular_file(work() / "xv" / f));
  const auto t1 = slurp(work() / "xv/table1.csv");
  CHECK(t1.rfind("branches,train_mean,train_std,val_mean,val_std,test_mean,test_std\n3,", 0) == 0);
  CHECK(t1.find("\n3 (US),") != std::string::npos);
  const auto t2 = slurp(work() / "xv/table2.csv");
  CHECK(t2.rfind("folds,1,2,3,4,5,6,7,8,9,10\n", 0) == 0);
  CHECK(t2.find("\nDifference,") != std::string::npos);

  // Difference row = after - before per fold.
  std::istringstream rows(t2);
  std::string header, us, plain, diff;
  std::getline(rows, header);
  std::getline(rows, us);
  std::getline(rows, plain);
  std::getline(rows, diff);
  auto cells = [](const std::string& line) {
    std::vector<std::string> c;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) c.push_back(item);
    return c;
  };
  const auto a = cells(us), b = cells(plain), d = cells(diff);
  REQUIRE(a.size() == 11);
  for (std::size_t i = 1; i < 11; ++i) {
    const double expect = std::stod(a[i]) - std::stod(b[i]);
    CHECK(std::abs(std::stod(d[i]) - expect) <= 0.011);
  }

  const auto s = ensnet(base + " --out " + w + "/xv_sub --folds-subset 8,7");
  REQUIRE(s.code == 0);
  CHECK(fs::is_directory(work() / "xv_sub/trial_08"));
  CHECK(fs::is_directory(work() / "xv_sub/trial_07"));
  CHECK_FALSE(fs::exists(work() / "xv_sub/trial_01"));
  CHECK(slurp(work() / "xv_sub/trial_08/rates.csv") == slurp(work() / "xv/trial_08/rates.csv"));
  CHECK(slurp(work() / "xv_sub/table2.csv").rfind("folds,8,7\n", 0) == 0);

  CHECK(ensnet(base + " --out " + w + "/xv_bad --folds-subset 11").code == 2);
  REQUIRE(ensnet("synth --out " + w + "/few --subjects 6 --per-class 1 --image-size 24").code == 0);
  CHECK(ensnet("xval --data " + w + "/few/manifest.csv --out " + w + "/xv_few" + kSmall).code == 1);
}
