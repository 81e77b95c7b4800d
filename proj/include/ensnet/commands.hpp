// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ensnet/config.hpp"
#include "ensnet/data.hpp"

namespace ensnet {

/// Bad command-line usage or an unusable output location (exit code 2).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SynthOptions {
  std::filesystem::path out;
  SyntheticSpec spec;
};

struct TrainOptions {
  std::filesystem::path config;  // may be empty
  KeyValues overrides;
  std::filesystem::path data;
  std::filesystem::path val;
  std::filesystem::path out;  // checkpoint path
};

struct RetrainOptions {
  std::filesystem::path config;
  KeyValues overrides;
  std::filesystem::path ckpt;
  std::filesystem::path unlabelled;
  std::vector<std::string> evals;  // name=manifest
  std::filesystem::path out;
};

struct XvalOptions {
  std::filesystem::path config;
  KeyValues overrides;
  std::filesystem::path data;
  std::filesystem::path out;  // directory
  std::vector<std::size_t> folds_subset;  // empty = all ten trials
  bool parallel_trials = false;
};

struct EvalOptions {
  std::filesystem::path ckpt;
  std::filesystem::path data;
  bool per_branch = false;
  std::filesystem::path out;  // directory for CSVs; may be empty
};

/// Files written next to checkpoint `ckpt`: `<stem>.curves.csv`, `<stem>.config`.
std::filesystem::path curves_path_for(const std::filesystem::path& ckpt);
std::filesystem::path config_path_for(const std::filesystem::path& ckpt);

/// Creates `dir` if needed and checks it accepts files; UsageError naming
/// the path otherwise.
void ensure_writable_dir(const std::filesystem::path& dir);

void cmd_synth(const SynthOptions& options, std::ostream& log);
void cmd_train(const TrainOptions& options, std::ostream& log);
void cmd_retrain(const RetrainOptions& options, std::ostream& log);
void cmd_xval(const XvalOptions& options, std::ostream& log);
void cmd_eval(const EvalOptions& options, std::ostream& log);

/// Maps an exception escaping a command to the process exit code:
/// usage and configuration problems 2, everything else 1.
int exit_code_for(const std::exception& e);

}  // namespace ensnet
