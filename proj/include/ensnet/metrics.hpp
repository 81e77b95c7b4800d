// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ensnet/data.hpp"
#include "ensnet/model.hpp"

namespace ensnet {

/// Rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0)
      : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return k_; }
  void add(std::size_t truth, std::size_t predicted);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  /// 100 * trace / total.
  double rate() const;

  void write_csv(const std::filesystem::path& path) const;
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

/// Which classifier to score: the ensemble vote or a single branch.
struct EvalTarget {
  std::optional<std::size_t> branch;  // empty = ensemble
  static EvalTarget ensemble() { return {}; }
  static EvalTarget only_branch(std::size_t b) { return {b}; }
};

struct Evaluation {
  ConfusionMatrix matrix;
  double rate = 0.0;
};

/// Inference-mode scoring. Ensemble predictions are the argmax of
/// soft_target(ensemble_vote(...)).
template <typename T>
Evaluation evaluate(const EnsembleNetwork<T>& net, const Dataset& data, EvalTarget target,
                    std::size_t batch_size = 64);

/// Ensemble plus every branch from a single pass.
template <typename T>
struct FullEvaluation {
  Evaluation ensemble;
  std::vector<Evaluation> branches;
};

template <typename T>
FullEvaluation<T> evaluate_all(const EnsembleNetwork<T>& net, const Dataset& data,
                               std::size_t batch_size = 64);

struct TTestResult {
  double t = 0.0;
  std::size_t df = 0;
  double p_two_tailed = 1.0;
};

/// Paired t-test on after - before. Throws DegenerateError when all
/// differences are equal.
TTestResult paired_t_test(std::span<const double> before, std::span<const double> after);

struct ColumnStats {
  double mean = 0.0;
  double std = 0.0;  // sample (n-1) standard deviation; 0 for a single trial
  std::size_t n = 0;
  bool single_trial() const { return n == 1; }
};

ColumnStats column_stats(std::span<const double> values);

/// Recognition rates of one cross-validation trial.
struct TrialRates {
  std::size_t fold = 0;  // test fold
  double train_before = 0, val_before = 0, test_before = 0;
  double train_after = 0, val_after = 0, test_after = 0;
};

struct TrialSummary {
  std::vector<TrialRates> trials;
  ColumnStats train_before, val_before, test_before;
  ColumnStats train_after, val_after, test_after;
  std::vector<double> test_difference;  // after - before per trial
};

TrialSummary aggregate_trials(std::span<const TrialRates> trials);

/// Half-up (away from zero) rounding for presentation.
double round_half_up(double value, int decimals);
/// Fixed two-decimal rendering of a rounded rate.
std::string format_rate(double value);
/// "+5.18", "-0.64", "0.00".
std::string format_difference(double value);

}  // namespace ensnet
