// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ensnet/augment.hpp"
#include "ensnet/data.hpp"
#include "ensnet/metrics.hpp"
#include "ensnet/model.hpp"
#include "ensnet/sgd.hpp"

namespace ensnet {

/// Supervised phase: each branch in turn trains (with the trunk) on its own
/// random portion of the labelled set, every sample freshly augmented.
struct Phase1Config {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double portion = 0.5;
  SgdConfig sgd{0.001, 1e-5, 0.9};
  AugmentConfig augment;
  bool augment_enabled = true;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const Phase1Config&) const = default;
};

/// Self-training phase: the whole network trains on ensemble-vote soft
/// targets of unlabelled samples.
struct Phase2Config {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  SgdConfig sgd{0.0001, 2e-5, 0.9};
  std::uint64_t seed = 2;

  void validate() const;
  bool operator==(const Phase2Config&) const = default;
};

struct CurveRow {
  std::size_t epoch = 0;
  std::string set;
  double rate = 0.0;
};

struct CurveLog {
  std::vector<CurveRow> rows;
  std::vector<std::pair<std::string, std::string>> metadata;

  void add(std::size_t epoch, const std::string& set, double rate) { rows.push_back({epoch, set, rate}); }
  /// Rows of one set in epoch order.
  std::vector<double> series(const std::string& set) const;
  /// `epoch,set,rate`
  void write_csv(const std::filesystem::path& path) const;
};

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t steps = 0;
  double first_lr = 0.0;
  double last_lr = 0.0;
};

struct NamedDataset {
  std::string name;
  const Dataset* data = nullptr;
};

/// Indices drawn for branch b in a phase-1 epoch: ceil(portion * n)
/// without replacement.
std::vector<std::size_t> phase1_draw(std::size_t n, double portion, std::uint64_t seed,
                                     std::size_t epoch, std::size_t branch);

template <typename T>
EpochStats phase1_epoch(EnsembleNetwork<T>& net, Sgd<T>& opt, const Dataset& labelled,
                        const Phase1Config& config, std::size_t epoch);

template <typename T>
struct Phase1Result {
  EnsembleNetwork<T> best;
  std::size_t best_epoch = 0;  // 0 = initial network
  double best_val_rate = -1.0;
  EnsembleNetwork<T> last;
  Sgd<T> optimizer;
  CurveLog curve;
};

/// Runs `epochs` phase-1 epochs, logging ensemble rates on "train" and
/// "val"; keeps the network with the best validation rate (earliest on ties).
template <typename T>
Phase1Result<T> run_phase1(EnsembleNetwork<T> net, const Dataset& labelled, const Dataset& val,
                           const Phase1Config& config, std::ostream* progress = nullptr);

/// Soft-target matrix [B,K] from ensemble votes of branch probabilities.
template <typename T>
Tensor<T> soft_targets(const std::vector<Tensor<T>>& branch_probs, double temperature);

template <typename T>
EpochStats phase2_epoch(EnsembleNetwork<T>& net, Sgd<T>& opt, const Dataset& unlabelled,
                        const Phase2Config& config, std::size_t epoch);

template <typename T>
struct Phase2Result {
  EnsembleNetwork<T> net;
  Sgd<T> optimizer;
  CurveLog curve;
};

/// Runs phase 2, logging every eval set at epoch 0 (before any update) and
/// after each epoch: |eval_sets| * (epochs + 1) rows.
template <typename T>
Phase2Result<T> run_phase2(EnsembleNetwork<T> net, const Dataset& unlabelled,
                           const std::vector<NamedDataset>& eval_sets, const Phase2Config& config,
                           std::ostream* progress = nullptr);

}  // namespace ensnet
