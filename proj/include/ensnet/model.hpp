// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ensnet/layers.hpp"

namespace ensnet {

/// Shape of the shared-trunk ensemble. Defaults are the reference
/// configuration: 96x96 grayscale input, trunk of 5x5 conv layers with
/// 32/64/64 filters, branches of one 32-filter conv, 30 hidden units and an
/// 8-way softmax.
struct ArchConfig {
  std::size_t input_channels = 1;
  std::size_t input_size = 96;
  std::vector<std::size_t> trunk_filters{32, 64, 64};
  std::size_t kernel = 5;
  std::size_t stride = 1;
  std::size_t branch_filters = 32;
  std::size_t hidden_units = 30;
  std::size_t num_classes = 8;
  std::size_t num_branches = 5;
  Padding padding = Padding::Same;
  double vote_temperature = 1.0;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-5;

  /// Throws ShapeError when an invariant fails or pooling collapses a
  /// spatial dimension.
  void validate() const;

  /// Input side, then the side after each block (trunk blocks, then the branch).
  std::vector<std::size_t> spatial_path() const;
  std::size_t dense_input_size() const;

  bool operator==(const ArchConfig&) const = default;
};

/// One weak classifier on top of the shared trunk.
template <typename T>
struct Branch {
  ConvBlock<T> block;
  Dense<T> hidden;
  Dense<T> output;

  struct Cache {
    typename ConvBlock<T>::Cache block;
    Shape pooled_shape;
    Tensor<T> flat;
    Tensor<T> hidden_act;
  };

  Tensor<T> forward(const Tensor<T>& features, Mode mode, Cache& cache);  // -> logits
  Tensor<T> infer(const Tensor<T>& features) const;                       // -> logits
  Tensor<T> backward(const Tensor<T>& dlogits, const Cache& cache, Mode mode);

  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;
};

/// Shared convolutional trunk feeding N structurally identical branches.
///
/// The caching forward calls (forward_branch / forward_all) record what the
/// matching backward needs; infer_* are const and safe to call concurrently.
/// Backward accumulates into Param::grad; call zero_grad() between steps.
template <typename T>
class EnsembleNetwork {
 public:
  EnsembleNetwork(const ArchConfig& config, std::uint64_t seed);

  const ArchConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t num_branches() const { return branches_.size(); }

  /// Class probabilities [B,K] of branch b (0-based).
  Tensor<T> forward_branch(std::size_t b, const Tensor<T>& x, Mode mode);
  /// Probabilities of every branch, trunk evaluated once.
  std::vector<Tensor<T>> forward_all(const Tensor<T>& x, Mode mode);

  /// Backprop gradient w.r.t. branch b's logits into branch b and the trunk.
  /// Valid after forward_branch(b) or forward_all.
  void backward_branch(std::size_t b, const Tensor<T>& dlogits);
  /// Backprop every branch's logit gradient; trunk receives their sum.
  void backward_all(std::span<const Tensor<T>> dlogits);

  Tensor<T> infer_branch(std::size_t b, const Tensor<T>& x) const;
  std::vector<Tensor<T>> infer_all(const Tensor<T>& x) const;

  std::vector<Param<T>*> trunk_params();
  std::vector<Param<T>*> branch_params(std::size_t b);
  std::vector<Param<T>*> all_params();
  std::vector<const Param<T>*> all_params() const;
  void zero_grad();
  /// Drops forward caches (e.g. before keeping a copy of the network).
  void release_caches();

  std::vector<ConvBlock<T>>& trunk() { return trunk_; }
  const std::vector<ConvBlock<T>>& trunk() const { return trunk_; }
  std::vector<Branch<T>>& branches() { return branches_; }
  const std::vector<Branch<T>>& branches() const { return branches_; }

  /// Number of trunk evaluations so far (instrumentation for the sharing
  /// contract).
  std::uint64_t trunk_forward_count() const { return trunk_forward_count_; }

 private:
  void check_input(const Tensor<T>& x) const;
  void check_branch(std::size_t b) const;
  Tensor<T> trunk_forward(const Tensor<T>& x, Mode mode);
  Tensor<T> trunk_infer(const Tensor<T>& x) const;
  void trunk_backward(Tensor<T> dfeatures);

  ArchConfig config_;
  std::uint64_t seed_;
  std::vector<ConvBlock<T>> trunk_;
  std::vector<Branch<T>> branches_;

  // Caches of the most recent caching forward.
  Mode cached_mode_ = Mode::Inference;
  std::vector<typename ConvBlock<T>::Cache> trunk_cache_;
  std::vector<typename Branch<T>::Cache> branch_cache_;
  std::vector<bool> branch_cached_;
  bool trunk_cached_ = false;
  std::uint64_t trunk_forward_count_ = 0;
};

template <typename T>
EnsembleNetwork<T> build_network(const ArchConfig& config, std::uint64_t seed) {
  return EnsembleNetwork<T>(config, seed);
}

/// Per-class vote counts of the N branches for one sample.
struct VoteVector {
  std::vector<std::uint32_t> counts;
  double temperature = 1.0;

  std::uint32_t total() const;
  bool operator==(const VoteVector&) const = default;
};

struct SoftTarget {
  std::vector<double> probs;
};

/// Index of the largest entry; ties resolve to the lowest index.
template <typename It>
std::size_t argmax_first(It begin, It end) {
  std::size_t best = 0, i = 0;
  for (It it = begin; it != end; ++it, ++i)
    if (*it > *(begin + static_cast<std::ptrdiff_t>(best))) best = i;
  return best;
}

/// Votes of N branch probability rows (each of length K).
VoteVector ensemble_vote(std::span<const std::vector<double>> branch_probs, double temperature = 1.0);

/// Votes for row `row` of N branch probability tensors [B,K].
template <typename T>
VoteVector ensemble_vote(const std::vector<Tensor<T>>& branch_probs, std::size_t row,
                         double temperature = 1.0);

/// softmax(counts / T). Throws ShapeError for T <= 0.
SoftTarget soft_target(const VoteVector& votes);

/// Exact parameter accounting (batch-norm gamma/beta included, running
/// statistics excluded).
struct ParamCount {
  std::vector<std::pair<std::string, std::size_t>> per_block;
  std::size_t trunk = 0;
  std::size_t per_branch = 0;
  std::size_t num_branches = 0;
  std::size_t shared_total = 0;
  std::size_t independent_equivalent = 0;

  std::size_t savings() const { return independent_equivalent - shared_total; }
};

template <typename T>
ParamCount param_count(const EnsembleNetwork<T>& net);

}  // namespace ensnet
