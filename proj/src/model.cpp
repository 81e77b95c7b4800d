// SPDX-License-Identifier: Apache-2.0
#include "ensnet/model.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace ensnet {

void ArchConfig::validate() const {
  if (num_branches < 1) throw ShapeError("num_branches must be >= 1");
  if (num_classes < 2) throw ShapeError("num_classes must be >= 2");
  if (input_channels < 1 || input_size < 1 || kernel < 1 || stride < 1)
    throw ShapeError("input channels/size, kernel and stride must be positive");
  if (trunk_filters.empty()) throw ShapeError("trunk needs at least one conv layer");
  for (std::size_t f : trunk_filters)
    if (f < 1) throw ShapeError("trunk filter counts must be positive");
  if (branch_filters < 1 || hidden_units < 1) throw ShapeError("branch sizes must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) throw ShapeError("bn_momentum must be in (0,1)");
  if (!(bn_epsilon > 0.0)) throw ShapeError("bn_epsilon must be positive");
  if (!(vote_temperature > 0.0)) throw ShapeError("vote_temperature must be positive");
  spatial_path();
}

std::vector<std::size_t> ArchConfig::spatial_path() const {
  std::vector<std::size_t> path{input_size};
  const std::size_t pad = padding_amount(padding, kernel);
  std::size_t s = input_size;
  for (std::size_t i = 0; i <= trunk_filters.size(); ++i) {
    s = conv_out_size(s, kernel, stride, pad);
    if (s < 2)
      throw ShapeError("spatial collapse: block " + std::to_string(i) + " output " +
                       std::to_string(s) + " cannot be pooled");
    s /= 2;
    path.push_back(s);
  }
  return path;
}

std::size_t ArchConfig::dense_input_size() const {
  return branch_filters * spatial_path().back() * spatial_path().back();
}

// ---------------------------------------------------------------- Branch

template <typename T>
Tensor<T> Branch<T>::forward(const Tensor<T>& features, Mode mode, Cache& cache) {
  Tensor<T> pooled = block.forward(features, mode, cache.block);
  cache.pooled_shape = pooled.shape();
  const std::size_t B = pooled.dim(0);
  cache.flat = std::move(pooled).reshaped({B, cache.pooled_shape[1] * cache.pooled_shape[2] *
                                                  cache.pooled_shape[3]});
  cache.hidden_act = kernels::tanh_forward(hidden.forward(cache.flat));
  return output.forward(cache.hidden_act);
}

template <typename T>
Tensor<T> Branch<T>::infer(const Tensor<T>& features) const {
  Tensor<T> pooled = block.infer(features);
  const std::size_t B = pooled.dim(0);
  Tensor<T> flat = std::move(pooled).reshaped({B, hidden.weight.value.dim(0)});
  return output.forward(kernels::tanh_forward(hidden.forward(flat)));
}

template <typename T>
Tensor<T> Branch<T>::backward(const Tensor<T>& dlogits, const Cache& cache, Mode mode) {
  Tensor<T> d_hidden_act = output.backward(cache.hidden_act, dlogits);
  Tensor<T> d_hidden = kernels::tanh_backward(cache.hidden_act, d_hidden_act);
  Tensor<T> d_flat = hidden.backward(cache.flat, d_hidden);
  return block.backward(std::move(d_flat).reshaped(cache.pooled_shape), cache.block, mode);
}

template <typename T>
std::vector<Param<T>*> Branch<T>::params() {
  auto p = block.params();
  p.insert(p.end(), {&hidden.weight, &hidden.bias, &output.weight, &output.bias});
  return p;
}

template <typename T>
std::vector<const Param<T>*> Branch<T>::params() const {
  auto p = block.params();
  p.insert(p.end(), {&hidden.weight, &hidden.bias, &output.weight, &output.bias});
  return p;
}

// ------------------------------------------------------- EnsembleNetwork

template <typename T>
EnsembleNetwork<T>::EnsembleNetwork(const ArchConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  const std::size_t pad = padding_amount(config_.padding, config_.kernel);
  const T mom = static_cast<T>(config_.bn_momentum), eps = static_cast<T>(config_.bn_epsilon);
  std::mt19937_64 rng(seed);

  std::size_t in_ch = config_.input_channels;
  for (std::size_t i = 0; i < config_.trunk_filters.size(); ++i) {
    trunk_.emplace_back("trunk." + std::to_string(i), in_ch, config_.trunk_filters[i],
                        config_.kernel, config_.stride, pad, mom, eps);
    trunk_.back().conv.init(rng);
    in_ch = config_.trunk_filters[i];
  }
  const std::size_t dense_in = config_.dense_input_size();
  for (std::size_t b = 0; b < config_.num_branches; ++b) {
    const std::string prefix = "branch." + std::to_string(b);
    Branch<T> br{ConvBlock<T>(prefix, in_ch, config_.branch_filters, config_.kernel,
                              config_.stride, pad, mom, eps),
                 Dense<T>(prefix + ".hidden", dense_in, config_.hidden_units),
                 Dense<T>(prefix + ".output", config_.hidden_units, config_.num_classes)};
    br.block.conv.init(rng);
    br.hidden.init(rng);
    br.output.init(rng);
    branches_.push_back(std::move(br));
  }
  branch_cache_.resize(branches_.size());
  branch_cached_.assign(branches_.size(), false);
}

template <typename T>
void EnsembleNetwork<T>::check_input(const Tensor<T>& x) const {
  const Shape want{config_.input_channels, config_.input_size, config_.input_size};
  if (x.rank() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != want)
    throw ShapeError("network input must be [B," + std::to_string(config_.input_channels) + "," +
                     std::to_string(config_.input_size) + "," +
                     std::to_string(config_.input_size) + "], got " + shape_str(x.shape()));
}

template <typename T>
void EnsembleNetwork<T>::check_branch(std::size_t b) const {
  if (b >= branches_.size())
    throw ShapeError("branch index " + std::to_string(b) + " out of range (N=" +
                     std::to_string(branches_.size()) + ")");
}

template <typename T>
Tensor<T> EnsembleNetwork<T>::trunk_forward(const Tensor<T>& x, Mode mode) {
  check_input(x);
  ++trunk_forward_count_;
  trunk_cache_.resize(trunk_.size());
  Tensor<T> h = x;
  for (std::size_t i = 0; i < trunk_.size(); ++i) h = trunk_[i].forward(h, mode, trunk_cache_[i]);
  cached_mode_ = mode;
  trunk_cached_ = true;
  std::fill(branch_cached_.begin(), branch_cached_.end(), false);
  return h;
}

template <typename T>
Tensor<T> EnsembleNetwork<T>::trunk_infer(const Tensor<T>& x) const {
  check_input(x);
  Tensor<T> h = trunk_.front().infer(x);
  for (std::size_t i = 1; i < trunk_.size(); ++i) h = trunk_[i].infer(h);
  return h;
}

template <typename T>
Tensor<T> EnsembleNetwork<T>::forward_branch(std::size_t b, const Tensor<T>& x, Mode mode) {
  check_branch(b);
  Tensor<T> features = trunk_forward(x, mode);
  Tensor<T> probs = kernels::softmax(branches_[b].forward(features, mode, branch_cache_[b]));
  branch_cached_[b] = true;
  return probs;
}

template <typename T>
std::vector<Tensor<T>> EnsembleNetwork<T>::forward_all(const Tensor<T>& x, Mode mode) {
  Tensor<T> features = trunk_forward(x, mode);
  std::vector<Tensor<T>> out;
  out.reserve(branches_.size());
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    out.push_back(kernels::softmax(branches_[b].forward(features, mode, branch_cache_[b])));
    branch_cached_[b] = true;
  }
  return out;
}

template <typename T>
void EnsembleNetwork<T>::trunk_backward(Tensor<T> d) {
  for (std::size_t i = trunk_.size(); i-- > 0;) d = trunk_[i].backward(d, trunk_cache_[i], cached_mode_);
}

template <typename T>
void EnsembleNetwork<T>::backward_branch(std::size_t b, const Tensor<T>& dlogits) {
  check_branch(b);
  if (!trunk_cached_ || !branch_cached_[b])
    throw std::logic_error("backward_branch called without a matching forward");
  trunk_backward(branches_[b].backward(dlogits, branch_cache_[b], cached_mode_));
}

template <typename T>
void EnsembleNetwork<T>::backward_all(std::span<const Tensor<T>> dlogits) {
  if (dlogits.size() != branches_.size())
    throw ShapeError("backward_all needs one logit gradient per branch");
  if (!trunk_cached_ || std::find(branch_cached_.begin(), branch_cached_.end(), false) !=
                            branch_cached_.end())
    throw std::logic_error("backward_all called without a matching forward_all");
  Tensor<T> dfeatures;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    Tensor<T> d = branches_[b].backward(dlogits[b], branch_cache_[b], cached_mode_);
    if (b == 0) {
      dfeatures = std::move(d);
    } else {
      for (std::size_t i = 0; i < d.size(); ++i) dfeatures[i] += d[i];
    }
  }
  trunk_backward(std::move(dfeatures));
}

template <typename T>
Tensor<T> EnsembleNetwork<T>::infer_branch(std::size_t b, const Tensor<T>& x) const {
  check_branch(b);
  return kernels::softmax(branches_[b].infer(trunk_infer(x)));
}

template <typename T>
std::vector<Tensor<T>> EnsembleNetwork<T>::infer_all(const Tensor<T>& x) const {
  const Tensor<T> features = trunk_infer(x);
  std::vector<Tensor<T>> out;
  out.reserve(branches_.size());
  for (const auto& br : branches_) out.push_back(kernels::softmax(br.infer(features)));
  return out;
}

template <typename T>
std::vector<Param<T>*> EnsembleNetwork<T>::trunk_params() {
  std::vector<Param<T>*> p;
  for (auto& blk : trunk_)
    for (auto* q : blk.params()) p.push_back(q);
  return p;
}

template <typename T>
std::vector<Param<T>*> EnsembleNetwork<T>::branch_params(std::size_t b) {
  check_branch(b);
  return branches_[b].params();
}

template <typename T>
std::vector<Param<T>*> EnsembleNetwork<T>::all_params() {
  auto p = trunk_params();
  for (auto& br : branches_)
    for (auto* q : br.params()) p.push_back(q);
  return p;
}

template <typename T>
std::vector<const Param<T>*> EnsembleNetwork<T>::all_params() const {
  std::vector<const Param<T>*> p;
  for (const auto& blk : trunk_)
    for (const auto* q : blk.params()) p.push_back(q);
  for (const auto& br : branches_)
    for (const auto* q : br.params()) p.push_back(q);
  return p;
}

template <typename T>
void EnsembleNetwork<T>::zero_grad() {
  for (auto* p : all_params()) p->zero_grad();
}

template <typename T>
void EnsembleNetwork<T>::release_caches() {
  trunk_cache_.clear();
  branch_cache_.assign(branches_.size(), {});
  branch_cached_.assign(branches_.size(), false);
  trunk_cached_ = false;
}

// ----------------------------------------------------------------- votes

std::uint32_t VoteVector::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint32_t{0});
}

VoteVector ensemble_vote(std::span<const std::vector<double>> branch_probs, double temperature) {
  if (branch_probs.empty()) throw ShapeError("ensemble_vote needs at least one branch");
  const std::size_t K = branch_probs.front().size();
  VoteVector v{std::vector<std::uint32_t>(K, 0), temperature};
  for (const auto& p : branch_probs) {
    if (p.size() != K || K == 0) throw ShapeError("ensemble_vote: branch rows differ in length");
    ++v.counts[argmax_first(p.begin(), p.end())];
  }
  return v;
}

template <typename T>
VoteVector ensemble_vote(const std::vector<Tensor<T>>& branch_probs, std::size_t row,
                         double temperature) {
  if (branch_probs.empty()) throw ShapeError("ensemble_vote needs at least one branch");
  const std::size_t K = branch_probs.front().dim(1);
  VoteVector v{std::vector<std::uint32_t>(K, 0), temperature};
  for (const auto& p : branch_probs) {
    if (p.rank() != 2 || p.dim(1) != K || row >= p.dim(0))
      throw ShapeError("ensemble_vote: inconsistent branch outputs");
    const T* r = p.data() + row * K;
    ++v.counts[argmax_first(r, r + K)];
  }
  return v;
}

SoftTarget soft_target(const VoteVector& votes) {
  if (!(votes.temperature > 0.0)) throw ShapeError("soft_target: temperature must be positive");
  if (votes.counts.empty()) throw ShapeError("soft_target: empty vote vector");
  SoftTarget t{std::vector<double>(votes.counts.size())};
  const double mx = *std::max_element(votes.counts.begin(), votes.counts.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < votes.counts.size(); ++k)
    sum += (t.probs[k] = std::exp((votes.counts[k] - mx) / votes.temperature));
  for (double& p : t.probs) p /= sum;
  return t;
}

// ------------------------------------------------------------ accounting

template <typename T>
ParamCount param_count(const EnsembleNetwork<T>& net) {
  ParamCount pc;
  auto block_size = [](const auto& params) {
    std::size_t n = 0;
    for (const auto* p : params) n += p->value.size();
    return n;
  };
  const auto& trunk = net.trunk();
  for (std::size_t i = 0; i < trunk.size(); ++i) {
    const std::size_t n = block_size(trunk[i].params());
    pc.per_block.emplace_back("trunk." + std::to_string(i), n);
    pc.trunk += n;
  }
  const auto& branches = net.branches();
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const std::size_t n = block_size(branches[b].params());
    pc.per_block.emplace_back("branch." + std::to_string(b), n);
    pc.per_branch = n;  // branches are structurally identical
  }
  pc.num_branches = branches.size();
  pc.shared_total = pc.trunk + pc.num_branches * pc.per_branch;
  pc.independent_equivalent = pc.num_branches * (pc.trunk + pc.per_branch);
  return pc;
}

template struct Branch<float>;
template struct Branch<double>;
template class EnsembleNetwork<float>;
template class EnsembleNetwork<double>;
template VoteVector ensemble_vote(const std::vector<Tensor<float>>&, std::size_t, double);
template VoteVector ensemble_vote(const std::vector<Tensor<double>>&, std::size_t, double);
template ParamCount param_count(const EnsembleNetwork<float>&);
template ParamCount param_count(const EnsembleNetwork<double>&);

}  // namespace ensnet
