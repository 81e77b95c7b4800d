// SPDX-License-Identifier: Apache-2.0
#include "ensnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "ensnet/rng.hpp"

namespace ensnet {

void Phase1Config::validate() const {
  if (batch_size < 1) throw ShapeError("phase1.batch_size must be >= 1");
  if (!(portion > 0.0 && portion <= 1.0)) throw ShapeError("phase1.portion must be in (0,1]");
  augment.validate();
}

void Phase2Config::validate() const {
  if (batch_size < 1) throw ShapeError("phase2.batch_size must be >= 1");
}

std::vector<double> CurveLog::series(const std::string& set) const {
  std::vector<const CurveRow*> sel;
  for (const auto& r : rows)
    if (r.set == set) sel.push_back(&r);
  std::stable_sort(sel.begin(), sel.end(), [](auto a, auto b) { return a->epoch < b->epoch; });
  std::vector<double> out;
  for (auto* r : sel) out.push_back(r->rate);
  return out;
}

void CurveLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,set,rate\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.rate);
    out << r.epoch << ',' << r.set << ',' << buf << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<std::size_t> phase1_draw(std::size_t n, double portion, std::uint64_t seed,
                                     std::size_t epoch, std::size_t branch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_stream(seed, {0xd7a3, epoch, branch});
  // Partial Fisher-Yates: the first m positions are a uniform draw without
  // replacement.
  const std::size_t m = std::min(n, static_cast<std::size_t>(std::ceil(portion * static_cast<double>(n) - 1e-9)));
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  return idx;
}

namespace {

template <typename T>
Tensor<T> one_hot(const Dataset& data, std::span<const std::size_t> idx, std::size_t K) {
  Tensor<T> t({idx.size(), K});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = data[idx[i]];
    if (!s.label) throw DataError("phase 1 needs labelled samples; '" + s.source_id + "' has none");
    if (*s.label >= K) throw DataError("label out of range for '" + s.source_id + "'");
    t.at(i, *s.label) = T{1};
  }
  return t;
}

}  // namespace

template <typename T>
EpochStats phase1_epoch(EnsembleNetwork<T>& net, Sgd<T>& opt, const Dataset& labelled,
                        const Phase1Config& config, std::size_t epoch) {
  config.validate();
  if (labelled.empty()) throw DataError("phase 1: empty labelled set");
  for (const auto& s : labelled)
    if (!s.label) throw DataError("phase 1 needs labelled samples; '" + s.source_id + "' has none");
  const std::size_t K = net.config().num_classes;
  EpochStats stats;
  stats.first_lr = opt.effective_lr();
  double loss_sum = 0.0;

  for (std::size_t b = 0; b < net.num_branches(); ++b) {
    const auto draw = phase1_draw(labelled.size(), config.portion, config.seed, epoch, b);
    Dataset view(draw.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(draw.size()); ++j) {
      const Sample& src = labelled[draw[j]];
      view[j] = Sample{src.image, src.subject_id, src.label, src.source_id, {}, {}};
      if (config.augment_enabled) {
        auto rng = make_stream(config.seed, {draw[j], epoch, b});
        view[j].image = random_augment(src.image, config.augment, rng);
      }
    }

    std::vector<std::size_t> idx;
    std::vector<Param<T>*> params = net.trunk_params();
    for (auto* p : net.branch_params(b)) params.push_back(p);
    for (std::size_t start = 0; start < view.size(); start += config.batch_size) {
      idx.resize(std::min(config.batch_size, view.size() - start));
      std::iota(idx.begin(), idx.end(), start);
      const Tensor<T> x = batch_images<T>(view, idx);
      const Tensor<T> target = one_hot<T>(view, idx, K);
      net.zero_grad();
      const Tensor<T> probs = net.forward_branch(b, x, Mode::Training);
      loss_sum += static_cast<double>(kernels::cross_entropy_soft(probs, target));
      net.backward_branch(b, kernels::softmax_cross_entropy_grad(probs, target));
      stats.last_lr = opt.effective_lr();
      opt.step(params);
      ++stats.steps;
    }
  }
  net.release_caches();
  stats.mean_loss = stats.steps ? loss_sum / static_cast<double>(stats.steps) : 0.0;
  return stats;
}

template <typename T>
Phase1Result<T> run_phase1(EnsembleNetwork<T> net, const Dataset& labelled, const Dataset& val,
                           const Phase1Config& config, std::ostream* progress) {
  config.validate();
  Phase1Result<T> r{net, 0, -1.0, net, Sgd<T>(config.sgd), {}};
  r.curve.metadata = {{"phase", "1"}, {"seed", std::to_string(config.seed)},
                      {"net_seed", std::to_string(net.seed())}};
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const EpochStats st = phase1_epoch(net, r.optimizer, labelled, config, epoch);
    const double train_rate = evaluate(net, labelled, EvalTarget::ensemble()).rate;
    r.curve.add(epoch, "train", train_rate);
    double val_rate = train_rate;
    if (!val.empty()) {
      val_rate = evaluate(net, val, EvalTarget::ensemble()).rate;
      r.curve.add(epoch, "val", val_rate);
    }
    // With no validation set the latest epoch is kept.
    if (val.empty() || val_rate > r.best_val_rate) {
      r.best = net;
      r.best_epoch = epoch;
      r.best_val_rate = val_rate;
    }
    if (progress) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "phase1 epoch %zu/%zu loss %.4f lr %.3g train %.2f val %.2f\n",
                    epoch, config.epochs, st.mean_loss, st.last_lr, train_rate,
                    val.empty() ? train_rate : val_rate);
      *progress << buf << std::flush;
    }
  }
  r.last = std::move(net);
  return r;
}

template <typename T>
Tensor<T> soft_targets(const std::vector<Tensor<T>>& branch_probs, double temperature) {
  const std::size_t B = branch_probs.front().dim(0), K = branch_probs.front().dim(1);
  Tensor<T> t({B, K});
  for (std::size_t i = 0; i < B; ++i) {
    const SoftTarget st = soft_target(ensemble_vote(branch_probs, i, temperature));
    for (std::size_t k = 0; k < K; ++k) t.at(i, k) = static_cast<T>(st.probs[k]);
  }
  return t;
}

template <typename T>
EpochStats phase2_epoch(EnsembleNetwork<T>& net, Sgd<T>& opt, const Dataset& unlabelled,
                        const Phase2Config& config, std::size_t epoch) {
  config.validate();
  if (unlabelled.empty()) throw DataError("phase 2: empty unlabelled set");
  const std::size_t N = net.num_branches();
  const double temperature = net.config().vote_temperature;
  std::vector<std::size_t> order(unlabelled.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_stream(config.seed, {0x2e7a, epoch});
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  stats.first_lr = opt.effective_lr();
  double loss_sum = 0.0;
  const std::vector<Param<T>*> params = net.all_params();
  std::vector<Tensor<T>> dlogits(N);
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::span<const std::size_t> idx(order.data() + start,
                                           std::min(config.batch_size, order.size() - start));
    const Tensor<T> x = batch_images<T>(unlabelled, idx);
    // Targets come from the pre-update network in inference mode.
    const Tensor<T> target = soft_targets(net.infer_all(x), temperature);
    net.zero_grad();
    const auto probs = net.forward_all(x, Mode::Training);
    double loss = 0.0;
    for (std::size_t b = 0; b < N; ++b) {
      loss += static_cast<double>(kernels::cross_entropy_soft(probs[b], target));
      dlogits[b] = kernels::softmax_cross_entropy_grad(probs[b], target, T{1} / static_cast<T>(N));
    }
    loss_sum += loss / static_cast<double>(N);
    net.backward_all(dlogits);
    stats.last_lr = opt.effective_lr();
    opt.step(params);
    ++stats.steps;
  }
  net.release_caches();
  stats.mean_loss = stats.steps ? loss_sum / static_cast<double>(stats.steps) : 0.0;
  return stats;
}

template <typename T>
Phase2Result<T> run_phase2(EnsembleNetwork<T> net, const Dataset& unlabelled,
                           const std::vector<NamedDataset>& eval_sets, const Phase2Config& config,
                           std::ostream* progress) {
  config.validate();
  Phase2Result<T> r{std::move(net), Sgd<T>(config.sgd), {}};
  r.curve.metadata = {{"phase", "2"}, {"seed", std::to_string(config.seed)}};
  auto log_epoch = [&](std::size_t epoch, const EpochStats* st) {
    std::string line = "phase2 epoch " + std::to_string(epoch) + "/" + std::to_string(config.epochs);
    if (st) {
      char buf[64];
      std::snprintf(buf, sizeof buf, " loss %.4f lr %.3g", st->mean_loss, st->last_lr);
      line += buf;
    }
    for (const auto& es : eval_sets) {
      const double rate = evaluate(r.net, *es.data, EvalTarget::ensemble()).rate;
      r.curve.add(epoch, es.name, rate);
      char buf[64];
      std::snprintf(buf, sizeof buf, " %s %.2f", es.name.c_str(), rate);
      line += buf;
    }
    if (progress) *progress << line << '\n' << std::flush;
  };
  log_epoch(0, nullptr);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const EpochStats st = phase2_epoch(r.net, r.optimizer, unlabelled, config, epoch);
    log_epoch(epoch, &st);
  }
  return r;
}

#define ENSNET_INSTANTIATE_TRAINER(T)                                                            \
  template EpochStats phase1_epoch(EnsembleNetwork<T>&, Sgd<T>&, const Dataset&,                 \
                                   const Phase1Config&, std::size_t);                            \
  template Phase1Result<T> run_phase1(EnsembleNetwork<T>, const Dataset&, const Dataset&,        \
                                      const Phase1Config&, std::ostream*);                       \
  template Tensor<T> soft_targets(const std::vector<Tensor<T>>&, double);                        \
  template EpochStats phase2_epoch(EnsembleNetwork<T>&, Sgd<T>&, const Dataset&,                 \
                                   const Phase2Config&, std::size_t);                            \
  template Phase2Result<T> run_phase2(EnsembleNetwork<T>, const Dataset&,                        \
                                      const std::vector<NamedDataset>&, const Phase2Config&,     \
                                      std::ostream*);

ENSNET_INSTANTIATE_TRAINER(float)
ENSNET_INSTANTIATE_TRAINER(double)

#undef ENSNET_INSTANTIATE_TRAINER

}  // namespace ensnet
