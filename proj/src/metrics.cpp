// SPDX-License-Identifier: Apache-2.0
#include "ensnet/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace ensnet {

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= k_ || predicted >= k_) throw ShapeError("confusion matrix index out of range");
  ++counts_[truth * k_ + predicted];
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += at(i, i);
  return t;
}

double ConfusionMatrix::rate() const {
  const auto n = total();
  return n == 0 ? 0.0 : 100.0 * static_cast<double>(trace()) / static_cast<double>(n);
}

void ConfusionMatrix::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "true\\pred";
  for (std::size_t j = 0; j < k_; ++j) out << ',' << j;
  out << '\n';
  for (std::size_t i = 0; i < k_; ++i) {
    out << i;
    for (std::size_t j = 0; j < k_; ++j) out << ',' << at(i, j);
    out << '\n';
  }
}

namespace {

template <typename T>
void require_labelled(const Dataset& data) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  for (const auto& s : data)
    if (!s.label) throw DataError("evaluate: sample '" + s.source_id + "' has no label");
}

std::size_t ensemble_prediction(const VoteVector& votes) {
  const SoftTarget t = soft_target(votes);
  return argmax_first(t.probs.begin(), t.probs.end());
}

}  // namespace

template <typename T>
FullEvaluation<T> evaluate_all(const EnsembleNetwork<T>& net, const Dataset& data,
                               std::size_t batch_size) {
  require_labelled<T>(data);
  const std::size_t K = net.config().num_classes, N = net.num_branches();
  FullEvaluation<T> r{{ConfusionMatrix(K), 0.0}, std::vector<Evaluation>(N, {ConfusionMatrix(K), 0.0})};
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto probs = net.infer_all(batch_images<T>(data, idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t truth = *data[idx[i]].label;
      for (std::size_t b = 0; b < N; ++b) {
        const T* row = probs[b].data() + i * K;
        r.branches[b].matrix.add(truth, argmax_first(row, row + K));
      }
      r.ensemble.matrix.add(truth, ensemble_prediction(ensemble_vote(probs, i, net.config().vote_temperature)));
    }
  }
  r.ensemble.rate = r.ensemble.matrix.rate();
  for (auto& b : r.branches) b.rate = b.matrix.rate();
  return r;
}

template <typename T>
Evaluation evaluate(const EnsembleNetwork<T>& net, const Dataset& data, EvalTarget target,
                    std::size_t batch_size) {
  require_labelled<T>(data);
  const std::size_t K = net.config().num_classes;
  if (!target.branch) return evaluate_all(net, data, batch_size).ensemble;
  Evaluation e{ConfusionMatrix(K), 0.0};
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto probs = net.infer_branch(*target.branch, batch_images<T>(data, idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const T* row = probs.data() + i * K;
      e.matrix.add(*data[idx[i]].label, argmax_first(row, row + K));
    }
  }
  e.rate = e.matrix.rate();
  return e;
}

TTestResult paired_t_test(std::span<const double> before, std::span<const double> after) {
  if (before.size() != after.size()) throw ShapeError("paired_t_test: length mismatch");
  const std::size_t n = before.size();
  if (n < 2) throw DegenerateError("paired_t_test needs at least two pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = after[i] - before[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  // Differences equal up to rounding of the subtraction count as constant.
  const double scale = std::max(1.0, std::abs(mean));
  if (!(sd > 1e-12 * scale)) throw DegenerateError("paired_t_test: differences have zero variance");
  TTestResult r;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.df = n - 1;
  const boost::math::students_t dist(static_cast<double>(r.df));
  r.p_two_tailed = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

ColumnStats column_stats(std::span<const double> values) {
  ColumnStats s;
  s.n = values.size();
  if (s.n == 0) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

TrialSummary aggregate_trials(std::span<const TrialRates> trials) {
  if (trials.empty()) throw DataError("aggregate_trials needs at least one trial");
  TrialSummary s;
  s.trials.assign(trials.begin(), trials.end());
  auto column = [&](double TrialRates::*field) {
    std::vector<double> v;
    for (const auto& t : trials) v.push_back(t.*field);
    return column_stats(v);
  };
  s.train_before = column(&TrialRates::train_before);
  s.val_before = column(&TrialRates::val_before);
  s.test_before = column(&TrialRates::test_before);
  s.train_after = column(&TrialRates::train_after);
  s.val_after = column(&TrialRates::val_after);
  s.test_after = column(&TrialRates::test_after);
  for (const auto& t : trials) s.test_difference.push_back(t.test_after - t.test_before);
  return s;
}

double round_half_up(double value, int decimals) {
  const double f = std::pow(10.0, decimals);
  // Nudge by a few ulps so values printed as ...5 in decimal round up even
  // when their binary value lies just below.
  const double scaled = std::abs(value) * f * (1.0 + 4 * std::numeric_limits<double>::epsilon());
  return std::copysign(std::floor(scaled + 0.5) / f, value);
}

std::string format_rate(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", round_half_up(value, 2));
  return buf;
}

std::string format_difference(double value) {
  const double r = round_half_up(value, 2);
  char buf[32];
  if (r == 0.0)
    std::snprintf(buf, sizeof buf, "0.00");
  else
    std::snprintf(buf, sizeof buf, "%+.2f", r);
  return buf;
}

template Evaluation evaluate(const EnsembleNetwork<float>&, const Dataset&, EvalTarget, std::size_t);
template Evaluation evaluate(const EnsembleNetwork<double>&, const Dataset&, EvalTarget, std::size_t);
template FullEvaluation<float> evaluate_all(const EnsembleNetwork<float>&, const Dataset&, std::size_t);
template FullEvaluation<double> evaluate_all(const EnsembleNetwork<double>&, const Dataset&, std::size_t);

}  // namespace ensnet
