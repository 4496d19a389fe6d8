#include "fedhet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedhet/error.hpp"
#include "fedhet/random.hpp"

namespace fedhet {

namespace {

constexpr std::size_t kRowsPerChunk = 64;

}  // namespace

std::vector<std::size_t> predict_all(const nn::ModelParams& p, const Dataset& ds, int workers) {
  std::vector<std::size_t> out(ds.size());
  const std::size_t chunks = (ds.size() + kRowsPerChunk - 1) / kRowsPerChunk;
  const auto samples = ds.samples();
  const auto n = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for num_threads(workers > 1 ? workers : 1) schedule(static) if (workers > 1)
  for (std::ptrdiff_t c = 0; c < n; ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kRowsPerChunk;
    const std::size_t hi = std::min(samples.size(), lo + kRowsPerChunk);
    const auto logits = nn::forward(p, nn::to_matrix(samples.subspan(lo, hi - lo)));
    for (std::size_t r = 0; r < logits.rows; ++r) out[lo + r] = nn::argmax(logits.row(r));
  }
  return out;
}

double accuracy(const nn::ModelParams& p, const Dataset& test, int workers) {
  if (test.empty()) throw ArgumentError("accuracy: empty test set");
  const auto pred = predict_all(p, test, workers);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test[i].label;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

Dataset asr_eval_set(const Dataset& test, const TriggerPattern& pattern, double eval_fraction,
                     std::uint64_t seed) {
  if (test.empty()) throw ArgumentError("attack_success_rate: empty test set");
  if (!(eval_fraction > 0.0 && eval_fraction <= 1.0))
    throw ArgumentError("attack_success_rate: eval_fraction must lie in (0, 1]");
  validate_trigger(pattern, test.num_features(), test.num_classes());
  const auto order = shuffled_indices(test.size(), seed);
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(test.size()))));
  Dataset eval(test.num_classes(), test.num_features());
  for (std::size_t t = 0; t < n; ++t) {
    const Sample& s = test[order[t]];
    if (s.label == pattern.target_class) continue;
    eval.push_back(apply_trigger(s, pattern));
  }
  return eval;
}

double asr_on_eval_set(const nn::ModelParams& p, const Dataset& eval, std::size_t target, int workers) {
  if (eval.empty()) return 0.0;
  const auto pred = predict_all(p, eval, workers);
  const auto hits = std::count(pred.begin(), pred.end(), target);
  return static_cast<double>(hits) / static_cast<double>(eval.size());
}

double attack_success_rate(const nn::ModelParams& p, const Dataset& test,
                           const TriggerPattern& pattern, double eval_fraction, std::uint64_t seed,
                           int workers) {
  return asr_on_eval_set(p, asr_eval_set(test, pattern, eval_fraction, seed), pattern.target_class,
                         workers);
}

namespace reference {

double accuracy(const nn::ModelParams& p, const Dataset& test) {
  if (test.empty()) throw ArgumentError("accuracy: empty test set");
  std::size_t correct = 0;
  for (const auto& s : test.samples()) correct += nn::predict(p, s.features) == s.label;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double attack_success_rate(const nn::ModelParams& p, const Dataset& test,
                           const TriggerPattern& pattern, double eval_fraction, std::uint64_t seed) {
  if (test.empty()) throw ArgumentError("attack_success_rate: empty test set");
  if (!(eval_fraction > 0.0 && eval_fraction <= 1.0))
    throw ArgumentError("attack_success_rate: eval_fraction must lie in (0, 1]");
  const auto order = shuffled_indices(test.size(), seed);
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(test.size()))));
  std::size_t denom = 0, hits = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const Sample& s = test[order[t]];
    if (s.label == pattern.target_class) continue;
    ++denom;
    hits += nn::predict(p, apply_trigger(s, pattern).features) == pattern.target_class;
  }
  return denom == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(denom);
}

}  // namespace reference

LinearFit linreg(std::span<const std::pair<double, double>> pts) {
  if (pts.size() < 2) throw ArgumentError("linreg: need at least 2 points");
  const double n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0) throw ArgumentError("linreg: x is constant");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r = syy == 0.0 ? 0.0 : std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return f;
}

double mean(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("mean of empty range");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ArgumentError("quantile of empty range");
  if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("quantile outside [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

double iqr(std::vector<double> v) { return quantile(v, 0.75) - quantile(v, 0.25); }

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("spearman: need two equal-length series");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < rx.size(); ++i) pts.emplace_back(rx[i], ry[i]);
  bool x_const = std::all_of(rx.begin(), rx.end(), [&](double r) { return r == rx.front(); });
  if (x_const) return 0.0;
  return linreg(pts).r;
}

}  // namespace fedhet
