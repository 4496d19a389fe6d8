#include "fedhet/partition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "fedhet/error.hpp"
#include "fedhet/random.hpp"

namespace fedhet {

namespace {

constexpr double kSumTolerance = 1e-9;
constexpr double kSmoothingEpsilon = 1e-6;
constexpr double kMassQuantum = 0.01;
constexpr int kHillClimbIterations = 10000;
constexpr int kStallMoves = 200;
constexpr double kMinQuantum = 1e-5;
constexpr int kDirichletRetries = 100;

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds[i].label].push_back(i);
  return by_class;
}

void check_partition_args(const Dataset& ds, std::size_t num_clients, const char* who) {
  if (num_clients < 1) throw ArgumentError(std::string(who) + ": need at least one client");
  if (num_clients > ds.size())
    throw CapacityError(std::string(who) + ": " + std::to_string(num_clients) + " clients but only " +
                        std::to_string(ds.size()) + " samples");
}

}  // namespace

Histogram::Histogram(std::vector<double> freqs) : freqs_(std::move(freqs)) {
  if (freqs_.empty()) throw ArgumentError("histogram is empty");
  double sum = 0.0;
  for (double f : freqs_) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ArgumentError("histogram entry negative or non-finite");
    sum += f;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) throw ArgumentError("histogram does not sum to 1");
}

Histogram Histogram::uniform(std::size_t num_classes) {
  if (num_classes == 0) throw ArgumentError("uniform histogram over zero classes");
  return Histogram(std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)));
}

Histogram Histogram::from_counts(std::span<const double> counts) {
  double total = 0.0;
  for (double c : counts) {
    if (!(c >= 0.0)) throw ArgumentError("negative class count");
    total += c;
  }
  if (!(total > 0.0)) throw ArgumentError("histogram from all-zero counts");
  std::vector<double> f(counts.begin(), counts.end());
  for (auto& x : f) x /= total;
  return Histogram(std::move(f));
}

std::string Histogram::to_csv_row() const {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < freqs_.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", freqs_[i]);
    if (i) out += ',';
    out += buf;
  }
  return out;
}

Histogram Histogram::from_csv_row(const std::string& row) {
  std::vector<double> f;
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      f.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw FormatError("bad histogram cell '" + cell + "'");
    } catch (const std::logic_error&) {
      throw FormatError("bad histogram cell '" + cell + "'");
    }
  }
  return Histogram(std::move(f));
}

void validate_partition(const Partition& p, std::size_t num_samples, bool exhaustive) {
  std::vector<char> seen(num_samples, 0);
  std::size_t count = 0;
  for (std::size_t c = 0; c < p.assignments.size(); ++c) {
    if (p.assignments[c].empty()) throw ArgumentError("client " + std::to_string(c) + " is empty");
    for (std::size_t i : p.assignments[c]) {
      if (i >= num_samples) throw ArgumentError("partition index out of range");
      if (seen[i]) throw ArgumentError("sample " + std::to_string(i) + " assigned twice");
      seen[i] = 1;
      ++count;
    }
  }
  if (exhaustive && count != num_samples) throw ArgumentError("partition is not exhaustive");
}

double heterogeneity_index(std::size_t c, std::size_t total_classes) {
  if (total_classes < 2) throw ArgumentError("heterogeneity_index: C_max must be >= 2");
  if (c < 1 || c > total_classes) throw ArgumentError("heterogeneity_index: c outside [1, C_max]");
  return 1.0 - static_cast<double>(c - 1) / static_cast<double>(total_classes - 1);
}

std::size_t class_cap_for_index(double hi, std::size_t total_classes) {
  if (total_classes < 2) throw ArgumentError("class_cap_for_index: C_max must be >= 2");
  if (!(hi >= 0.0 && hi <= 1.0)) throw ArgumentError("class_cap_for_index: HI outside [0, 1]");
  const double c = 1.0 + (1.0 - hi) * static_cast<double>(total_classes - 1);
  const auto rounded = static_cast<std::size_t>(std::llround(c));
  return std::clamp<std::size_t>(rounded, 1, total_classes);
}

Partition partition_class_cap(const Dataset& ds, std::size_t num_clients,
                              std::size_t max_classes, std::uint64_t seed) {
  check_partition_args(ds, num_clients, "partition_class_cap");
  const std::size_t C = ds.num_classes();
  if (max_classes < 1 || max_classes > C)
    throw ArgumentError("partition_class_cap: class cap outside [1, C]");
  if (num_clients * max_classes < C)
    throw CapacityError("partition_class_cap: clients x cap cannot cover every class");

  const auto class_order = shuffled_indices(C, derive_seed(seed, {1}));
  std::vector<std::vector<std::size_t>> holders(C);
  for (std::size_t j = 0; j < num_clients; ++j)
    for (std::size_t t = 0; t < max_classes; ++t)
      holders[class_order[(j * max_classes + t) % C]].push_back(j);

  auto by_class = indices_by_class(ds);
  Partition p;
  p.assignments.resize(num_clients);
  for (std::size_t k = 0; k < C; ++k) {
    auto& idx = by_class[k];
    Rng rng(derive_seed(seed, {2, k}));
    rng.shuffle(idx);
    const std::size_t h = holders[k].size();
    // Near-equal contiguous chunks; the first (n % h) holders get one extra.
    std::size_t offset = 0;
    for (std::size_t r = 0; r < h; ++r) {
      const std::size_t share = idx.size() / h + (r < idx.size() % h ? 1 : 0);
      auto& dst = p.assignments[holders[k][r]];
      dst.insert(dst.end(), idx.begin() + offset, idx.begin() + offset + share);
      offset += share;
    }
  }
  for (std::size_t j = 0; j < num_clients; ++j)
    if (p.assignments[j].empty())
      throw CapacityError("partition_class_cap: client " + std::to_string(j) + " received no samples");
  for (auto& a : p.assignments) std::sort(a.begin(), a.end());
  p.heterogeneity_index = heterogeneity_index(max_classes, C);
  return p;
}

Partition partition_gaussian(const Dataset& ds, std::size_t num_clients, double variance,
                             std::uint64_t seed) {
  check_partition_args(ds, num_clients, "partition_gaussian");
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw ArgumentError("partition_gaussian: variance must be positive");
  const std::size_t C = ds.num_classes();
  const double stddev = std::sqrt(variance);
  auto cdf = [&](double x, double mean) { return 0.5 * std::erfc(-(x - mean) / (stddev * std::sqrt(2.0))); };
  auto mean_of = [&](std::size_t j) {
    return static_cast<double>(j) * static_cast<double>(C) / static_cast<double>(num_clients);
  };

  // w[j][k]: probability that client j's rounded Gaussian draw, redrawn until
  // it lands in [0, C), equals k.
  std::vector<std::vector<double>> w(num_clients, std::vector<double>(C));
  for (std::size_t j = 0; j < num_clients; ++j) {
    double total = 0.0;
    for (std::size_t k = 0; k < C; ++k) {
      const double kk = static_cast<double>(k);
      w[j][k] = cdf(kk + 0.5, mean_of(j)) - cdf(kk - 0.5, mean_of(j));
      total += w[j][k];
    }
    if (total > 0.0)
      for (auto& x : w[j]) x /= total;
  }

  Partition p;
  p.assignments.resize(num_clients);
  const auto by_class = indices_by_class(ds);
  for (std::size_t k = 0; k < C; ++k) {
    std::vector<double> cum(num_clients);
    double total = 0.0;
    for (std::size_t j = 0; j < num_clients; ++j) cum[j] = total += w[j][k];
    std::size_t nearest = 0;
    for (std::size_t j = 1; j < num_clients; ++j)
      if (std::abs(mean_of(j) - static_cast<double>(k)) < std::abs(mean_of(nearest) - static_cast<double>(k)))
        nearest = j;
    Rng rng(derive_seed(seed, {3, k}));
    for (std::size_t i : by_class[k]) {
      std::size_t j = nearest;  // no client puts mass on k
      if (total > 0.0) {
        const double u = rng.uniform01() * total;
        j = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        j = std::min(j, num_clients - 1);
      }
      p.assignments[j].push_back(i);
    }
  }

  // An empty client takes its most likely class from the largest client.
  for (std::size_t j = 0; j < num_clients; ++j) {
    if (!p.assignments[j].empty()) continue;
    auto& donor = *std::max_element(p.assignments.begin(), p.assignments.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    auto pick = std::max_element(donor.begin(), donor.end(), [&](std::size_t a, std::size_t b) {
      return w[j][ds[a].label] < w[j][ds[b].label];
    });
    p.assignments[j].push_back(*pick);
    donor.erase(pick);
  }
  for (auto& a : p.assignments) std::sort(a.begin(), a.end());
  return p;
}

Partition partition_dirichlet(const Dataset& ds, std::size_t num_clients, double alpha,
                              std::uint64_t seed) {
  check_partition_args(ds, num_clients, "partition_dirichlet");
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ArgumentError("partition_dirichlet: alpha must be positive");
  const std::size_t C = ds.num_classes();
  auto by_class = indices_by_class(ds);

  for (int attempt = 0; attempt < kDirichletRetries; ++attempt) {
    Partition p;
    p.assignments.resize(num_clients);
    for (std::size_t k = 0; k < C; ++k) {
      auto idx = by_class[k];
      Rng rng(derive_seed(seed, {5, static_cast<std::uint64_t>(attempt), k}));
      rng.shuffle(idx);
      std::vector<double> w(num_clients);
      double total = 0.0;
      for (auto& x : w) total += (x = rng.gamma(alpha));
      if (!(total > 0.0)) {
        std::fill(w.begin(), w.end(), 1.0);
        total = static_cast<double>(num_clients);
      }
      // Cumulative rounding keeps the split exhaustive.
      double cum = 0.0;
      std::size_t start = 0;
      for (std::size_t j = 0; j < num_clients; ++j) {
        cum += w[j] / total;
        std::size_t end = (j + 1 == num_clients)
                              ? idx.size()
                              : std::min(idx.size(), static_cast<std::size_t>(std::llround(cum * idx.size())));
        end = std::max(end, start);
        p.assignments[j].insert(p.assignments[j].end(), idx.begin() + start, idx.begin() + end);
        start = end;
      }
    }
    const bool any_empty = std::any_of(p.assignments.begin(), p.assignments.end(),
                                       [](const auto& a) { return a.empty(); });
    if (!any_empty) {
      for (auto& a : p.assignments) std::sort(a.begin(), a.end());
      return p;
    }
  }
  throw CapacityError("partition_dirichlet: empty client after " + std::to_string(kDirichletRetries) +
                      " draws");
}

Histogram class_histogram(std::span<const std::size_t> labels, std::size_t num_classes) {
  if (labels.empty()) throw ArgumentError("class_histogram: empty sample set");
  std::vector<double> counts(num_classes, 0.0);
  for (std::size_t l : labels) {
    if (l >= num_classes) throw ArgumentError("class_histogram: label out of range");
    counts[l] += 1.0;
  }
  return Histogram::from_counts(counts);
}

Histogram class_histogram(const Dataset& ds) {
  const auto labels = ds.labels();
  return class_histogram(labels, ds.num_classes());
}

Histogram class_histogram(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<std::size_t> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) labels.push_back(ds[i].label);
  return class_histogram(labels, ds.num_classes());
}

DistanceMetric parse_distance_metric(const std::string& name) {
  if (name == "chisq") return DistanceMetric::kChiSq;
  if (name == "kl") return DistanceMetric::kKl;
  if (name == "js") return DistanceMetric::kJs;
  if (name == "wasserstein1") return DistanceMetric::kWasserstein1;
  if (name == "bhattacharyya") return DistanceMetric::kBhattacharyya;
  throw ArgumentError("unknown distance metric '" + name + "'");
}

std::string to_string(DistanceMetric m) {
  switch (m) {
    case DistanceMetric::kChiSq: return "chisq";
    case DistanceMetric::kKl: return "kl";
    case DistanceMetric::kJs: return "js";
    case DistanceMetric::kWasserstein1: return "wasserstein1";
    case DistanceMetric::kBhattacharyya: return "bhattacharyya";
  }
  return "?";
}

Histogram smoothed(const Histogram& h) {
  std::vector<double> f(h.freqs().begin(), h.freqs().end());
  bool any_zero = false;
  for (auto& x : f)
    if (x == 0.0) {
      x = kSmoothingEpsilon;
      any_zero = true;
    }
  if (!any_zero) return h;
  return Histogram::from_counts(f);
}

namespace {

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  return std::max(0.0, s);
}

}  // namespace

double distance(const Histogram& o, const Histogram& e, DistanceMetric metric) {
  if (o.size() != e.size())
    throw ArgumentError("distance: histograms over " + std::to_string(o.size()) + " and " +
                        std::to_string(e.size()) + " classes");
  if (o == e) return 0.0;
  const std::size_t n = o.size();
  switch (metric) {
    case DistanceMetric::kChiSq: {
      const Histogram es = smoothed(e);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = o[i] - es[i];
        s += d * d / es[i];
      }
      return s;
    }
    case DistanceMetric::kKl:
      return kl_divergence(o.freqs(), smoothed(e).freqs());
    case DistanceMetric::kJs: {
      std::vector<double> m(n);
      for (std::size_t i = 0; i < n; ++i) m[i] = 0.5 * (o[i] + e[i]);
      return 0.5 * kl_divergence(o.freqs(), m) + 0.5 * kl_divergence(e.freqs(), m);
    }
    case DistanceMetric::kWasserstein1: {
      double co = 0.0, ce = 0.0, s = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        co += o[i];
        ce += e[i];
        s += std::abs(co - ce);
      }
      return s;
    }
    case DistanceMetric::kBhattacharyya: {
      double bc = 0.0;
      for (std::size_t i = 0; i < n; ++i) bc += std::sqrt(o[i] * e[i]);
      if (bc <= 0.0) return std::numeric_limits<double>::infinity();
      return std::max(0.0, -std::log(std::min(1.0, bc)));
    }
  }
  throw ArgumentError("distance: unknown metric");
}

Histogram histogram_at_distance(const Histogram& expected, double target, double tol,
                                std::uint64_t seed) {
  if (!(target >= 0.0) || !std::isfinite(target))
    throw ArgumentError("histogram_at_distance: target must be finite and >= 0");
  if (!(tol >= 0.0)) throw ArgumentError("histogram_at_distance: tol must be >= 0");
  if (target == 0.0) return expected;
  const std::size_t n = expected.size();
  if (n < 2) throw InfeasibleError("histogram_at_distance: need at least 2 classes");

  // The largest reachable value is a point mass on the rarest class.
  const Histogram es = smoothed(expected);
  double ceiling = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (i == k ? 1.0 : 0.0) - es[i];
      s += d * d / es[i];
    }
    ceiling = std::max(ceiling, s);
  }
  if (target > ceiling + tol)
    throw InfeasibleError("histogram_at_distance: target " + std::to_string(target) +
                          " exceeds the maximum reachable " + std::to_string(ceiling));

  auto chisq_of = [&](const std::vector<double>& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = f[i] - es[i];
      s += d * d / es[i];
    }
    return s;
  };

  std::vector<double> cur(expected.freqs().begin(), expected.freqs().end());
  double err = std::abs(chisq_of(cur) - target);
  Rng rng(seed);
  // The quantum halves after a run of rejected moves so targets between
  // quantum-sized steps stay reachable.
  double quantum = kMassQuantum;
  int rejected = 0;
  std::vector<std::size_t> donors;
  for (int it = 0; it < kHillClimbIterations && err > tol; ++it) {
    if (rejected >= kStallMoves && quantum > kMinQuantum) {
      quantum /= 2.0;
      rejected = 0;
    }
    donors.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (cur[i] > 0.0) donors.push_back(i);
    const std::size_t from = donors[rng.index(donors.size())];
    std::size_t to = rng.index(n - 1);
    if (to >= from) ++to;
    const double q = std::min(quantum, cur[from]);
    cur[from] -= q;
    cur[to] += q;
    const double cand = std::abs(chisq_of(cur) - target);
    if (cand < err) {
      err = cand;
      rejected = 0;
    } else {
      cur[from] += q;
      cur[to] -= q;
      ++rejected;
    }
  }
  if (err > tol)
    throw InfeasibleError("histogram_at_distance: could not reach chisq " + std::to_string(target) +
                          " within " + std::to_string(tol));
  Histogram out = Histogram::from_counts(cur);
  if (std::abs(chisq(out, expected) - target) > tol)
    throw InfeasibleError("histogram_at_distance: renormalization moved the result out of tolerance");
  return out;
}

}  // namespace fedhet
