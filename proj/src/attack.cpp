#include "fedhet/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedhet/error.hpp"
#include "fedhet/random.hpp"

namespace fedhet {

namespace {

std::size_t parse_suffix(const std::string& s, std::size_t prefix_len) {
  const std::string digits = s.substr(prefix_len);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit))
    throw ArgumentError("bad timing '" + s + "'");
  return std::stoul(digits);
}

// Budget spread over `targets` (base share each, remainder to the earliest),
// with overflow past a batch's capacity moved to the earliest batch with room.
std::vector<std::size_t> spread(std::size_t budget, const std::vector<std::size_t>& targets,
                                std::span<const std::size_t> caps) {
  std::size_t capacity = 0;
  for (std::size_t t : targets) capacity += caps[t];
  if (budget > capacity)
    throw InfeasibleError("poison budget " + std::to_string(budget) +
                          " exceeds the capacity of the targeted batches (" +
                          std::to_string(capacity) + ")");
  std::vector<std::size_t> counts(caps.size(), 0);
  if (targets.empty()) return counts;
  const std::size_t base = budget / targets.size();
  const std::size_t rem = budget % targets.size();
  std::size_t overflow = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::size_t want = base + (i < rem ? 1 : 0);
    const std::size_t t = targets[i];
    counts[t] = std::min(want, caps[t]);
    overflow += want - counts[t];
  }
  for (std::size_t t : targets) {
    const std::size_t add = std::min(overflow, caps[t] - counts[t]);
    counts[t] += add;
    overflow -= add;
  }
  return counts;
}

}  // namespace

Timing Timing::parse(const std::string& s) {
  if (s == "evenly") return evenly();
  if (s == "last") return last();
  if (s.rfind("first", 0) == 0) return first(parse_suffix(s, 5));
  if (s.rfind("middle", 0) == 0) return middle(parse_suffix(s, 6));
  if (s.rfind("last", 0) == 0) return last_k(parse_suffix(s, 4));
  throw ArgumentError("unknown timing '" + s + "'");
}

std::string Timing::name() const {
  switch (kind) {
    case Kind::kEvenly: return "evenly";
    case Kind::kFirstK: return "first" + std::to_string(k);
    case Kind::kMiddleK: return "middle" + std::to_string(k);
    case Kind::kLastK: return "last" + std::to_string(k);
    case Kind::kLast: return "last";
  }
  return "?";
}

std::size_t PoisonPlan::budget() const {
  return std::accumulate(per_batch_counts.begin(), per_batch_counts.end(), std::size_t{0});
}

PoisonPlan build_poison_plan(Timing timing, std::size_t budget,
                             std::span<const std::size_t> batch_sizes,
                             const TriggerPattern& pattern) {
  const std::size_t B = batch_sizes.size();
  if (B == 0) throw ArgumentError("build_poison_plan: no batches");
  std::vector<std::size_t> targets;
  auto range = [&](std::size_t lo, std::size_t n) {
    for (std::size_t i = lo; i < lo + n; ++i) targets.push_back(i);
  };
  switch (timing.kind) {
    case Timing::Kind::kEvenly:
      range(0, B);
      break;
    case Timing::Kind::kLast:
      range(B - 1, 1);
      break;
    case Timing::Kind::kFirstK:
    case Timing::Kind::kMiddleK:
    case Timing::Kind::kLastK: {
      if (timing.k == 0 || timing.k > B)
        throw InfeasibleError("build_poison_plan: " + timing.name() + " needs 1.." + std::to_string(B) +
                              " batches");
      const std::size_t start = timing.kind == Timing::Kind::kFirstK   ? 0
                                : timing.kind == Timing::Kind::kLastK ? B - timing.k
                                                                      : (B - timing.k) / 2;
      range(start, timing.k);
      break;
    }
  }
  return {spread(budget, targets, batch_sizes), pattern};
}

PoisonPlan build_poison_plan(Timing timing, std::size_t budget, std::size_t num_batches,
                             std::size_t batch_size, const TriggerPattern& pattern) {
  const std::vector<std::size_t> sizes(num_batches, batch_size);
  return build_poison_plan(timing, budget, sizes, pattern);
}

std::vector<TriggerPattern> split_trigger(const TriggerPattern& global, std::size_t k) {
  if (k == 0) throw ArgumentError("split_trigger: k must be positive");
  if (k > global.entries.size())
    throw ArgumentError("split_trigger: " + std::to_string(k) + " parts from a " +
                        std::to_string(global.entries.size()) + "-entry pattern");
  std::vector<TriggerPattern> parts(k);
  for (auto& p : parts) p.target_class = global.target_class;
  for (std::size_t i = 0; i < global.entries.size(); ++i) parts[i % k].entries.push_back(global.entries[i]);
  return parts;
}

std::vector<std::size_t> apportion(const Histogram& hist, std::size_t size) {
  const std::size_t C = hist.size();
  std::vector<std::size_t> counts(C);
  std::vector<std::pair<double, std::size_t>> frac(C);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < C; ++k) {
    const double exact = hist[k] * static_cast<double>(size);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    frac[k] = {exact - std::floor(exact), k};
    assigned += counts[k];
  }
  // Floating error can make the floors overshoot by one in degenerate cases.
  while (assigned > size) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  std::stable_sort(frac.begin(), frac.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < size; ++i, ++assigned) ++counts[frac[i % C].second];
  return counts;
}

std::vector<std::size_t> resample_client_data(const Dataset& pool, const Histogram& hist,
                                              std::size_t size, std::uint64_t seed) {
  if (hist.size() != pool.num_classes())
    throw ArgumentError("resample_client_data: histogram/pool class count mismatch");
  if (size == 0) throw ArgumentError("resample_client_data: size must be positive");
  std::vector<std::vector<std::size_t>> by_class(pool.num_classes());
  for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool[i].label].push_back(i);

  const auto counts = apportion(hist, size);
  std::vector<std::size_t> out;
  out.reserve(size);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) continue;
    auto& idx = by_class[k];
    if (idx.empty())
      throw InfeasibleError("resample_client_data: class " + std::to_string(k) + " has no pool samples");
    Rng rng(derive_seed(seed, {k}));
    rng.shuffle(idx);
    for (std::size_t t = 0; t < counts[k]; ++t)
      out.push_back(t < idx.size() ? idx[t] : idx[rng.index(idx.size())]);
  }
  Rng order(derive_seed(seed, {0xffffULL}));
  order.shuffle(out);
  return out;
}

std::vector<Sample> poison_batch(std::vector<Sample> batch, std::size_t count,
                                 const TriggerPattern& pattern, std::uint64_t seed) {
  if (count > batch.size())
    throw ArgumentError("poison_batch: count " + std::to_string(count) + " exceeds batch size " +
                        std::to_string(batch.size()));
  if (count == 0) return batch;
  const auto order = shuffled_indices(batch.size(), seed);
  for (std::size_t t = 0; t < count; ++t) batch[order[t]] = apply_trigger(batch[order[t]], pattern);
  return batch;
}

AttackWindow AttackWindow::parse(const std::string& s) {
  if (s == "all") return all();
  if (s == "former") return {Kind::kFormer, 0, 0};
  if (s == "middle") return {Kind::kMiddle, 0, 0};
  if (s == "latter") return {Kind::kLatter, 0, 0};
  throw ArgumentError("unknown attack window '" + s + "'");
}

std::string AttackWindow::name() const {
  switch (kind) {
    case Kind::kAll: return "all";
    case Kind::kFormer: return "former";
    case Kind::kMiddle: return "middle";
    case Kind::kLatter: return "latter";
    case Kind::kExplicit: return std::to_string(begin) + "-" + std::to_string(end);
  }
  return "?";
}

std::pair<std::size_t, std::size_t> AttackWindow::bounds(std::size_t R) const {
  switch (kind) {
    case Kind::kAll: return {0, R};
    case Kind::kFormer: return {0, R / 3};
    case Kind::kMiddle: return {R / 3, 2 * R / 3};
    case Kind::kLatter: return {2 * R / 3, R};
    case Kind::kExplicit: return {std::min(begin, R), std::min(end, R)};
  }
  return {0, 0};
}

bool AttackWindow::contains(std::size_t round, std::size_t R) const {
  const auto [lo, hi] = bounds(R);
  return round >= lo && round < hi;
}

std::size_t local_budget(const AttackConfig& cfg, std::size_t rank) {
  if (cfg.attack_scale == 0) return 0;
  return cfg.total_budget / cfg.attack_scale + (rank < cfg.total_budget % cfg.attack_scale ? 1 : 0);
}

}  // namespace fedhet
