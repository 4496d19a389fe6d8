#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedhet/datagen.hpp"
#include "fedhet/partition.hpp"

namespace fedhet {

// Which local mini-batches carry the poisoned samples.
struct Timing {
  enum class Kind { kEvenly, kFirstK, kMiddleK, kLastK, kLast };
  Kind kind = Kind::kEvenly;
  std::size_t k = 0;  // used by the *K kinds

  static Timing evenly() { return {Kind::kEvenly, 0}; }
  static Timing first(std::size_t k) { return {Kind::kFirstK, k}; }
  static Timing middle(std::size_t k) { return {Kind::kMiddleK, k}; }
  static Timing last_k(std::size_t k) { return {Kind::kLastK, k}; }
  static Timing last() { return {Kind::kLast, 0}; }

  // "evenly", "first5", "middle5", "last5", "last".
  static Timing parse(const std::string& s);
  std::string name() const;

  bool operator==(const Timing&) const = default;
};

// Per-batch poison counts over one local training run (all epochs).
struct PoisonPlan {
  std::vector<std::size_t> per_batch_counts;
  TriggerPattern pattern;

  std::size_t budget() const;
};

// batch_sizes[i] is the capacity of local batch i.
PoisonPlan build_poison_plan(Timing timing, std::size_t budget,
                             std::span<const std::size_t> batch_sizes,
                             const TriggerPattern& pattern);
// All batches of equal size.
PoisonPlan build_poison_plan(Timing timing, std::size_t budget, std::size_t num_batches,
                             std::size_t batch_size, const TriggerPattern& pattern);

// k disjoint sub-patterns (entries dealt round-robin), sharing target_class.
std::vector<TriggerPattern> split_trigger(const TriggerPattern& global, std::size_t k);

// Indices into pool forming a local dataset whose class histogram matches
// hist to within 1/size per class. Draws without replacement while the pool
// allows, with replacement beyond that.
std::vector<std::size_t> resample_client_data(const Dataset& pool, const Histogram& hist,
                                              std::size_t size, std::uint64_t seed);

// Largest-remainder integer counts summing to size.
std::vector<std::size_t> apportion(const Histogram& hist, std::size_t size);

// Triggers exactly `count` seed-chosen samples of the batch.
std::vector<Sample> poison_batch(std::vector<Sample> batch, std::size_t count,
                                 const TriggerPattern& pattern, std::uint64_t seed);

// Global attack window as a half-open round interval.
struct AttackWindow {
  enum class Kind { kAll, kFormer, kMiddle, kLatter, kExplicit };
  Kind kind = Kind::kAll;
  std::size_t begin = 0;
  std::size_t end = 0;

  static AttackWindow all() { return {}; }
  static AttackWindow parse(const std::string& s);
  static AttackWindow interval(std::size_t begin, std::size_t end) {
    return {Kind::kExplicit, begin, end};
  }
  std::string name() const;

  // FORMER / MIDDLE / LATTER split total_rounds into thirds.
  std::pair<std::size_t, std::size_t> bounds(std::size_t total_rounds) const;
  bool contains(std::size_t round, std::size_t total_rounds) const;
};

struct AttackConfig {
  std::size_t attack_scale = 0;  // number of compromised clients
  std::size_t total_budget = 0;  // poisoned samples per local training run, summed over attackers
  Timing timing = Timing::evenly();
  AttackWindow window = AttackWindow::all();
  TriggerPattern trigger;
  bool distributed_trigger = true;  // split the trigger among attackers
  // Malicious data distribution: explicit, or at a ChiSq distance from the
  // distribution the attacker believes is global. Neither: own partition.
  std::optional<Histogram> malicious_histogram;
  std::optional<double> chisq_target;
  double chisq_tol = 0.02;
  std::optional<std::size_t> local_data_size;  // defaults to the mean client size
  double scaling_factor = 1.0;                 // gamma, applied to malicious deltas

  bool enabled() const { return attack_scale > 0; }
};

// Budget of attacker i when total_budget is spread over attack_scale clients.
std::size_t local_budget(const AttackConfig& cfg, std::size_t attacker_rank);

}  // namespace fedhet
