#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedhet/datagen.hpp"

namespace fedhet {

// Normalized per-class frequencies.
class Histogram {
 public:
  // Throws ArgumentError on negative entries or |sum - 1| > 1e-9.
  explicit Histogram(std::vector<double> freqs);

  static Histogram uniform(std::size_t num_classes);
  // Normalizes raw non-negative counts; at least one count must be positive.
  static Histogram from_counts(std::span<const double> counts);

  std::size_t size() const { return freqs_.size(); }
  double operator[](std::size_t i) const { return freqs_[i]; }
  std::span<const double> freqs() const { return freqs_; }

  // C comma-separated reals, no trailing newline.
  std::string to_csv_row() const;
  static Histogram from_csv_row(const std::string& row);

  bool operator==(const Histogram&) const = default;

 private:
  std::vector<double> freqs_;
};

// Per-client index lists into a source dataset.
struct Partition {
  std::vector<std::vector<std::size_t>> assignments;
  std::optional<double> heterogeneity_index;

  std::size_t num_clients() const { return assignments.size(); }
};

// Throws ArgumentError unless the partition is disjoint, every client is
// non-empty, every index is < num_samples and (if exhaustive) every sample
// is assigned.
void validate_partition(const Partition& p, std::size_t num_samples, bool exhaustive = true);

// 1 - (c - 1) / (C_max - 1).
double heterogeneity_index(std::size_t max_classes_per_client, std::size_t total_classes);

// Nearest integer class cap for a target HI, clamped to [1, C_max].
std::size_t class_cap_for_index(double hi, std::size_t total_classes);

Partition partition_class_cap(const Dataset& ds, std::size_t num_clients,
                              std::size_t max_classes_per_client, std::uint64_t seed);

// Client j's class draws follow round(N(j * C / m, variance)) restricted to
// [0, C). Each sample of class k goes to client j with probability
// proportional to that draw's mass at k, so every sample is assigned.
Partition partition_gaussian(const Dataset& ds, std::size_t num_clients, double variance,
                             std::uint64_t seed);

Partition partition_dirichlet(const Dataset& ds, std::size_t num_clients, double alpha,
                              std::uint64_t seed);

Histogram class_histogram(std::span<const std::size_t> labels, std::size_t num_classes);
Histogram class_histogram(const Dataset& ds);
Histogram class_histogram(const Dataset& ds, std::span<const std::size_t> indices);

enum class DistanceMetric { kChiSq, kKl, kJs, kWasserstein1, kBhattacharyya };

DistanceMetric parse_distance_metric(const std::string& name);
std::string to_string(DistanceMetric m);

// Zero entries replaced by 1e-6, then renormalized.
Histogram smoothed(const Histogram& h);

// chisq and kl smooth the reference histogram; neither is symmetric.
double distance(const Histogram& observed, const Histogram& expected, DistanceMetric metric);

inline double chisq(const Histogram& observed, const Histogram& expected) {
  return distance(observed, expected, DistanceMetric::kChiSq);
}

// Histogram O with |chisq(O, E) - target| <= tol, found by seeded
// hill-climbing over mass moves (1% of total, halved when moves stall).
// Throws InfeasibleError otherwise.
Histogram histogram_at_distance(const Histogram& expected, double target_chisq, double tol,
                                std::uint64_t seed);

}  // namespace fedhet
