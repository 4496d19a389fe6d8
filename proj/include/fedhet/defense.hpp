#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fedhet/datagen.hpp"
#include "fedhet/fedcore.hpp"
#include "fedhet/partition.hpp"

namespace fedhet {

struct ActiveDefenseConfig {
  double iid_fraction = 0.1;         // rho
  std::size_t retrain_epochs = 1;    // E'
  std::optional<double> learning_rate;  // defaults to the clients' rate
};

struct FakeDistributionConfig {
  double chisq_offset = 0.0;
  double tol = 0.02;
};

struct DefenseConfig {
  bool cosine_monitor = false;
  std::optional<ActiveDefenseConfig> active_defense;
  std::optional<std::size_t> separation_factor;
  std::optional<FakeDistributionConfig> fake_distribution;
};

void validate(const DefenseConfig& cfg);

// Cosine of two vectors; 0 (and *zero_norm set) if either has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         bool* zero_norm = nullptr);

// Cosine of the last dense layer of the update against the previous global
// model's last layer.
double cosine_monitor(const ClientUpdate& update, const nn::ModelParams& prev_global,
                      bool* zero_norm = nullptr);

// Fine-tunes every update on the aggregator's IID set. Each update gets its
// own stream derived from (seed, client id); results in input order.
std::vector<ClientUpdate> active_defense(std::vector<ClientUpdate> updates, const Dataset& iid_set,
                                         std::size_t retrain_epochs, double lr,
                                         std::size_t batch_size, std::uint64_t seed,
                                         int workers = 1);

// Class-stratified reservation of round(rho * |train|) samples.
// Returns (reserved, remaining).
std::pair<Dataset, Dataset> reserve_iid_set(const Dataset& train, double rho, std::uint64_t seed);

// Histogram at the given ChiSq distance from the true one, shown to attackers.
Histogram fake_distribution(const Histogram& true_hist, double chisq_offset, std::uint64_t seed,
                            double tol = 0.02);

}  // namespace fedhet
