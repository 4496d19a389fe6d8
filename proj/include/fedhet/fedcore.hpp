#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedhet/attack.hpp"
#include "fedhet/datagen.hpp"
#include "fedhet/nn.hpp"

namespace fedhet {

struct ClientState {
  std::size_t id = 0;
  std::vector<std::size_t> data;  // indices into the training pool
  bool is_malicious = false;
  std::optional<std::size_t> last_selected_round;
};

struct Scheduler {
  enum class Kind { kUniform, kSeparation };
  Kind kind = Kind::kUniform;
  std::size_t separation = 1;  // S: rounds a client waits before it may be re-selected

  static Scheduler uniform() { return {}; }
  static Scheduler separated(std::size_t s) { return {Kind::kSeparation, s}; }
};

struct FederationConfig {
  std::size_t total_clients = 20;
  std::size_t clients_per_round = 5;
  std::size_t total_rounds = 80;
  nn::TrainingConfig training;
  Scheduler scheduler;
};

void validate(const FederationConfig& cfg);

struct ClientUpdate {
  std::size_t client_id = 0;
  nn::ModelParams params;
  std::size_t sample_count = 0;
  // Instrumentation: samples that went through SGD and how many were triggered.
  std::size_t trained_samples = 0;
  std::size_t poisoned_samples = 0;
};

// k distinct client ids in ascending order, uniform over the eligible set.
// Under separation(S) a client selected at round t is ineligible until round
// t + S; when fewer than k are eligible the shortfall is filled with the
// least-recently-selected clients.
std::vector<std::size_t> select_clients(std::span<const ClientState> states, std::size_t k,
                                        const Scheduler& scheduler, std::size_t round,
                                        std::uint64_t seed);

// Copies global, trains cfg.local_epochs of mini-batch SGD on the client's
// samples (poisoned per plan) and returns the result. cfg.seed is the
// client's stream seed for this round.
ClientUpdate local_round(const nn::ModelParams& global, const ClientState& client,
                         const nn::TrainingConfig& cfg, const std::optional<PoisonPlan>& plan,
                         const Dataset& dataset);

// Batch capacities for a local dataset of n samples (short batch first).
std::vector<std::size_t> batch_sizes(std::size_t n, std::size_t batch_size);

// Batch capacities across every epoch of one local training run; poison
// plans index into this sequence.
std::vector<std::size_t> local_batch_sizes(std::size_t n, const nn::TrainingConfig& cfg);

// global + gamma * (update - global).
ClientUpdate scale_update(const ClientUpdate& u, const nn::ModelParams& global, double gamma);

// Sample-count weighted mean, reduced in the order given.
nn::ModelParams aggregate(std::span<const ClientUpdate> updates);

// One unit of client work for a round.
struct ClientJob {
  const ClientState* client = nullptr;
  nn::TrainingConfig cfg;
  std::optional<PoisonPlan> plan;
};

// Runs local_round for every job; results are in job order regardless of
// worker count. workers <= 1 runs the serial reference loop.
std::vector<ClientUpdate> train_clients(const nn::ModelParams& global, std::span<const ClientJob> jobs,
                                        const Dataset& dataset, int workers);
std::vector<ClientUpdate> train_clients_serial(const nn::ModelParams& global,
                                               std::span<const ClientJob> jobs,
                                               const Dataset& dataset);

}  // namespace fedhet
