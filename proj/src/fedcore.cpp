#include "fedhet/fedcore.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "fedhet/error.hpp"
#include "fedhet/random.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedhet {

void validate(const FederationConfig& cfg) {
  if (cfg.total_clients == 0) throw ConfigError("federation.total_clients must be positive");
  if (cfg.clients_per_round == 0 || cfg.clients_per_round > cfg.total_clients)
    throw ConfigError("federation.clients_per_round must lie in [1, total_clients]");
  if (cfg.total_rounds == 0) throw ConfigError("federation.rounds must be positive");
  if (cfg.scheduler.kind == Scheduler::Kind::kSeparation && cfg.scheduler.separation == 0)
    throw ConfigError("defense.separation_factor must be >= 1");
  nn::validate(cfg.training);
}

std::vector<std::size_t> select_clients(std::span<const ClientState> states, std::size_t k,
                                        const Scheduler& scheduler, std::size_t round,
                                        std::uint64_t seed) {
  const std::size_t m = states.size();
  if (k == 0 || k > m)
    throw ArgumentError("select_clients: k=" + std::to_string(k) + " with " + std::to_string(m) +
                        " clients");
  Rng rng(derive_seed(seed, {0x73656cULL, round}));

  std::vector<std::size_t> eligible, waiting;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& last = states[i].last_selected_round;
    const bool ok = scheduler.kind == Scheduler::Kind::kUniform || !last ||
                    round >= *last + scheduler.separation;
    (ok ? eligible : waiting).push_back(i);
  }

  std::vector<std::size_t> chosen;
  if (eligible.size() >= k) {
    // Partial Fisher-Yates over the eligible set.
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.index(eligible.size() - i);
      std::swap(eligible[i], eligible[j]);
    }
    chosen.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    chosen = eligible;
    rng.shuffle(waiting);  // random tie-break among equally recent clients
    std::stable_sort(waiting.begin(), waiting.end(), [&](std::size_t a, std::size_t b) {
      return *states[a].last_selected_round < *states[b].last_selected_round;
    });
    chosen.insert(chosen.end(), waiting.begin(),
                  waiting.begin() + static_cast<std::ptrdiff_t>(k - chosen.size()));
  }
  std::vector<std::size_t> ids;
  ids.reserve(k);
  for (std::size_t i : chosen) ids.push_back(states[i].id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::size_t> batch_sizes(std::size_t n, std::size_t batch_size) {
  const std::size_t nb = nn::num_batches(n, batch_size);
  std::vector<std::size_t> sizes(nb, batch_size);
  if (nb > 0) sizes.front() = n - (nb - 1) * batch_size;
  return sizes;
}

std::vector<std::size_t> local_batch_sizes(std::size_t n, const nn::TrainingConfig& cfg) {
  const auto one = batch_sizes(n, cfg.batch_size);
  std::vector<std::size_t> all;
  all.reserve(one.size() * cfg.local_epochs);
  for (std::size_t e = 0; e < cfg.local_epochs; ++e) all.insert(all.end(), one.begin(), one.end());
  return all;
}

ClientUpdate local_round(const nn::ModelParams& global, const ClientState& client,
                         const nn::TrainingConfig& cfg, const std::optional<PoisonPlan>& plan,
                         const Dataset& dataset) {
  if (plan && !client.is_malicious)
    throw ConfigError("poison plan supplied for benign client " + std::to_string(client.id));
  if (client.data.empty()) throw ConfigError("client " + std::to_string(client.id) + " has no data");
  const Dataset local = dataset.subset(client.data);
  const std::size_t nb = nn::num_batches(local.size(), cfg.batch_size);
  if (plan && plan->per_batch_counts.size() != nb * cfg.local_epochs)
    throw ConfigError("poison plan for client " + std::to_string(client.id) + " covers " +
                      std::to_string(plan->per_batch_counts.size()) + " batches, client has " +
                      std::to_string(nb * cfg.local_epochs));

  ClientUpdate u{client.id, global, local.size(), 0, 0};
  nn::BatchHook hook;
  if (plan) {
    hook = [&](std::size_t epoch, std::size_t b, std::vector<Sample>& batch) {
      const std::size_t count = plan->per_batch_counts[epoch * nb + b];
      if (count == 0) return;
      batch = poison_batch(std::move(batch), count, plan->pattern,
                           derive_seed(cfg.seed, {0x706f6973ULL, epoch, b}));
      u.poisoned_samples += count;
    };
  }
  const auto stats = nn::train(u.params, local.samples(), cfg, hook);
  u.trained_samples = stats.samples_seen;
  return u;
}

ClientUpdate scale_update(const ClientUpdate& u, const nn::ModelParams& global, double gamma) {
  if (!(gamma >= 1.0)) throw ArgumentError("scale_update: gamma must be >= 1");
  if (!u.params.same_shape(global)) throw ArgumentError("scale_update: shape mismatch");
  ClientUpdate out = u;
  if (gamma == 1.0) return out;
  auto ol = out.params.layers();
  auto gl = global.layers();
  for (std::size_t li = 0; li < ol.size(); ++li) {
    for (std::size_t i = 0; i < ol[li].weights.size(); ++i)
      ol[li].weights[i] = gl[li].weights[i] + gamma * (ol[li].weights[i] - gl[li].weights[i]);
    for (std::size_t i = 0; i < ol[li].bias.size(); ++i)
      ol[li].bias[i] = gl[li].bias[i] + gamma * (ol[li].bias[i] - gl[li].bias[i]);
  }
  return out;
}

nn::ModelParams aggregate(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw ArgumentError("aggregate: no updates");
  std::size_t total = 0;
  for (const auto& u : updates) {
    if (!u.params.same_shape(updates.front().params)) throw ArgumentError("aggregate: shape mismatch");
    if (u.sample_count == 0) throw ArgumentError("aggregate: update with zero samples");
    total += u.sample_count;
  }
  // Identical updates must aggregate to themselves exactly, so skip the
  // weighted sum when there is nothing to average.
  const bool all_equal = std::all_of(updates.begin(), updates.end(),
                                     [&](const ClientUpdate& u) { return u.params == updates.front().params; });
  if (all_equal) return updates.front().params;

  nn::ModelParams out(updates.front().params.architecture());
  auto ol = out.layers();
  for (const auto& u : updates) {
    const double w = static_cast<double>(u.sample_count) / static_cast<double>(total);
    auto ul = u.params.layers();
    for (std::size_t li = 0; li < ol.size(); ++li) {
      for (std::size_t i = 0; i < ol[li].weights.size(); ++i) ol[li].weights[i] += w * ul[li].weights[i];
      for (std::size_t i = 0; i < ol[li].bias.size(); ++i) ol[li].bias[i] += w * ul[li].bias[i];
    }
  }
  return out;
}

std::vector<ClientUpdate> train_clients_serial(const nn::ModelParams& global,
                                               std::span<const ClientJob> jobs,
                                               const Dataset& dataset) {
  std::vector<ClientUpdate> out;
  out.reserve(jobs.size());
  for (const auto& job : jobs) out.push_back(local_round(global, *job.client, job.cfg, job.plan, dataset));
  return out;
}

std::vector<ClientUpdate> train_clients(const nn::ModelParams& global, std::span<const ClientJob> jobs,
                                        const Dataset& dataset, int workers) {
  if (workers <= 1 || jobs.size() <= 1) return train_clients_serial(global, jobs, dataset);
  std::vector<ClientUpdate> out(jobs.size());
  std::vector<std::string> errors(jobs.size());
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    // Exceptions must not escape an OpenMP region; rethrow after the join.
    try {
      out[i] = local_round(global, *jobs[i].client, jobs[i].cfg, jobs[i].plan, dataset);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      throw std::runtime_error("client " + std::to_string(jobs[i].client->id) + ": " + errors[i]);
  return out;
}

}  // namespace fedhet
