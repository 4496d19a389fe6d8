#include "fedhet/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "fedhet/error.hpp"
#include "fedhet/metrics.hpp"
#include "fedhet/random.hpp"

namespace fedhet {

namespace {

enum StreamTag : std::uint64_t {
  kData = 0x100,
  kSplit,
  kRepeat,
  kReserve,
  kPartition,
  kMalicious,
  kMaliciousHist,
  kFake,
  kResample,
  kInit,
  kAsr,
  kSelect,
  kLocal,
  kDefense,
};

}  // namespace

void validate(const ExperimentConfig& cfg) {
  if (cfg.repeats == 0) throw ConfigError("repeats must be >= 1");
  const auto& d = cfg.dataset;
  if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0))
    throw ConfigError("dataset.test_fraction must lie in (0, 1)");
  if (d.kind == DatasetSpec::Kind::kSynthetic) {
    if (d.num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
    if (d.num_features < 1) throw ConfigError("dataset.num_features must be >= 1");
    if (d.samples_per_class < 1) throw ConfigError("dataset.samples_per_class must be >= 1");
    if (!(d.sigma > 0.0)) throw ConfigError("dataset.sigma must be > 0");
  } else if (d.images_path.empty() || d.labels_path.empty()) {
    throw ConfigError("dataset.images and dataset.labels are required for idx datasets");
  }
  const auto& p = cfg.partition;
  if (p.method == PartitionSpec::Method::kClassCap) {
    if (p.hi.has_value() == p.max_classes.has_value())
      throw ConfigError("partition: class_cap needs exactly one of hi / max_classes");
    if (p.hi && !(*p.hi >= 0.0 && *p.hi <= 1.0)) throw ConfigError("partition.hi must lie in [0, 1]");
    if (p.max_classes && *p.max_classes < 1) throw ConfigError("partition.max_classes must be >= 1");
  }
  if (p.method == PartitionSpec::Method::kGaussian && !(p.variance > 0.0))
    throw ConfigError("partition.variance must be > 0");
  if (p.method == PartitionSpec::Method::kDirichlet && !(p.alpha > 0.0))
    throw ConfigError("partition.alpha must be > 0");
  for (std::size_t h : cfg.hidden)
    if (h == 0) throw ConfigError("model.hidden sizes must be positive");
  validate(cfg.federation);
  validate(cfg.defense);

  const auto& a = cfg.attack;
  if (a.attack_scale > cfg.federation.total_clients)
    throw ConfigError("attack.attack_scale exceeds federation.total_clients");
  if (a.enabled()) {
    if (a.trigger.entries.empty()) throw ConfigError("attack.trigger is required when attack_scale > 0");
    if (!(a.scaling_factor >= 1.0)) throw ConfigError("attack.scaling_factor must be >= 1");
    if (a.timing.kind != Timing::Kind::kEvenly && a.timing.kind != Timing::Kind::kLast && a.timing.k == 0)
      throw ConfigError("attack.timing batch count must be positive");
    if (a.window.kind == AttackWindow::Kind::kExplicit &&
        !(a.window.begin < a.window.end && a.window.end <= cfg.federation.total_rounds))
      throw ConfigError("attack.window must be a non-empty interval within [0, rounds)");
    if (a.chisq_target && !(*a.chisq_target >= 0.0)) throw ConfigError("attack.chisq_target must be >= 0");
    if (a.malicious_histogram && (a.chisq_target || cfg.chisq_target_range))
      throw ConfigError("attack: malicious_histogram and chisq_target are mutually exclusive");
    if (a.local_data_size && *a.local_data_size == 0) throw ConfigError("attack.local_data_size must be > 0");
  } else if (a.total_budget > 0) {
    throw ConfigError("attack.total_budget set but attack_scale is 0");
  }
  if (cfg.chisq_target_range) {
    const auto [lo, hi] = *cfg.chisq_target_range;
    if (!(lo >= 0.0 && hi >= lo)) throw ConfigError("attack.chisq_target_range must satisfy 0 <= lo <= hi");
  }
  if (!(cfg.evaluation.eval_fraction > 0.0 && cfg.evaluation.eval_fraction <= 1.0))
    throw ConfigError("evaluation.eval_fraction must lie in (0, 1]");
  if (cfg.evaluation.summary_rounds == 0) throw ConfigError("evaluation.summary_rounds must be >= 1");
}

std::uint64_t repeat_seed(const ExperimentConfig& cfg, std::size_t repeat) {
  return derive_seed(cfg.seed, {kRepeat, repeat});
}

std::optional<double> resolved_chisq_target(const ExperimentConfig& cfg, std::size_t repeat) {
  if (cfg.chisq_target_range) {
    const auto [lo, hi] = *cfg.chisq_target_range;
    if (cfg.repeats <= 1) return lo;
    return lo + (hi - lo) * static_cast<double>(repeat) / static_cast<double>(cfg.repeats - 1);
  }
  return cfg.attack.chisq_target;
}

std::vector<std::size_t> model_architecture(const ExperimentConfig& cfg, const Dataset& data) {
  std::vector<std::size_t> arch{data.num_features()};
  arch.insert(arch.end(), cfg.hidden.begin(), cfg.hidden.end());
  arch.push_back(data.num_classes());
  return arch;
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.kind == DatasetSpec::Kind::kIdx) return load_idx(d.images_path, d.labels_path);
  return gen_synthetic(d.num_classes, d.num_features, d.samples_per_class, d.sigma,
                       derive_seed(cfg.seed, {kData}));
}

Summary summarize(const std::vector<RoundLog>& rounds, std::size_t summary_rounds, bool attack_enabled) {
  std::vector<const RoundLog*> pool;
  for (const auto& r : rounds)
    if (!attack_enabled || r.attack_active) pool.push_back(&r);
  Summary s;
  if (pool.empty()) return s;
  s.short_run = pool.size() < summary_rounds;
  const std::size_t take = std::min(summary_rounds, pool.size());
  double asr = 0.0, acc = 0.0;
  for (std::size_t i = pool.size() - take; i < pool.size(); ++i) {
    asr += pool[i]->asr;
    acc += pool[i]->accuracy;
  }
  s.asr = asr / static_cast<double>(take);
  s.accuracy = acc / static_cast<double>(take);
  s.rounds_averaged = take;
  return s;
}

FederationResult run_federation(const ExperimentConfig& cfg, std::size_t repeat, int workers) {
  validate(cfg);
  FederationResult result;
  std::set<std::string> warnings;

  const Dataset data = load_dataset(cfg);
  auto [train, test] = split_train_test(data, cfg.dataset.test_fraction, derive_seed(cfg.seed, {kSplit}));
  const std::uint64_t rs = repeat_seed(cfg, repeat);
  const auto& fed = cfg.federation;
  const auto& atk = cfg.attack;

  std::optional<Dataset> iid_set;
  if (cfg.defense.active_defense) {
    auto [reserved, rest] = reserve_iid_set(train, cfg.defense.active_defense->iid_fraction,
                                            derive_seed(rs, {kReserve}));
    iid_set = std::move(reserved);
    train = std::move(rest);
  }

  Partition part;
  const std::uint64_t part_seed = derive_seed(rs, {kPartition});
  switch (cfg.partition.method) {
    case PartitionSpec::Method::kClassCap: {
      const std::size_t cap = cfg.partition.max_classes
                                  ? *cfg.partition.max_classes
                                  : class_cap_for_index(*cfg.partition.hi, train.num_classes());
      part = partition_class_cap(train, fed.total_clients, cap, part_seed);
      result.class_cap = cap;
      result.heterogeneity_index = part.heterogeneity_index;
      break;
    }
    case PartitionSpec::Method::kGaussian:
      part = partition_gaussian(train, fed.total_clients, cfg.partition.variance, part_seed);
      break;
    case PartitionSpec::Method::kDirichlet:
      part = partition_dirichlet(train, fed.total_clients, cfg.partition.alpha, part_seed);
      break;
  }

  std::vector<ClientState> clients(fed.total_clients);
  for (std::size_t i = 0; i < clients.size(); ++i) {
    clients[i].id = i;
    clients[i].data = std::move(part.assignments[i]);
  }

  // Persistent malicious designation, fixed for the whole run.
  std::vector<std::size_t> attacker_rank(fed.total_clients, SIZE_MAX);
  std::vector<TriggerPattern> parts;
  if (atk.enabled()) {
    validate_trigger(atk.trigger, train.num_features(), train.num_classes());
    auto order = shuffled_indices(fed.total_clients, derive_seed(rs, {kMalicious}));
    order.resize(atk.attack_scale);
    std::sort(order.begin(), order.end());
    result.malicious_ids = order;
    for (std::size_t r = 0; r < order.size(); ++r) {
      attacker_rank[order[r]] = r;
      clients[order[r]].is_malicious = true;
    }
    parts = atk.distributed_trigger
                ? split_trigger(atk.trigger, std::min(atk.attack_scale, atk.trigger.entries.size()))
                : std::vector<TriggerPattern>{atk.trigger};

    const Histogram true_global = class_histogram(train);
    Histogram believed = true_global;
    if (cfg.defense.fake_distribution) {
      believed = fake_distribution(true_global, cfg.defense.fake_distribution->chisq_offset,
                                   derive_seed(rs, {kFake}), cfg.defense.fake_distribution->tol);
      result.fake_chisq = chisq(believed, true_global);
    }
    std::optional<Histogram> malicious_hist = atk.malicious_histogram;
    result.chisq_target = resolved_chisq_target(cfg, repeat);
    if (!malicious_hist && result.chisq_target)
      malicious_hist = histogram_at_distance(believed, *result.chisq_target, atk.chisq_tol,
                                             derive_seed(rs, {kMaliciousHist}));
    if (malicious_hist) {
      if (malicious_hist->size() != train.num_classes())
        throw ConfigError("attack.malicious_histogram has the wrong number of classes");
      result.measured_chisq = chisq(*malicious_hist, true_global);
      const std::size_t size = atk.local_data_size.value_or(
          std::max<std::size_t>(1, train.size() / fed.total_clients));
      for (std::size_t id : result.malicious_ids)
        clients[id].data = resample_client_data(train, *malicious_hist, size, derive_seed(rs, {kResample, id}));
    }
    for (std::size_t id : result.malicious_ids) {
      const std::size_t budget = local_budget(atk, attacker_rank[id]);
      const std::size_t capacity = clients[id].data.size() * fed.training.local_epochs;
      if (budget > capacity)
        throw ConfigError("attack: local budget " + std::to_string(budget) + " exceeds client " +
                          std::to_string(id) + "'s " + std::to_string(capacity) +
                          " sample visits per local training run");
    }
  }

  nn::ModelParams global = nn::init_mlp(model_architecture(cfg, train), derive_seed(rs, {kInit}));
  Dataset asr_eval(train.num_classes(), train.num_features());
  const bool has_trigger = !atk.trigger.entries.empty();
  if (has_trigger) {
    validate_trigger(atk.trigger, train.num_features(), train.num_classes());
    asr_eval = asr_eval_set(test, atk.trigger, cfg.evaluation.eval_fraction, derive_seed(rs, {kAsr}));
    if (asr_eval.empty()) warnings.insert("ASR evaluation set is empty after excluding the target class");
  }
  result.asr_eval_size = asr_eval.size();

  const Scheduler scheduler = cfg.defense.separation_factor
                                  ? Scheduler::separated(*cfg.defense.separation_factor)
                                  : fed.scheduler;

  for (std::size_t round = 0; round < fed.total_rounds; ++round) {
    const auto t0 = std::chrono::steady_clock::now();
    RoundLog log;
    log.round = round;
    log.attack_active = atk.enabled() && atk.window.contains(round, fed.total_rounds);
    log.selected = select_clients(clients, fed.clients_per_round, scheduler, round, derive_seed(rs, {kSelect}));

    std::vector<ClientJob> jobs;
    jobs.reserve(log.selected.size());
    try {
      for (std::size_t id : log.selected) {
        ClientJob job;
        job.client = &clients[id];
        job.cfg = fed.training;
        job.cfg.seed = derive_seed(rs, {kLocal, round, id});
        if (log.attack_active && clients[id].is_malicious) {
          const std::size_t rank = attacker_rank[id];
          job.plan = build_poison_plan(atk.timing, local_budget(atk, rank),
                                       local_batch_sizes(clients[id].data.size(), fed.training),
                                       parts[rank % parts.size()]);
        }
        log.expected_samples += clients[id].data.size() * fed.training.local_epochs;
        jobs.push_back(std::move(job));
      }

      auto updates = train_clients(global, jobs, train, workers);
      for (auto& u : updates) {
        log.trained_samples += u.trained_samples;
        log.poisoned_samples += u.poisoned_samples;
        if (log.attack_active && clients[u.client_id].is_malicious && atk.scaling_factor != 1.0)
          u = scale_update(u, global, atk.scaling_factor);
      }
      if (cfg.defense.cosine_monitor) {
        for (const auto& u : updates) {
          bool zero = false;
          const double c = cosine_monitor(u, global, &zero);
          if (zero) warnings.insert("zero-norm last layer in cosine monitor; logged as 0");
          log.cosines.push_back({u.client_id, clients[u.client_id].is_malicious, c});
        }
      }
      if (cfg.defense.active_defense) {
        const auto& ad = *cfg.defense.active_defense;
        updates = active_defense(std::move(updates), *iid_set, ad.retrain_epochs,
                                 ad.learning_rate.value_or(fed.training.learning_rate),
                                 fed.training.batch_size, derive_seed(rs, {kDefense, round}), workers);
      }
      global = aggregate(updates);
    } catch (const std::exception& e) {
      throw std::runtime_error("round " + std::to_string(round) + ": " + e.what());
    }
    for (std::size_t id : log.selected) clients[id].last_selected_round = round;

    log.accuracy = accuracy(global, test, workers);
    log.asr = has_trigger ? asr_on_eval_set(global, asr_eval, atk.trigger.target_class, workers) : 0.0;
    log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.rounds.push_back(std::move(log));
  }
  result.final_model = std::move(global);
  result.warnings.assign(warnings.begin(), warnings.end());
  return result;
}

}  // namespace fedhet
