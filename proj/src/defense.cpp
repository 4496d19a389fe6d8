#include "fedhet/defense.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedhet/attack.hpp"
#include "fedhet/error.hpp"
#include "fedhet/random.hpp"

namespace fedhet {

void validate(const DefenseConfig& cfg) {
  if (cfg.active_defense) {
    const auto& a = *cfg.active_defense;
    if (!(a.iid_fraction > 0.0 && a.iid_fraction < 1.0))
      throw ConfigError("defense.active_defense.iid_fraction must lie in (0, 1)");
    if (a.retrain_epochs < 1) throw ConfigError("defense.active_defense.retrain_epochs must be >= 1");
    if (a.learning_rate && !(*a.learning_rate >= 0.0))
      throw ConfigError("defense.active_defense.learning_rate must be >= 0");
  }
  if (cfg.separation_factor && *cfg.separation_factor < 1)
    throw ConfigError("defense.separation_factor must be >= 1");
  if (cfg.fake_distribution && !(cfg.fake_distribution->chisq_offset >= 0.0))
    throw ConfigError("defense.fake_distribution.chisq_offset must be >= 0");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b, bool* zero_norm) {
  if (a.size() != b.size()) throw ArgumentError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (zero_norm) *zero_norm = false;
  if (na == 0.0 || nb == 0.0) {
    if (zero_norm) *zero_norm = true;
    return 0.0;
  }
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

double cosine_monitor(const ClientUpdate& update, const nn::ModelParams& prev_global, bool* zero_norm) {
  if (!update.params.same_shape(prev_global)) throw ArgumentError("cosine_monitor: shape mismatch");
  const auto u = nn::flatten_last_layer(update.params);
  const auto g = nn::flatten_last_layer(prev_global);
  return cosine_similarity(u, g, zero_norm);
}

std::vector<ClientUpdate> active_defense(std::vector<ClientUpdate> updates, const Dataset& iid_set,
                                         std::size_t retrain_epochs, double lr,
                                         std::size_t batch_size, std::uint64_t seed, int workers) {
  if (iid_set.empty()) throw ConfigError("active_defense: empty IID set");
  if (lr == 0.0 || retrain_epochs == 0) return updates;
  const auto n = static_cast<std::ptrdiff_t>(updates.size());
  std::vector<std::string> errors(updates.size());
#pragma omp parallel for num_threads(workers > 1 ? workers : 1) schedule(dynamic, 1) if (workers > 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      nn::TrainingConfig cfg{lr, batch_size, retrain_epochs,
                             derive_seed(seed, {0x646566ULL, updates[i].client_id})};
      nn::train(updates[i].params, iid_set.samples(), cfg);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error("active_defense: " + e);
  return updates;
}

std::pair<Dataset, Dataset> reserve_iid_set(const Dataset& train, double rho, std::uint64_t seed) {
  if (!(rho > 0.0 && rho < 1.0)) throw ArgumentError("reserve_iid_set: rho must lie in (0, 1)");
  if (train.empty()) throw CapacityError("reserve_iid_set: empty training set");
  const auto n_reserve = static_cast<std::size_t>(std::llround(rho * static_cast<double>(train.size())));
  if (n_reserve == 0) throw CapacityError("reserve_iid_set: rho reserves no samples");

  std::vector<std::vector<std::size_t>> by_class(train.num_classes());
  for (std::size_t i = 0; i < train.size(); ++i) by_class[train[i].label].push_back(i);
  const auto counts = apportion(class_histogram(train), n_reserve);

  std::vector<char> reserved(train.size(), 0);
  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    if (by_class[k].empty()) continue;
    if (counts[k] >= by_class[k].size())
      throw CapacityError("reserve_iid_set: rho leaves class " + std::to_string(k) + " without samples");
    Rng rng(derive_seed(seed, {k}));
    rng.shuffle(by_class[k]);
    for (std::size_t t = 0; t < counts[k]; ++t) reserved[by_class[k][t]] = 1;
  }
  std::vector<std::size_t> keep, take;
  for (std::size_t i = 0; i < train.size(); ++i) (reserved[i] ? take : keep).push_back(i);
  return {train.subset(take), train.subset(keep)};
}

Histogram fake_distribution(const Histogram& true_hist, double chisq_offset, std::uint64_t seed,
                            double tol) {
  return histogram_at_distance(true_hist, chisq_offset, tol, seed);
}

}  // namespace fedhet
