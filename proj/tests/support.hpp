#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fedhet/datagen.hpp"
#include "fedhet/experiment.hpp"
#include "fedhet/nn.hpp"

namespace fedhet::testing {

// Small end-to-end configuration that runs in well under a second.
inline ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.id = "tiny";
  c.seed = 11;
  c.dataset.num_classes = 4;
  c.dataset.num_features = 6;
  c.dataset.samples_per_class = 40;
  c.dataset.sigma = 0.5;
  c.partition.method = PartitionSpec::Method::kClassCap;
  c.partition.hi = 0.5;
  c.hidden = {8};
  c.federation.total_clients = 6;
  c.federation.clients_per_round = 3;
  c.federation.total_rounds = 6;
  c.federation.training.local_epochs = 1;
  c.attack.attack_scale = 2;
  c.attack.total_budget = 8;
  c.attack.trigger.entries = {{0, 2.0}, {1, 2.0}};
  c.attack.trigger.target_class = 0;
  c.evaluation.summary_rounds = 3;
  return c;
}

inline Dataset toy_dataset(std::size_t n, std::size_t classes, std::size_t features) {
  Dataset ds(classes, features);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.label = i % classes;
    for (std::size_t f = 0; f < features; ++f)
      s.features.push_back(std::sin(0.37 * static_cast<double>(i + 1) * static_cast<double>(f + 1)));
    ds.push_back(std::move(s));
  }
  return ds;
}

// Model whose output layer always favors `cls` regardless of input.
inline nn::ModelParams constant_model(std::size_t in, std::size_t classes, std::size_t cls) {
  nn::ModelParams p({in, classes});
  p.layers()[0].bias[cls] = 10.0;
  return p;
}

}  // namespace fedhet::testing
