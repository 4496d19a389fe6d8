#include <doctest.h>

#include <algorithm>

#include "fedhet/error.hpp"
#include "fedhet/experiment.hpp"
#include "support.hpp"

using namespace fedhet;

namespace {

void check_same(const FederationResult& a, const FederationResult& b) {
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    CHECK(a.rounds[i].accuracy == b.rounds[i].accuracy);
    CHECK(a.rounds[i].asr == b.rounds[i].asr);
    CHECK(a.rounds[i].selected == b.rounds[i].selected);
    CHECK(a.rounds[i].poisoned_samples == b.rounds[i].poisoned_samples);
  }
  CHECK(a.malicious_ids == b.malicious_ids);
  CHECK(a.final_model == b.final_model);
}

}  // namespace

TEST_CASE("federation runs are reproducible for any worker count") {
  auto cfg = testing::tiny_config();
  cfg.defense.cosine_monitor = true;
  const auto ref = run_federation(cfg, 0, 1);
  check_same(ref, run_federation(cfg, 0, 1));
  check_same(ref, run_federation(cfg, 0, 4));
  cfg.defense.active_defense = ActiveDefenseConfig{0.1, 1, std::nullopt};
  check_same(run_federation(cfg, 1, 1), run_federation(cfg, 1, 3));
  const auto other = run_federation(testing::tiny_config(), 1, 1);
  CHECK_FALSE(other.final_model == ref.final_model);
}

TEST_CASE("poisoning only happens inside the attack window") {
  auto cfg = testing::tiny_config();
  cfg.federation.total_rounds = 9;
  for (const char* w : {"former", "middle", "latter"}) {
    cfg.attack.window = AttackWindow::parse(w);
    const auto res = run_federation(cfg);
    const auto [lo, hi] = cfg.attack.window.bounds(9);
    std::size_t inside = 0;
    for (const auto& r : res.rounds) {
      CHECK(r.attack_active == (r.round >= lo && r.round < hi));
      if (!r.attack_active) CHECK(r.poisoned_samples == 0);
      inside += r.poisoned_samples;
    }
    CHECK(inside > 0);
  }
}

TEST_CASE("every selected client trains on all of its samples each epoch") {
  auto cfg = testing::tiny_config();
  cfg.federation.training.local_epochs = 2;
  cfg.federation.training.batch_size = 7;
  const auto res = run_federation(cfg);
  for (const auto& r : res.rounds) {
    CHECK(r.trained_samples == r.expected_samples);
    CHECK(r.selected.size() == cfg.federation.clients_per_round);
  }
}

TEST_CASE("per-round poison count equals the selected attackers' budgets") {
  auto cfg = testing::tiny_config();
  cfg.attack.attack_scale = 3;
  cfg.attack.total_budget = 10;
  const auto res = run_federation(cfg);
  for (const auto& r : res.rounds) {
    std::size_t want = 0;
    for (auto id : r.selected) {
      const auto it = std::find(res.malicious_ids.begin(), res.malicious_ids.end(), id);
      if (it != res.malicious_ids.end())
        want += local_budget(cfg.attack, static_cast<std::size_t>(it - res.malicious_ids.begin()));
    }
    CHECK(r.poisoned_samples == want);
  }
}

TEST_CASE("benign federation has near-zero backdoor success") {
  auto cfg = testing::tiny_config();
  cfg.attack.attack_scale = 0;
  cfg.attack.total_budget = 0;
  cfg.federation.total_rounds = 20;
  cfg.federation.training.local_epochs = 2;
  cfg.dataset.samples_per_class = 80;
  cfg.partition.hi = 0.0;
  const auto res = run_federation(cfg);
  const auto s = summarize(res.rounds, 5, false);
  MESSAGE("benign asr " << s.asr << " accuracy " << s.accuracy);
  CHECK(s.asr < 1.5 / static_cast<double>(cfg.dataset.num_classes));
  CHECK(s.accuracy > 0.8);
}

TEST_CASE("a single all-malicious round with large scaling plants the backdoor") {
  auto cfg = testing::tiny_config();
  cfg.federation.total_rounds = 1;
  cfg.federation.clients_per_round = 6;
  cfg.attack.attack_scale = 6;
  cfg.attack.total_budget = 6 * 20;
  cfg.attack.scaling_factor = 10.0;
  cfg.federation.training.local_epochs = 3;
  cfg.attack.distributed_trigger = false;
  const double attacked = run_federation(cfg).rounds.front().asr;
  cfg.attack.attack_scale = 0;
  cfg.attack.total_budget = 0;
  const double baseline = run_federation(cfg).rounds.front().asr;
  MESSAGE("attacked " << attacked << " baseline " << baseline);
  CHECK(attacked > baseline);
}

TEST_CASE("one benign round with zero learning rate leaves the model untouched") {
  auto cfg = testing::tiny_config();
  cfg.federation.total_rounds = 1;
  cfg.federation.clients_per_round = 1;
  cfg.federation.training.learning_rate = 0.0;
  cfg.attack.attack_scale = 0;
  cfg.attack.total_budget = 0;
  const auto res = run_federation(cfg);
  CHECK(res.rounds.size() == 1);
  CHECK(res.final_model.all_finite());
  // Later rounds cannot move an unchanged model.
  auto cfg2 = cfg;
  cfg2.federation.total_rounds = 2;
  CHECK(run_federation(cfg2).final_model == res.final_model);
}

TEST_CASE("invalid configurations are rejected") {
  auto cfg = testing::tiny_config();
  cfg.federation.clients_per_round = 7;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = testing::tiny_config();
  cfg.attack.attack_scale = 7;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = testing::tiny_config();
  cfg.attack.total_budget = 100000;
  CHECK_THROWS_AS(run_federation(cfg), ConfigError);
}
