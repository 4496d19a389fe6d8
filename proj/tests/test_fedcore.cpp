#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "fedhet/error.hpp"
#include "fedhet/fedcore.hpp"
#include "fedhet/random.hpp"
#include "support.hpp"

using namespace fedhet;

namespace {

std::vector<ClientState> make_states(std::size_t m) {
  std::vector<ClientState> s(m);
  for (std::size_t i = 0; i < m; ++i) s[i].id = i;
  return s;
}

ClientState client_over(std::size_t n, std::size_t id = 0, bool malicious = false) {
  ClientState c;
  c.id = id;
  c.is_malicious = malicious;
  c.data.resize(n);
  std::iota(c.data.begin(), c.data.end(), std::size_t{0});
  return c;
}

ClientUpdate scalar_update(double v, std::size_t count) {
  nn::ModelParams p({1, 1});
  p.layers()[0].weights[0] = v;
  p.layers()[0].bias[0] = v;
  return {0, p, count, 0, 0};
}

}  // namespace

TEST_CASE("uniform selection") {
  const auto s = make_states(8);
  CHECK(select_clients(s, 8, Scheduler::uniform(), 0, 1) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
  const auto a = select_clients(s, 3, Scheduler::uniform(), 4, 9);
  CHECK(a.size() == 3);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
  CHECK(select_clients(s, 3, Scheduler::uniform(), 4, 9) == a);
  CHECK_THROWS_AS(select_clients(s, 9, Scheduler::uniform(), 0, 1), ArgumentError);

  std::map<std::size_t, int> hits;
  for (std::size_t r = 0; r < 4000; ++r)
    for (auto id : select_clients(s, 2, Scheduler::uniform(), r, 5)) ++hits[id];
  for (const auto& [id, n] : hits) CHECK(std::abs(n - 1000) < 120);
}

TEST_CASE("separation excludes recently selected clients") {
  auto s = make_states(20);
  s[3].last_selected_round = 10;
  for (std::size_t round = 11; round <= 14; ++round)
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto ids = select_clients(s, 5, Scheduler::separated(5), round, seed);
      CHECK(std::find(ids.begin(), ids.end(), 3) == ids.end());
    }
  bool picked = false;
  for (std::uint64_t seed = 0; seed < 60 && !picked; ++seed) {
    const auto ids = select_clients(s, 5, Scheduler::separated(5), 15, seed);
    picked = std::find(ids.begin(), ids.end(), 3) != ids.end();
  }
  CHECK(picked);
}

TEST_CASE("separation fallback uses least recently selected clients") {
  auto s = make_states(3);
  s[0].last_selected_round = 9;
  s[1].last_selected_round = 7;
  s[2].last_selected_round = 8;
  // Round 10, S = 5: nobody eligible; two slots go to clients 1 then 2.
  CHECK(select_clients(s, 2, Scheduler::separated(5), 10, 1) == std::vector<std::size_t>{1, 2});
  s[2].last_selected_round.reset();
  // Client 2 never selected is eligible; the remaining slot goes to client 1.
  CHECK(select_clients(s, 2, Scheduler::separated(5), 10, 1) == std::vector<std::size_t>{1, 2});
  CHECK(select_clients(s, 1, Scheduler::separated(5), 10, 1) == std::vector<std::size_t>{2});
}

TEST_CASE("batch size helpers") {
  CHECK(batch_sizes(21, 8) == std::vector<std::size_t>{5, 8, 8});
  CHECK(batch_sizes(16, 8) == std::vector<std::size_t>{8, 8});
  nn::TrainingConfig cfg;
  cfg.batch_size = 8;
  cfg.local_epochs = 2;
  CHECK(local_batch_sizes(21, cfg) == std::vector<std::size_t>{5, 8, 8, 5, 8, 8});
}

TEST_CASE("local round examples") {
  const auto ds = testing::toy_dataset(30, 3, 4);
  const auto global = nn::init_mlp({4, 5, 3}, 2);
  const auto benign = client_over(30, 1);
  nn::TrainingConfig cfg{0.1, 8, 0, 7};
  auto u = local_round(global, benign, cfg, std::nullopt, ds);
  CHECK(u.params == global);
  CHECK(u.sample_count == 30);
  CHECK(u.trained_samples == 0);

  cfg.local_epochs = 2;
  cfg.learning_rate = 0.0;
  u = local_round(global, benign, cfg, std::nullopt, ds);
  CHECK(u.params == global);
  CHECK(u.trained_samples == 60);

  cfg.learning_rate = 0.1;
  const auto a = local_round(global, benign, cfg, std::nullopt, ds);
  const auto b = local_round(global, benign, cfg, std::nullopt, ds);
  CHECK(a.params == b.params);
  CHECK_FALSE(a.params == global);

  TriggerPattern pat{{{0, 3.0}}, 1};
  const auto plan = build_poison_plan(Timing::last(), 4, local_batch_sizes(30, cfg), pat);
  CHECK_THROWS_AS(local_round(global, benign, cfg, plan, ds), ConfigError);
  const auto bad = client_over(30, 2, true);
  const auto wrong = build_poison_plan(Timing::last(), 4, batch_sizes(30, 8), pat);
  CHECK_THROWS_AS(local_round(global, bad, cfg, wrong, ds), ConfigError);
  const auto mal = local_round(global, bad, cfg, plan, ds);
  CHECK(mal.poisoned_samples == 4);
  CHECK(mal.trained_samples == 60);
  CHECK_FALSE(mal.params == a.params);
}

TEST_CASE("scale update") {
  const nn::ModelParams g({2, 2});
  auto u = ClientUpdate{0, g, 10, 0, 0};
  u.params.layers()[0].weights[1] = 0.1;
  CHECK(scale_update(u, g, 1.0).params == u.params);
  CHECK(scale_update(u, g, 2.0).params.layers()[0].weights[1] == doctest::Approx(0.2));

  const auto g2 = nn::init_mlp({3, 2}, 1);
  auto v = ClientUpdate{0, nn::init_mlp({3, 2}, 2), 5, 0, 0};
  const auto s = scale_update(v, g2, 3.0);
  const auto fg = nn::flatten_last_layer(g2), fu = nn::flatten_last_layer(v.params), fs = nn::flatten_last_layer(s.params);
  for (std::size_t i = 0; i < fs.size(); ++i) CHECK(fs[i] == doctest::Approx(fg[i] + 3.0 * (fu[i] - fg[i])));

  CHECK_THROWS_AS(scale_update(u, g, 0.5), ArgumentError);
  CHECK_THROWS_AS(scale_update(u, nn::ModelParams({3, 2}), 2.0), ArgumentError);
}

TEST_CASE("aggregation") {
  const auto one = scalar_update(0.7, 3);
  CHECK(aggregate(std::vector<ClientUpdate>{one}).at(0) == doctest::Approx(0.7));
  CHECK(aggregate(std::vector<ClientUpdate>{scalar_update(1.0, 4), scalar_update(3.0, 4)}).at(0) ==
        doctest::Approx(2.0));
  const std::vector<ClientUpdate> three{scalar_update(0, 1), scalar_update(0, 1), scalar_update(1, 2)};
  CHECK(aggregate(three).at(0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(aggregate(std::vector<ClientUpdate>{}), ArgumentError);
  CHECK_THROWS_AS(aggregate(std::vector<ClientUpdate>{scalar_update(1, 1), ClientUpdate{0, nn::ModelParams({2, 1}), 1, 0, 0}}),
                  ArgumentError);
  CHECK_THROWS_AS(aggregate(std::vector<ClientUpdate>{scalar_update(1, 0)}), ArgumentError);
}

TEST_CASE("aggregation properties") {
  Rng r(17);
  for (int t = 0; t < 30; ++t) {
    std::vector<ClientUpdate> ups;
    const std::size_t n = 1 + r.index(6);
    for (std::size_t i = 0; i < n; ++i) ups.push_back({i, nn::init_mlp({3, 4, 2}, r.next_u64()), 1 + r.index(50), 0, 0});
    const auto agg = aggregate(ups);
    auto perm = ups;
    Rng(r.next_u64()).shuffle(perm);
    const auto agg2 = aggregate(perm);
    double total = 0;
    for (const auto& u : ups) total += static_cast<double>(u.sample_count);
    for (std::size_t i = 0; i < agg.num_parameters(); ++i) {
      double want = 0;
      for (const auto& u : ups) want += u.params.at(i) * static_cast<double>(u.sample_count) / total;
      CHECK(agg.at(i) == doctest::Approx(want).epsilon(1e-12));
      CHECK(agg2.at(i) == doctest::Approx(agg.at(i)).epsilon(1e-12));
    }
    std::vector<ClientUpdate> same(n, ups.front());
    for (std::size_t i = 0; i < n; ++i) same[i].sample_count = 1 + r.index(9);
    const auto s = aggregate(same);
    for (std::size_t i = 0; i < s.num_parameters(); ++i) CHECK(s.at(i) == doctest::Approx(ups.front().params.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("parallel client training matches the serial reference") {
  const auto ds = testing::toy_dataset(120, 3, 5);
  const auto global = nn::init_mlp({5, 6, 3}, 4);
  std::vector<ClientState> clients;
  for (std::size_t c = 0; c < 6; ++c) {
    ClientState s;
    s.id = c;
    s.is_malicious = c == 2;
    for (std::size_t i = c * 20; i < (c + 1) * 20; ++i) s.data.push_back(i);
    clients.push_back(s);
  }
  std::vector<ClientJob> jobs;
  for (const auto& c : clients) {
    ClientJob j{&c, {0.05, 8, 2, derive_seed(3, {c.id})}, std::nullopt};
    if (c.is_malicious) j.plan = build_poison_plan(Timing::evenly(), 6, local_batch_sizes(20, j.cfg), {{{0, 2.0}}, 0});
    jobs.push_back(j);
  }
  const auto serial = train_clients_serial(global, jobs, ds);
  for (int w : {1, 2, 4}) {
    const auto par = train_clients(global, jobs, ds, w);
    REQUIRE(par.size() == serial.size());
    for (std::size_t i = 0; i < par.size(); ++i) {
      CHECK(par[i].client_id == serial[i].client_id);
      CHECK(par[i].params == serial[i].params);
      CHECK(par[i].poisoned_samples == serial[i].poisoned_samples);
    }
  }
  CHECK(serial[2].poisoned_samples == 6);
}
