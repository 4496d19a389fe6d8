#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <sys/wait.h>

#include "fedhet/error.hpp"
#include "fedhet/harness.hpp"
#include "fedhet/metrics.hpp"
#include "support.hpp"

using namespace fedhet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kConfig = R"({
  "id": "unit",
  "seed": 5,
  "repeats": 2,
  "dataset": {"kind": "synthetic", "num_classes": 4, "num_features": 6, "samples_per_class": 40, "sigma": 0.5},
  "partition": {"method": "class_cap", "hi": 0.5},
  "model": {"hidden": [8]},
  "federation": {"total_clients": 6, "clients_per_round": 3, "rounds": 6, "learning_rate": 0.05,
                 "batch_size": 16, "local_epochs": 1},
  "attack": {"attack_scale": 2, "total_budget": 8, "timing": "evenly", "window": "all",
             "trigger": {"features": [0, 1], "value": 2.0, "target_class": 0}},
  "defense": {"cosine_monitor": true},
  "evaluation": {"summary_rounds": 3}
})";

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fedhet_unit_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::string config_error(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

std::string with(const std::string& from, const std::string& to) {
  std::string s = kConfig;
  const auto at = s.find(from);
  REQUIRE(at != std::string::npos);
  return s.replace(at, from.size(), to);
}

std::string cli() {
  const char* p = std::getenv("FEDHET_CLI");
  return p ? p : "";
}

int run_cli(const std::string& args) {
  const int rc = std::system((cli() + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config_text(kConfig);
  CHECK(cfg.id == "unit");
  CHECK(cfg.repeats == 2);
  CHECK(cfg.dataset.num_classes == 4);
  CHECK(cfg.partition.hi == 0.5);
  CHECK(cfg.attack.trigger.entries.size() == 2);
  CHECK(cfg.defense.cosine_monitor);
  CHECK(parse_config(config_to_json(cfg)).attack.total_budget == cfg.attack.total_budget);
}

TEST_CASE("config errors name the field and line") {
  auto e = config_error(with("\"rounds\": 6", "\"rounds\": -6"));
  CHECK(e.find("federation.rounds") != std::string::npos);
  CHECK(e.find("line 8") != std::string::npos);

  e = config_error(with("\"sigma\": 0.5", "\"sigma\": 0.5, \"sigmaa\": 1"));
  CHECK(e.find("unknown key 'sigmaa'") != std::string::npos);
  CHECK(e.find("line 5") != std::string::npos);

  e = config_error(with("\"timing\": \"evenly\"", "\"timing\": \"sometimes\""));
  CHECK(e.find("attack.timing") != std::string::npos);

  e = config_error(with("\"clients_per_round\": 3", "\"clients_per_round\": 30"));
  CHECK(e.find("clients_per_round") != std::string::npos);

  e = config_error(std::string(kConfig).substr(0, 40));
  CHECK(e.find("invalid JSON") != std::string::npos);

  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("dotted path and value list helpers") {
  json doc = json::parse(kConfig);
  set_path(doc, "partition.hi", 0.75);
  CHECK(doc["partition"]["hi"] == 0.75);
  set_path(doc, "defense.active_defense.iid_fraction", 0.2);
  CHECK(doc["defense"]["active_defense"]["iid_fraction"] == 0.2);
  CHECK_THROWS_AS(set_path(doc, "id.x", 1), ConfigError);
  const auto v = parse_values("0,0.5,last,1");
  REQUIRE(v.size() == 4);
  CHECK(v[1] == 0.5);
  CHECK(v[2] == "last");
}

TEST_CASE("experiment artifacts are deterministic and self-consistent") {
  const auto cfg = parse_config_text(kConfig);
  const auto a = scratch("det_a"), b = scratch("det_b");
  const auto oa = run_experiment(cfg, a);
  const auto ob = run_experiment(cfg, b, 2);
  REQUIRE_FALSE(oa.error);
  for (const char* f : {"rounds.csv", "cosine.csv", "selection.csv", "summary.csv", "manifest.json"})
    CHECK(fs::exists(a / f));
  for (const char* f : {"rounds.csv", "cosine.csv", "selection.csv", "summary.csv"}) CHECK(slurp(a / f) == slurp(b / f));

  const auto rounds = read_csv(a / "rounds.csv");
  CHECK(rounds.front().size() == 12);
  CHECK(rounds.size() == 1 + 2 * 6);
  std::map<std::string, std::vector<double>> asr_by_repeat;
  for (std::size_t i = 1; i < rounds.size(); ++i)
    if (rounds[i][11] == "1") asr_by_repeat[rounds[i][1]].push_back(std::stod(rounds[i][9]));
  const auto summary = read_csv(a / "summary.csv");
  REQUIRE(summary.size() == 3);
  for (std::size_t i = 1; i < summary.size(); ++i) {
    const auto& v = asr_by_repeat[summary[i][1]];
    double s = 0;
    for (std::size_t k = v.size() - 3; k < v.size(); ++k) s += v[k];
    CHECK(std::stod(summary[i][10]) == doctest::Approx(s / 3).epsilon(1e-5));
  }
  const auto cos = read_csv(a / "cosine.csv");
  CHECK(cos.size() == 1 + 2 * 6 * 3);

  const auto manifest = json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["master_seed"] == 5);
  CHECK(manifest["repeats"].size() == 2);
  CHECK(manifest["repeats"][0]["malicious_ids"].size() == 2);
}

TEST_CASE("no output directory writes nothing") {
  const auto cfg = parse_config_text(kConfig);
  const auto o = run_experiment(cfg, {});
  CHECK(o.dir.empty());
  CHECK(o.summaries.size() == 2);
}

TEST_CASE("single-axis sweep") {
  const auto out = scratch("sweep1");
  SweepAxis axis{"partition.hi", parse_values("0,0.25,0.5,0.75,1")};
  json doc = json::parse(kConfig);
  doc["repeats"] = 1;
  const auto res = sweep(doc, axis, std::nullopt, out);
  CHECK(res.points.size() == 5);
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(out)) dirs += e.is_directory();
  CHECK(dirs == 5);
  CHECK(fs::exists(out / "partition.hi=0.5" / "rounds.csv"));
  CHECK(read_csv(out / "combined.csv").size() == 1 + 5 * 6);
  const auto lr = read_csv(out / "linreg.csv");
  REQUIRE(lr.size() == 2);
  CHECK(lr[1][0] == "partition.hi");
  CHECK(lr[1][1] == "5");
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : res.points) pts.emplace_back(p.values[0].get<double>(), p.outcome.mean_asr());
  CHECK(std::stod(lr[1][2]) == doctest::Approx(linreg(pts).slope).epsilon(1e-5));
  CHECK_FALSE(fs::exists(out / "heatmap.csv"));
}

TEST_CASE("two-axis sweep writes a heatmap") {
  const auto out = scratch("sweep2");
  json doc = json::parse(kConfig);
  doc["repeats"] = 1;
  doc["federation"]["rounds"] = 3;
  const auto res = sweep(doc, {"attack.attack_scale", parse_values("1,2,3")},
                         SweepAxis{"attack.total_budget", parse_values("3,6,9")}, out);
  CHECK(res.points.size() == 9);
  const auto heat = read_csv(out / "heatmap.csv");
  REQUIRE(heat.size() == 10);
  CHECK(heat[0] == std::vector<std::string>{"axis1", "value1", "axis2", "value2", "mean_asr", "median_asr",
                                            "mean_accuracy"});
  for (std::size_t i = 1; i < heat.size(); ++i) CHECK(heat[i].size() == 7);
  const auto combined = read_csv(out / "combined.csv");
  CHECK(combined.size() == 1 + 9 * 3);
  for (const auto& row : combined) CHECK(row.size() == 12);
  CHECK_FALSE(fs::exists(out / "linreg.csv"));
}

TEST_CASE("sweep validates every point before running") {
  const auto out = scratch("sweep_bad");
  json doc = json::parse(kConfig);
  try {
    sweep(doc, {"partition.hi", parse_values("0.5,7")}, std::nullopt, out);
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("partition.hi=7") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("command line exit codes") {
  if (cli().empty()) return;
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  std::ofstream(dir / "good.json") << kConfig;
  std::ofstream(dir / "bad.json") << with("\"rounds\": 6", "\"rounds\": \"six\"");
  CHECK(run_cli("run " + (dir / "good.json").string() + " --out " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "rounds.csv"));
  CHECK(run_cli("run " + (dir / "good.json").string() + " --seed 9 --workers 2 --out " + (dir / "run9").string()) == 0);
  CHECK(json::parse(slurp(dir / "run9" / "manifest.json"))["master_seed"] == 9);
  CHECK(run_cli("run " + (dir / "bad.json").string() + " --out " + (dir / "x").string()) == 2);
  CHECK(run_cli("run " + (dir / "missing.json").string()) == 2);
  CHECK(run_cli("sweep " + (dir / "good.json").string() + " --axis partition.hi --values 0,1 --out " +
                (dir / "sw").string()) == 0);
  CHECK(fs::exists(dir / "sw" / "linreg.csv"));
  CHECK(run_cli("frobnicate") != 0);
}
