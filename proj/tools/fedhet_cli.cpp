#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedhet/error.hpp"
#include "fedhet/harness.hpp"

namespace {

int run_cmd(const std::string& path, const std::optional<std::string>& out, const std::optional<std::uint64_t>& seed,
            int workers) {
  auto cfg = fedhet::load_config(path);
  if (seed) cfg.seed = *seed;
  const std::string dir = out ? *out : cfg.output_dir + "/" + cfg.id;
  auto outcome = fedhet::run_experiment(cfg, dir, workers);
  if (outcome.error) {
    std::cerr << "error: " << *outcome.error << '\n';
    return 1;
  }
  std::cout << "experiment " << cfg.id << ": " << outcome.summaries.size() << " repeat(s)\n";
  for (const auto& s : outcome.summaries)
    std::cout << "  repeat " << s.repeat << ": asr=" << fedhet::format_real(s.summary.asr)
              << " accuracy=" << fedhet::format_real(s.summary.accuracy) << '\n';
  std::cout << "  mean asr=" << fedhet::format_real(outcome.mean_asr())
            << " mean accuracy=" << fedhet::format_real(outcome.mean_accuracy()) << '\n'
            << "  results in " << dir << '\n';
  return 0;
}

int sweep_cmd(const std::string& path, const std::vector<std::string>& axes, const std::vector<std::string>& values,
              const std::optional<std::string>& out, const std::optional<std::uint64_t>& seed, int workers) {
  if (axes.empty() || axes.size() > 2 || axes.size() != values.size())
    throw fedhet::ConfigError("sweep: give one or two --axis options, each with a matching --values list");
  const std::string text = fedhet::read_text_file(path);
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) fedhet::parse_config_text(text);  // throws with a line number
  if (seed) doc["seed"] = *seed;
  fedhet::SweepAxis a1{axes[0], fedhet::parse_values(values[0])};
  std::optional<fedhet::SweepAxis> a2;
  if (axes.size() == 2) a2 = fedhet::SweepAxis{axes[1], fedhet::parse_values(values[1])};
  const std::string dir = out ? *out : doc.value("output_dir", std::string("out")) + "/" +
                                           doc.value("id", std::string("sweep"));
  auto result = fedhet::sweep(doc, a1, a2, dir, workers);
  for (const auto& p : result.points)
    std::cout << p.label << ": mean asr=" << fedhet::format_real(p.outcome.mean_asr())
              << " mean accuracy=" << fedhet::format_real(p.outcome.mean_accuracy()) << '\n';
  std::cout << "results in " << dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated backdoor heterogeneity experiments"};
  app.require_subcommand(1);
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  app.add_option("--out", out, "Output directory");
  app.add_option("--seed", seed, "Override the master seed");
  app.add_option("--workers", workers, "Parallel workers for client training")->check(CLI::PositiveNumber);

  std::string run_path;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("config", run_path, "Experiment config (JSON)")->required();

  std::string sweep_path;
  std::vector<std::string> axes, values;
  auto* sw = app.add_subcommand("sweep", "Run a parameter sweep over one or two axes");
  sw->add_option("template", sweep_path, "Template config (JSON)")->required();
  sw->add_option("--axis", axes, "Dotted config path to vary (repeat for a second axis)")->required();
  sw->add_option("--values", values, "Comma-separated values for the matching axis")->required();

  for (auto* sub : {run, sw}) {
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--seed", seed, "Override the master seed");
    sub->add_option("--workers", workers, "Parallel workers")->check(CLI::PositiveNumber);
  }

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return run_cmd(run_path, out, seed, workers);
    return sweep_cmd(sweep_path, axes, values, out, seed, workers);
  } catch (const fedhet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
