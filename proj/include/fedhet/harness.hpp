#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedhet/experiment.hpp"

namespace fedhet {

// Parses and validates an experiment config. Unknown keys are rejected.
// Errors are ConfigError with messages of the form
// "line N: <json path>: <problem>".
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& source_text = {});
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

// Canonical JSON echo of a resolved config (written to the manifest).
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

// Header of the long-format results CSV shared by every experiment and sweep.
extern const char* const kRoundsCsvHeader;

void write_rounds_csv(std::ostream& out, const ExperimentConfig& cfg, std::size_t repeat,
                      const FederationResult& r, bool header);
void write_cosine_csv(std::ostream& out, const ExperimentConfig& cfg, std::size_t repeat,
                      const FederationResult& r, bool header);

struct RepeatSummary {
  std::size_t repeat = 0;
  Summary summary;
  std::optional<double> heterogeneity_index;
  std::optional<double> chisq_target;
  std::optional<double> measured_chisq;
};

struct ExperimentOutcome {
  std::filesystem::path dir;
  std::vector<FederationResult> results;
  std::vector<RepeatSummary> summaries;
  std::optional<std::string> error;  // set when a repeat failed

  // Mean / median of the per-repeat summary values.
  double mean_asr() const;
  double median_asr() const;
  double mean_accuracy() const;
  double median_accuracy() const;
};

// Runs every repeat and writes rounds.csv, cosine.csv, selection.csv,
// summary.csv and manifest.json into out_dir. A failing repeat leaves the
// completed repeats' files plus error.json and sets outcome.error.
// out_dir empty: nothing is written.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                 int workers = 1);

struct SweepAxis {
  std::string path;  // dotted config path, e.g. "partition.hi"
  std::vector<nlohmann::json> values;
};

// "0,0.5,1" -> [0, 0.5, 1]; items that are not JSON become strings.
std::vector<nlohmann::json> parse_values(const std::string& list);

// Sets a dotted path in a config document (intermediate objects created).
void set_path(nlohmann::json& doc, const std::string& path, const nlohmann::json& value);

struct SweepPoint {
  std::vector<nlohmann::json> values;  // one per axis
  std::string label;  // "axis=value" or "axis1=value1;axis2=value2"
  ExperimentOutcome outcome;
};

struct SweepOutcome {
  std::vector<SweepPoint> points;
};

// One experiment per value (or per value pair for two axes). Writes one
// directory per point, combined.csv (all rounds), sweep_summary.csv,
// heatmap.csv for two axes and linreg.csv for one numeric axis.
SweepOutcome sweep(const nlohmann::json& template_doc, const SweepAxis& axis,
                   const std::optional<SweepAxis>& axis2, const std::filesystem::path& out_dir,
                   int workers = 1);

std::string format_real(double v);

}  // namespace fedhet
