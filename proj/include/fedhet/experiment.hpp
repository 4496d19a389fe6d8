#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedhet/attack.hpp"
#include "fedhet/datagen.hpp"
#include "fedhet/defense.hpp"
#include "fedhet/fedcore.hpp"
#include "fedhet/partition.hpp"

namespace fedhet {

struct DatasetSpec {
  enum class Kind { kSynthetic, kIdx };
  Kind kind = Kind::kSynthetic;
  std::size_t num_classes = 10;
  std::size_t num_features = 20;
  std::size_t samples_per_class = 200;
  double sigma = 1.0;
  std::string images_path;
  std::string labels_path;
  double test_fraction = 0.2;
};

struct PartitionSpec {
  enum class Method { kClassCap, kGaussian, kDirichlet };
  Method method = Method::kClassCap;
  std::optional<double> hi;                  // class_cap: target heterogeneity index
  std::optional<std::size_t> max_classes;    // class_cap: explicit cap
  double variance = 1.0;                     // gaussian
  double alpha = 0.5;                        // dirichlet
};

struct EvaluationSpec {
  double eval_fraction = 0.5;
  std::size_t summary_rounds = 20;
};

struct ExperimentConfig {
  std::string id = "experiment";
  DatasetSpec dataset;
  PartitionSpec partition;
  std::vector<std::size_t> hidden{32};
  FederationConfig federation;
  AttackConfig attack;
  // Per-repeat ChiSq targets evenly spaced over [lo, hi] (overrides chisq_target).
  std::optional<std::pair<double, double>> chisq_target_range;
  DefenseConfig defense;
  EvaluationSpec evaluation;
  std::uint64_t seed = 1;
  std::size_t repeats = 1;
  std::string output_dir = "out";
};

// Throws ConfigError describing the first inconsistency found.
void validate(const ExperimentConfig& cfg);

struct CosineRow {
  std::size_t client_id = 0;
  bool malicious = false;
  double cosine = 0.0;
};

struct RoundLog {
  std::size_t round = 0;
  double accuracy = 0.0;
  double asr = 0.0;
  std::vector<std::size_t> selected;
  std::vector<CosineRow> cosines;
  bool attack_active = false;  // round lies inside the global attack window
  std::size_t poisoned_samples = 0;
  std::size_t trained_samples = 0;
  std::size_t expected_samples = 0;  // sum of selected clients' data x local epochs
  double wall_ms = 0.0;
};

struct FederationResult {
  std::vector<RoundLog> rounds;
  std::vector<std::size_t> malicious_ids;
  std::optional<double> heterogeneity_index;
  std::optional<std::size_t> class_cap;
  std::optional<double> chisq_target;
  std::optional<double> measured_chisq;  // malicious histogram vs true global
  std::optional<double> fake_chisq;      // believed vs true global
  std::size_t asr_eval_size = 0;
  std::vector<std::string> warnings;
  nn::ModelParams final_model;
};

// Seed of repeat r, derived from the master seed.
std::uint64_t repeat_seed(const ExperimentConfig& cfg, std::size_t repeat);

// The ChiSq target used by a repeat, if any.
std::optional<double> resolved_chisq_target(const ExperimentConfig& cfg, std::size_t repeat);

std::vector<std::size_t> model_architecture(const ExperimentConfig& cfg, const Dataset& data);

Dataset load_dataset(const ExperimentConfig& cfg);

// Executes one repeat. Output is identical for any worker count.
FederationResult run_federation(const ExperimentConfig& cfg, std::size_t repeat = 0, int workers = 1);

struct Summary {
  double asr = 0.0;
  double accuracy = 0.0;
  std::size_t rounds_averaged = 0;
  bool short_run = false;  // fewer rounds than summary_rounds were available
};

// Means over the final summary_rounds attack rounds (all rounds when no
// attack is configured).
Summary summarize(const std::vector<RoundLog>& rounds, std::size_t summary_rounds, bool attack_enabled);

}  // namespace fedhet
