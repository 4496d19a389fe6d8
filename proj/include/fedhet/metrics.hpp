#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fedhet/datagen.hpp"
#include "fedhet/nn.hpp"

namespace fedhet {

// Predictions for every sample, rows split into contiguous chunks across
// OpenMP threads. Output does not depend on the worker count.
std::vector<std::size_t> predict_all(const nn::ModelParams& p, const Dataset& ds, int workers = 1);

// Fraction of untriggered samples predicted correctly.
double accuracy(const nn::ModelParams& p, const Dataset& test, int workers = 1);

// Triggered evaluation set: a seeded eval_fraction subset of test with the
// target-class originals dropped and the full trigger applied. May be empty.
Dataset asr_eval_set(const Dataset& test, const TriggerPattern& pattern, double eval_fraction,
                     std::uint64_t seed);

// Fraction of eval samples predicted as target; 0 when eval is empty.
double asr_on_eval_set(const nn::ModelParams& p, const Dataset& eval, std::size_t target_class,
                       int workers = 1);

double attack_success_rate(const nn::ModelParams& p, const Dataset& test,
                           const TriggerPattern& pattern, double eval_fraction, std::uint64_t seed,
                           int workers = 1);

// Straightforward per-sample loops kept as the oracle for the kernels above.
namespace reference {
double accuracy(const nn::ModelParams& p, const Dataset& test);
double attack_success_rate(const nn::ModelParams& p, const Dataset& test,
                           const TriggerPattern& pattern, double eval_fraction, std::uint64_t seed);
}  // namespace reference

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r = 0.0;  // Pearson; 0 when y is constant
};

// Ordinary least squares. Throws ArgumentError on < 2 points or constant x.
LinearFit linreg(std::span<const std::pair<double, double>> points);

double mean(std::span<const double> v);
double median(std::vector<double> v);
// Linear interpolation between order statistics, q in [0, 1].
double quantile(std::vector<double> v, double q);
double iqr(std::vector<double> v);
// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace fedhet
