#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace fedhet {

struct Sample {
  std::vector<double> features;
  std::size_t label = 0;

  bool operator==(const Sample&) const = default;
};

// Labeled feature vectors with a declared class count and dimension.
class Dataset {
 public:
  Dataset(std::size_t num_classes, std::size_t num_features);
  Dataset(std::size_t num_classes, std::size_t num_features, std::vector<Sample> samples);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_features() const { return num_features_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::span<const Sample> samples() const { return samples_; }

  // Validates the sample against the dataset invariants before appending.
  void push_back(Sample s);

  // Samples at the given indices, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

  std::vector<std::size_t> labels() const;

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t num_classes_;
  std::size_t num_features_;
  std::vector<Sample> samples_;
};

// Features pinned to fixed values plus relabeling to a target class.
struct TriggerPattern {
  std::vector<std::pair<std::size_t, double>> entries;
  std::size_t target_class = 0;

  bool operator==(const TriggerPattern&) const = default;
};

// Throws ArgumentError when the pattern is empty, has duplicate indices, or
// refers to features >= num_features / classes >= num_classes.
void validate_trigger(const TriggerPattern& p, std::size_t num_features,
                      std::size_t num_classes);

// Gaussian blobs: class k is drawn around a mean at radius 2 along a
// direction that depends only on (k, seed).
Dataset gen_synthetic(std::size_t num_classes, std::size_t num_features,
                      std::size_t n_per_class, double sigma, std::uint64_t seed);

// Reads an IDX image/label pair (ubyte images, magic 0x803; labels 0x801).
// Pixels are scaled to [0, 1] and flattened row-major. num_classes is
// max(label) + 1, at least 2.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

// Writes features quantized to bytes as a rows x cols IDX image file
// (rows * cols must equal num_features) and the labels file.
void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction,
                                             std::uint64_t seed);

Sample apply_trigger(const Sample& s, const TriggerPattern& p);

}  // namespace fedhet
