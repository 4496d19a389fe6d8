#include "fedhet/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <string>

#include "fedhet/error.hpp"
#include "fedhet/random.hpp"

namespace fedhet {

namespace {

constexpr double kClassMeanRadius = 2.0;
constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > buf.size()) throw FormatError("truncated IDX header in " + path.string());
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), b.size());
}

}  // namespace

Dataset::Dataset(std::size_t num_classes, std::size_t num_features)
    : num_classes_(num_classes), num_features_(num_features) {
  if (num_classes < 2) throw ArgumentError("dataset needs at least 2 classes");
  if (num_features < 1) throw ArgumentError("dataset needs at least 1 feature");
}

Dataset::Dataset(std::size_t num_classes, std::size_t num_features, std::vector<Sample> samples)
    : Dataset(num_classes, num_features) {
  samples_.reserve(samples.size());
  for (auto& s : samples) push_back(std::move(s));
}

void Dataset::push_back(Sample s) {
  if (s.features.size() != num_features_)
    throw ArgumentError("sample has " + std::to_string(s.features.size()) +
                        " features, dataset declares " + std::to_string(num_features_));
  if (s.label >= num_classes_)
    throw ArgumentError("label " + std::to_string(s.label) + " out of range");
  samples_.push_back(std::move(s));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out(num_classes_, num_features_);
  out.samples_.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples_.size()) throw ArgumentError("subset index out of range");
    out.samples_.push_back(samples_[i]);
  }
  return out;
}

std::vector<std::size_t> Dataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.label);
  return out;
}

void validate_trigger(const TriggerPattern& p, std::size_t num_features,
                      std::size_t num_classes) {
  if (p.entries.empty()) throw ArgumentError("trigger pattern is empty");
  if (p.target_class >= num_classes) throw ArgumentError("trigger target class out of range");
  std::set<std::size_t> seen;
  for (const auto& [idx, value] : p.entries) {
    if (idx >= num_features)
      throw ArgumentError("trigger feature index " + std::to_string(idx) + " out of range");
    if (!seen.insert(idx).second)
      throw ArgumentError("trigger feature index " + std::to_string(idx) + " repeated");
  }
}

Dataset gen_synthetic(std::size_t num_classes, std::size_t num_features,
                      std::size_t n_per_class, double sigma, std::uint64_t seed) {
  if (num_classes < 2) throw ArgumentError("gen_synthetic: need at least 2 classes");
  if (num_features < 1) throw ArgumentError("gen_synthetic: need at least 1 feature");
  if (n_per_class < 1) throw ArgumentError("gen_synthetic: n_per_class must be >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ArgumentError("gen_synthetic: sigma must be positive");

  Dataset ds(num_classes, num_features);
  for (std::size_t k = 0; k < num_classes; ++k) {
    Rng dir_rng(derive_seed(seed, {0x6d65616eULL, k}));
    std::vector<double> mean(num_features);
    double norm = 0.0;
    while (norm == 0.0) {
      for (auto& m : mean) m = dir_rng.normal();
      norm = std::sqrt(std::inner_product(mean.begin(), mean.end(), mean.begin(), 0.0));
    }
    for (auto& m : mean) m *= kClassMeanRadius / norm;

    Rng rng(derive_seed(seed, {0x73616d70ULL, k}));
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Sample s{std::vector<double>(num_features), k};
      for (std::size_t j = 0; j < num_features; ++j) s.features[j] = rng.normal(mean[j], sigma);
      ds.push_back(std::move(s));
    }
  }
  return ds;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);

  if (read_be32(images, 0, images_path) != kIdxImageMagic)
    throw FormatError("bad IDX image magic in " + images_path.string());
  if (read_be32(labels, 0, labels_path) != kIdxLabelMagic)
    throw FormatError("bad IDX label magic in " + labels_path.string());

  const std::size_t n_images = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t n_labels = read_be32(labels, 4, labels_path);
  if (n_images != n_labels)
    throw FormatError("IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                      std::to_string(n_labels) + " labels");
  const std::size_t dim = rows * cols;
  if (dim == 0) throw FormatError("IDX images have zero size");
  if (images.size() != 16 + n_images * dim)
    throw FormatError("IDX image payload length mismatch in " + images_path.string());
  if (labels.size() != 8 + n_labels)
    throw FormatError("IDX label payload length mismatch in " + labels_path.string());

  std::size_t max_label = 1;
  for (std::size_t i = 0; i < n_labels; ++i) max_label = std::max<std::size_t>(max_label, labels[8 + i]);

  Dataset ds(max_label + 1, dim);
  for (std::size_t i = 0; i < n_images; ++i) {
    Sample s{std::vector<double>(dim), labels[8 + i]};
    const unsigned char* px = images.data() + 16 + i * dim;
    for (std::size_t j = 0; j < dim; ++j) s.features[j] = px[j] / 255.0;
    ds.push_back(std::move(s));
  }
  return ds;
}

void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (rows * cols != ds.num_features()) throw ArgumentError("write_idx: rows*cols != num_features");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw FormatError("write_idx: cannot open output files");
  write_be32(img, kIdxImageMagic);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  write_be32(lab, kIdxLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (const auto& s : ds.samples()) {
    for (double v : s.features) {
      const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
      img.put(static_cast<char>(static_cast<unsigned char>(q)));
    }
    lab.put(static_cast<char>(static_cast<unsigned char>(s.label)));
  }
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction,
                                             std::uint64_t seed) {
  if (ds.empty()) throw ArgumentError("split_train_test: empty dataset");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ArgumentError("split_train_test: test_fraction must lie in (0, 1)");
  const auto order = shuffled_indices(ds.size(), seed);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * ds.size()));
  std::span<const std::size_t> all(order);
  return {ds.subset(all.subspan(n_test)), ds.subset(all.first(n_test))};
}

Sample apply_trigger(const Sample& s, const TriggerPattern& p) {
  Sample out = s;
  for (const auto& [idx, value] : p.entries) {
    if (idx >= out.features.size())
      throw ArgumentError("apply_trigger: feature index " + std::to_string(idx) + " out of range");
    out.features[idx] = value;
  }
  out.label = p.target_class;
  return out;
}

}  // namespace fedhet
