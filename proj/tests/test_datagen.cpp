#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "fedhet/datagen.hpp"
#include "fedhet/error.hpp"

using namespace fedhet;
namespace fs = std::filesystem;

namespace {

// Nearest-centroid classifier: linear for isotropic classes, fit on train only.
double nearest_centroid_accuracy(const Dataset& train, const Dataset& test) {
  const std::size_t C = train.num_classes(), d = train.num_features();
  std::vector<std::vector<double>> mu(C, std::vector<double>(d, 0.0));
  std::vector<double> n(C, 0.0);
  for (const auto& s : train.samples()) {
    for (std::size_t f = 0; f < d; ++f) mu[s.label][f] += s.features[f];
    n[s.label] += 1.0;
  }
  for (std::size_t k = 0; k < C; ++k)
    for (auto& v : mu[k]) v /= n[k];
  std::size_t correct = 0;
  for (const auto& s : test.samples()) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < C; ++k) {
      double dist = 0;
      for (std::size_t f = 0; f < d; ++f) dist += (s.features[f] - mu[k][f]) * (s.features[f] - mu[k][f]);
      if (dist < best_d) best_d = dist, best = k;
    }
    correct += best == s.label;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("fedhet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_raw_idx(const fs::path& img, const fs::path& lbl, std::size_t n_img, std::size_t n_lbl,
                   unsigned char pixel) {
  std::ofstream i(img, std::ios::binary);
  write_be32(i, 0x803);
  write_be32(i, static_cast<std::uint32_t>(n_img));
  write_be32(i, 2);
  write_be32(i, 2);
  for (std::size_t k = 0; k < n_img * 4; ++k) i.put(static_cast<char>(pixel));
  std::ofstream l(lbl, std::ios::binary);
  write_be32(l, 0x801);
  write_be32(l, static_cast<std::uint32_t>(n_lbl));
  for (std::size_t k = 0; k < n_lbl; ++k) l.put(static_cast<char>(k % 2));
}

}  // namespace

TEST_CASE("gen_synthetic counts") {
  const auto ds = gen_synthetic(2, 2, 1, 0.1, 7);
  REQUIRE(ds.size() == 2);
  std::vector<std::size_t> labels = ds.labels();
  std::sort(labels.begin(), labels.end());
  CHECK(labels == std::vector<std::size_t>{0, 1});

  const auto big = gen_synthetic(10, 20, 200, 0.5, 1);
  CHECK(big.size() == 2000);
  std::map<std::size_t, int> per;
  for (auto l : big.labels()) ++per[l];
  for (auto& [k, v] : per) CHECK(v == 200);
}

TEST_CASE("gen_synthetic is separable by a held-out linear classifier") {
  const auto ds = gen_synthetic(10, 20, 200, 0.5, 1);
  const auto [train, test] = split_train_test(ds, 0.3, 99);
  CHECK(nearest_centroid_accuracy(train, test) > 0.9);
}

TEST_CASE("gen_synthetic is a pure function of its arguments") {
  CHECK(gen_synthetic(5, 8, 30, 0.7, 3) == gen_synthetic(5, 8, 30, 0.7, 3));
  CHECK(!(gen_synthetic(5, 8, 30, 0.7, 3) == gen_synthetic(5, 8, 30, 0.7, 4)));
}

TEST_CASE("gen_synthetic rejects invalid arguments") {
  CHECK_THROWS_AS(gen_synthetic(1, 2, 1, 0.1, 0), ArgumentError);
  CHECK_THROWS_AS(gen_synthetic(2, 0, 1, 0.1, 0), ArgumentError);
  CHECK_THROWS_AS(gen_synthetic(2, 2, 0, 0.1, 0), ArgumentError);
  CHECK_THROWS_AS(gen_synthetic(2, 2, 1, 0.0, 0), ArgumentError);
  CHECK_THROWS_AS(gen_synthetic(2, 2, 1, -1.0, 0), ArgumentError);
}

TEST_CASE("Dataset validates appended samples") {
  Dataset ds(3, 2);
  CHECK_THROWS_AS(ds.push_back({{1.0}, 0}), ArgumentError);
  CHECK_THROWS_AS(ds.push_back({{1.0, 2.0}, 3}), ArgumentError);
  ds.push_back({{1.0, 2.0}, 2});
  CHECK(ds.size() == 1);
}

TEST_CASE("split_train_test") {
  const auto ds = gen_synthetic(4, 3, 25, 0.5, 2);
  const auto [train, test] = split_train_test(ds, 0.1, 5);
  CHECK(train.size() == 90);
  CHECK(test.size() == 10);

  std::vector<Sample> all(train.samples().begin(), train.samples().end());
  all.insert(all.end(), test.samples().begin(), test.samples().end());
  std::vector<Sample> orig(ds.samples().begin(), ds.samples().end());
  auto key = [](const Sample& a, const Sample& b) {
    return std::tie(a.label, a.features) < std::tie(b.label, b.features);
  };
  std::sort(all.begin(), all.end(), key);
  std::sort(orig.begin(), orig.end(), key);
  CHECK(all == orig);

  const auto again = split_train_test(ds, 0.1, 5);
  CHECK(again.first == train);
  CHECK(again.second == test);
  CHECK_THROWS_AS(split_train_test(ds, 1.5, 5), ArgumentError);
}

TEST_CASE("apply_trigger") {
  const Sample s{{0.2, 0.3}, 0};
  const TriggerPattern p{{{1, 0.9}}, 1};
  const auto t = apply_trigger(s, p);
  CHECK(t.features == std::vector<double>{0.2, 0.9});
  CHECK(t.label == 1);
  CHECK(apply_trigger(t, p) == t);

  const TriggerPattern bad{{{5, 1.0}}, 0};
  CHECK_THROWS_AS(validate_trigger(bad, 2, 2), ArgumentError);
  const TriggerPattern dup{{{0, 1.0}, {0, 2.0}}, 0};
  CHECK_THROWS_AS(validate_trigger(dup, 2, 2), ArgumentError);
  CHECK_THROWS_AS(validate_trigger(TriggerPattern{}, 2, 2), ArgumentError);
}

TEST_CASE("load_idx reads a well-formed pair") {
  const auto dir = temp_dir("idx_ok");
  write_raw_idx(dir / "img", dir / "lbl", 4, 4, 255);
  const auto ds = load_idx(dir / "img", dir / "lbl");
  CHECK(ds.size() == 4);
  CHECK(ds.num_features() == 4);
  CHECK(ds.num_classes() == 2);
  CHECK(ds[0].features[0] == 1.0);
}

TEST_CASE("load_idx rejects malformed input") {
  const auto dir = temp_dir("idx_bad");
  write_raw_idx(dir / "img", dir / "lbl", 4, 3, 10);
  CHECK_THROWS_AS(load_idx(dir / "img", dir / "lbl"), FormatError);

  {
    std::ofstream bad(dir / "bad_magic", std::ios::binary);
    write_be32(bad, 0x1234);
    write_be32(bad, 0);
  }
  write_raw_idx(dir / "img2", dir / "lbl2", 2, 2, 0);
  CHECK_THROWS_AS(load_idx(dir / "bad_magic", dir / "lbl2"), FormatError);

  {
    std::ofstream trunc(dir / "trunc", std::ios::binary);
    write_be32(trunc, 0x803);
    write_be32(trunc, 5);
    write_be32(trunc, 2);
    write_be32(trunc, 2);
    trunc.put(1);
  }
  CHECK_THROWS_AS(load_idx(dir / "trunc", dir / "lbl2"), FormatError);
  CHECK_THROWS(load_idx(dir / "missing", dir / "lbl2"));
}

TEST_CASE("IDX round trip within quantization") {
  const auto dir = temp_dir("idx_rt");
  Dataset ds(3, 6);
  for (std::size_t i = 0; i < 30; ++i) {
    Sample s;
    s.label = i % 3;
    for (std::size_t f = 0; f < 6; ++f) s.features.push_back(static_cast<double>((i * 7 + f * 13) % 256) / 255.0);
    ds.push_back(s);
  }
  write_idx(ds, 2, 3, dir / "img", dir / "lbl");
  const auto back = load_idx(dir / "img", dir / "lbl");
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back[i].label == ds[i].label);
    for (std::size_t f = 0; f < 6; ++f) CHECK(std::abs(back[i].features[f] - ds[i].features[f]) <= 1.0 / 255.0);
  }
}
