#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedhet/datagen.hpp"

namespace fedhet::nn {

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

// Fully connected layer computing W x + b; W is out x in, row-major.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

// Parameters of a ReLU MLP. Also used as the gradient container.
class ModelParams {
 public:
  ModelParams() = default;
  // Zero-initialized parameters for the given layer sizes.
  explicit ModelParams(const std::vector<std::size_t>& arch);

  std::vector<std::size_t> architecture() const;
  std::span<DenseLayer> layers() { return layers_; }
  std::span<const DenseLayer> layers() const { return layers_; }
  std::size_t num_parameters() const;

  // Flat visit of every parameter in layer order, weights before bias.
  template <typename F>
  void for_each(F&& f) {
    for (auto& l : layers_) {
      for (auto& w : l.weights) f(w);
      for (auto& b : l.bias) f(b);
    }
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& l : layers_) {
      for (double w : l.weights) f(w);
      for (double b : l.bias) f(b);
    }
  }

  double& at(std::size_t flat_index);
  double at(std::size_t flat_index) const;

  bool same_shape(const ModelParams& other) const;
  bool all_finite() const;

  bool operator==(const ModelParams&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

struct TrainingConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::size_t local_epochs = 1;
  std::uint64_t seed = 0;
};

void validate(const TrainingConfig& cfg);

// Glorot-uniform weights, zero biases.
ModelParams init_mlp(const std::vector<std::size_t>& arch, std::uint64_t seed);

// Affine + ReLU on hidden layers, affine only on the output layer.
Matrix forward(const ModelParams& p, const Matrix& x);
std::vector<double> forward(const ModelParams& p, std::span<const double> features);

Matrix to_matrix(std::span<const Sample> samples);

struct LossAndGrads {
  double loss = 0.0;
  ModelParams grads;
};

// Mean softmax cross-entropy over the batch and its analytic gradient.
LossAndGrads loss_and_grads(const ModelParams& p, std::span<const Sample> batch);
double loss(const ModelParams& p, std::span<const Sample> batch);

ModelParams sgd_step(const ModelParams& p, const ModelParams& grads, double lr);
// In-place variant used by the training loops.
void sgd_step_inplace(ModelParams& p, const ModelParams& grads, double lr);

// Max relative error |analytic - central difference| / (|analytic| + eps)
// over up to max_checked parameters (all of them when the model is small
// enough, otherwise a seeded sample).
double finite_diff_check(const ModelParams& p, std::span<const Sample> batch, double eps,
                         std::size_t max_checked = 256, std::uint64_t seed = 0);
// Same, but against caller-supplied gradients.
double finite_diff_check(const ModelParams& p, std::span<const Sample> batch, double eps,
                         const ModelParams& analytic, std::size_t max_checked = 256,
                         std::uint64_t seed = 0);

// Index of the largest logit; ties resolve to the smaller index.
std::size_t argmax(std::span<const double> logits);
std::size_t predict(const ModelParams& p, std::span<const double> features);

// Final layer weights (row-major) followed by its bias.
std::vector<double> flatten_last_layer(const ModelParams& p);

// Called before each mini-batch step with (epoch, batch index, batch); may
// modify the batch.
using BatchHook = std::function<void(std::size_t, std::size_t, std::vector<Sample>&)>;

struct TrainStats {
  std::size_t steps = 0;
  std::size_t samples_seen = 0;
};

// Mini-batch SGD; sample order reshuffled each epoch from cfg.seed. When the
// data does not divide evenly, the short batch comes first so the final
// batch is always full.
TrainStats train(ModelParams& p, std::span<const Sample> data, const TrainingConfig& cfg,
                 const BatchHook& hook = {});

std::size_t num_batches(std::size_t num_samples, std::size_t batch_size);

// Header line "arch,<n0>,<n1>,..." followed by one value per line.
void write_params_csv(std::ostream& out, const ModelParams& p);
ModelParams read_params_csv(std::istream& in);

}  // namespace fedhet::nn
