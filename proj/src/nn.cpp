#include "fedhet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fedhet/error.hpp"
#include "fedhet/random.hpp"

namespace fedhet::nn {

ModelParams::ModelParams(const std::vector<std::size_t>& arch) {
  if (arch.size() < 2) throw ArgumentError("architecture needs at least input and output sizes");
  for (std::size_t s : arch)
    if (s == 0) throw ArgumentError("architecture has a zero-size layer");
  for (std::size_t i = 0; i + 1 < arch.size(); ++i) {
    DenseLayer l;
    l.in = arch[i];
    l.out = arch[i + 1];
    l.weights.assign(l.in * l.out, 0.0);
    l.bias.assign(l.out, 0.0);
    layers_.push_back(std::move(l));
  }
}

std::vector<std::size_t> ModelParams::architecture() const {
  std::vector<std::size_t> arch;
  if (layers_.empty()) return arch;
  arch.push_back(layers_.front().in);
  for (const auto& l : layers_) arch.push_back(l.out);
  return arch;
}

std::size_t ModelParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

double& ModelParams::at(std::size_t flat) {
  for (auto& l : layers_) {
    if (flat < l.weights.size()) return l.weights[flat];
    flat -= l.weights.size();
    if (flat < l.bias.size()) return l.bias[flat];
    flat -= l.bias.size();
  }
  throw ArgumentError("parameter index out of range");
}

double ModelParams::at(std::size_t flat) const { return const_cast<ModelParams*>(this)->at(flat); }

bool ModelParams::same_shape(const ModelParams& other) const {
  return architecture() == other.architecture();
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each([&](double v) { ok = ok && std::isfinite(v); });
  return ok;
}

void validate(const TrainingConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    throw ConfigError("federation.learning_rate must be finite and non-negative");
  if (cfg.batch_size == 0) throw ConfigError("federation.batch_size must be positive");
}

ModelParams init_mlp(const std::vector<std::size_t>& arch, std::uint64_t seed) {
  ModelParams p(arch);
  Rng rng(seed);
  for (auto& l : p.layers()) {
    const double a = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (auto& w : l.weights) w = rng.uniform(-a, a);
  }
  return p;
}

namespace {

// out = x * W^T + b, with x n x in.
Matrix affine(const DenseLayer& l, const Matrix& x) {
  Matrix z(x.rows, l.out);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.data.data() + r * x.cols;
    double* zr = z.data.data() + r * l.out;
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* w = l.weights.data() + o * l.in;
      double s = l.bias[o];
      for (std::size_t i = 0; i < l.in; ++i) s += w[i] * xr[i];
      zr[o] = s;
    }
  }
  return z;
}

void relu_inplace(Matrix& m) {
  for (auto& v : m.data) v = v > 0.0 ? v : 0.0;
}

void check_input(const ModelParams& p, std::size_t width) {
  if (p.layers().empty()) throw ArgumentError("model has no layers");
  if (width != p.layers().front().in)
    throw ArgumentError("input width " + std::to_string(width) + " does not match model input " +
                        std::to_string(p.layers().front().in));
}

}  // namespace

Matrix forward(const ModelParams& p, const Matrix& x) {
  check_input(p, x.cols);
  Matrix a = x;
  const auto layers = p.layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    a = affine(layers[li], a);
    if (li + 1 < layers.size()) relu_inplace(a);
  }
  return a;
}

std::vector<double> forward(const ModelParams& p, std::span<const double> features) {
  Matrix x(1, features.size());
  std::copy(features.begin(), features.end(), x.data.begin());
  return forward(p, x).data;
}

Matrix to_matrix(std::span<const Sample> samples) {
  if (samples.empty()) return {};
  Matrix x(samples.size(), samples.front().features.size());
  for (std::size_t r = 0; r < samples.size(); ++r) {
    if (samples[r].features.size() != x.cols) throw ArgumentError("ragged batch");
    std::copy(samples[r].features.begin(), samples[r].features.end(), x.data.begin() + r * x.cols);
  }
  return x;
}

namespace {

// Softmax cross-entropy on logits (in place: logits become dLoss/dlogits).
double softmax_xent_backward(Matrix& logits, std::span<const Sample> batch) {
  const double inv_n = 1.0 / static_cast<double>(logits.rows);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    double* z = logits.data.data() + r * logits.cols;
    const std::size_t y = batch[r].label;
    if (y >= logits.cols) throw ArgumentError("label outside model output range");
    const double zmax = *std::max_element(z, z + logits.cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) sum += std::exp(z[c] - zmax);
    const double log_sum = std::log(sum) + zmax;
    total += log_sum - z[y];
    for (std::size_t c = 0; c < logits.cols; ++c) z[c] = std::exp(z[c] - log_sum) * inv_n;
    z[y] -= inv_n;
  }
  return total * inv_n;
}

double softmax_xent(const Matrix& logits, std::span<const Sample> batch) {
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto z = logits.row(r);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    total += std::log(sum) + zmax - z[batch[r].label];
  }
  return total / static_cast<double>(logits.rows);
}

}  // namespace

double loss(const ModelParams& p, std::span<const Sample> batch) {
  if (batch.empty()) throw ArgumentError("loss: empty batch");
  return softmax_xent(forward(p, to_matrix(batch)), batch);
}

LossAndGrads loss_and_grads(const ModelParams& p, std::span<const Sample> batch) {
  if (batch.empty()) throw ArgumentError("loss_and_grads: empty batch");
  const Matrix x = to_matrix(batch);
  check_input(p, x.cols);
  const auto layers = p.layers();
  const std::size_t L = layers.size();

  // acts[0] = input, acts[l] = post-activation output of layer l-1.
  std::vector<Matrix> acts;
  acts.reserve(L + 1);
  acts.push_back(x);
  for (std::size_t li = 0; li < L; ++li) {
    Matrix z = affine(layers[li], acts.back());
    if (li + 1 < L) relu_inplace(z);
    acts.push_back(std::move(z));
  }

  LossAndGrads out;
  out.grads = ModelParams(p.architecture());
  Matrix delta = std::move(acts.back());
  out.loss = softmax_xent_backward(delta, batch);

  auto glayers = out.grads.layers();
  for (std::size_t li = L; li-- > 0;) {
    const DenseLayer& l = layers[li];
    DenseLayer& g = glayers[li];
    const Matrix& a_prev = acts[li];
    for (std::size_t r = 0; r < delta.rows; ++r) {
      const double* d = delta.data.data() + r * l.out;
      const double* a = a_prev.data.data() + r * l.in;
      for (std::size_t o = 0; o < l.out; ++o) {
        g.bias[o] += d[o];
        double* gw = g.weights.data() + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) gw[i] += d[o] * a[i];
      }
    }
    if (li == 0) break;
    Matrix prev(delta.rows, l.in);
    for (std::size_t r = 0; r < delta.rows; ++r) {
      const double* d = delta.data.data() + r * l.out;
      double* pr = prev.data.data() + r * l.in;
      for (std::size_t o = 0; o < l.out; ++o) {
        const double* w = l.weights.data() + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) pr[i] += d[o] * w[i];
      }
      // ReLU derivative: the stored activation is positive iff the unit was active.
      const double* act = a_prev.data.data() + r * l.in;
      for (std::size_t i = 0; i < l.in; ++i)
        if (act[i] <= 0.0) pr[i] = 0.0;
    }
    delta = std::move(prev);
  }
  return out;
}

ModelParams sgd_step(const ModelParams& p, const ModelParams& grads, double lr) {
  ModelParams out = p;
  sgd_step_inplace(out, grads, lr);
  return out;
}

void sgd_step_inplace(ModelParams& p, const ModelParams& grads, double lr) {
  if (!p.same_shape(grads)) throw ArgumentError("sgd_step: gradient shape mismatch");
  auto pl = p.layers();
  auto gl = grads.layers();
  for (std::size_t li = 0; li < pl.size(); ++li) {
    for (std::size_t i = 0; i < pl[li].weights.size(); ++i) pl[li].weights[i] -= lr * gl[li].weights[i];
    for (std::size_t i = 0; i < pl[li].bias.size(); ++i) pl[li].bias[i] -= lr * gl[li].bias[i];
  }
}

double finite_diff_check(const ModelParams& p, std::span<const Sample> batch, double eps,
                         std::size_t max_checked, std::uint64_t seed) {
  return finite_diff_check(p, batch, eps, loss_and_grads(p, batch).grads, max_checked, seed);
}

double finite_diff_check(const ModelParams& p, std::span<const Sample> batch, double eps,
                         const ModelParams& analytic, std::size_t max_checked, std::uint64_t seed) {
  if (!(eps > 0.0)) throw ArgumentError("finite_diff_check: eps must be positive");
  if (!p.same_shape(analytic)) throw ArgumentError("finite_diff_check: gradient shape mismatch");
  const std::size_t n = p.num_parameters();
  std::vector<std::size_t> which(n);
  std::iota(which.begin(), which.end(), std::size_t{0});
  if (n > max_checked) {
    which = shuffled_indices(n, seed);
    which.resize(max_checked);
  }
  ModelParams probe = p;
  double worst = 0.0;
  for (std::size_t idx : which) {
    const double orig = probe.at(idx);
    probe.at(idx) = orig + eps;
    const double up = loss(probe, batch);
    probe.at(idx) = orig - eps;
    const double down = loss(probe, batch);
    probe.at(idx) = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.at(idx);
    worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + eps));
  }
  return worst;
}

std::size_t argmax(std::span<const double> logits) {
  if (logits.empty()) throw ArgumentError("argmax of empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

std::size_t predict(const ModelParams& p, std::span<const double> features) {
  return argmax(forward(p, features));
}

std::vector<double> flatten_last_layer(const ModelParams& p) {
  if (p.layers().empty()) return {};
  const DenseLayer& l = p.layers().back();
  std::vector<double> out(l.weights);
  out.insert(out.end(), l.bias.begin(), l.bias.end());
  return out;
}

std::size_t num_batches(std::size_t num_samples, std::size_t batch_size) {
  if (batch_size == 0) throw ArgumentError("batch_size must be positive");
  return (num_samples + batch_size - 1) / batch_size;
}

TrainStats train(ModelParams& p, std::span<const Sample> data, const TrainingConfig& cfg,
                 const BatchHook& hook) {
  validate(cfg);
  TrainStats stats;
  if (data.empty() || cfg.local_epochs == 0) return stats;
  const std::size_t nb = num_batches(data.size(), cfg.batch_size);
  const std::size_t first = data.size() - (nb - 1) * cfg.batch_size;  // partial batch leads
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> batch;
  for (std::size_t e = 0; e < cfg.local_epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t lo = b == 0 ? 0 : first + (b - 1) * cfg.batch_size;
      const std::size_t hi = first + b * cfg.batch_size;
      batch.clear();
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(data[order[i]]);
      if (hook) hook(e, b, batch);
      const auto lg = loss_and_grads(p, batch);
      sgd_step_inplace(p, lg.grads, cfg.learning_rate);
      ++stats.steps;
      stats.samples_seen += batch.size();
    }
  }
  return stats;
}

void write_params_csv(std::ostream& out, const ModelParams& p) {
  out << "arch";
  for (std::size_t s : p.architecture()) out << ',' << s;
  out << '\n';
  char buf[32];
  p.for_each([&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf << '\n';
  });
}

ModelParams read_params_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("arch,", 0) != 0)
    throw FormatError("params CSV: missing 'arch' header");
  std::vector<std::size_t> arch;
  std::stringstream hs(header.substr(5));
  std::string cell;
  while (std::getline(hs, cell, ',')) arch.push_back(std::stoul(cell));
  ModelParams p(arch);
  std::size_t count = 0;
  std::string line;
  const std::size_t n = p.num_parameters();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (count >= n) throw FormatError("params CSV: too many values");
    p.at(count++) = std::stod(line);
  }
  if (count != n) throw FormatError("params CSV: expected " + std::to_string(n) + " values");
  return p;
}

}  // namespace fedhet::nn
