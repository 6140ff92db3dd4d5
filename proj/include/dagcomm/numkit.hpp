#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dagcomm/errors.hpp"
#include "dagcomm/rng.hpp"

namespace dagcomm::numkit {

using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return data.size(); }
};

enum class Act : uint8_t { Tanh = 0, Identity = 1, Softmax = 2 };

struct Layer {
  Mat w;  // out x in
  Vec b;  // out
};

// Feedforward net: tanh on hidden layers, configurable output activation.
struct MlpParams {
  std::vector<Layer> layers;
  Act hidden = Act::Tanh;
  Act output = Act::Identity;

  // widths = {in, h1, ..., out}; weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  static MlpParams create(const std::vector<int>& widths, Act output_act, Rng& rng,
                          Act hidden_act = Act::Tanh);
  static MlpParams zeros_like(const MlpParams& other);

  int in_width() const { return layers.empty() ? 0 : layers.front().w.cols; }
  int out_width() const { return layers.empty() ? 0 : layers.back().w.rows; }
  size_t param_count() const;

  void fill(double v);
  void add_scaled(const MlpParams& other, double scale);  // this += scale * other
  double sq_norm() const;
  void scale(double s);
};

// Layer activations retained by a forward pass; consumed by the matching backward.
struct MlpCache {
  Vec input;
  std::vector<Vec> post;  // activation outputs per layer; post.back() is the net output
};

// Returns the output; fills `cache` when non-null. Throws DimensionError on a
// width mismatch and NumericError if the output is not finite.
Vec mlp_forward(const MlpParams& params, const Vec& input, MlpCache* cache = nullptr);

// Accumulates parameter gradients into `grads` (must shape-mirror `params`)
// and returns dL/d(input). `upstream` is dL/d(output).
Vec mlp_backward(const MlpParams& params, const MlpCache& cache, const Vec& upstream,
                 MlpParams& grads);

// Numerically stable softmax; output sums to 1. Empty input is a contract error.
Vec softmax(const Vec& v);

// Max relative error between analytic gradients and central finite differences
// of a fixed scalar readout of the net output. `corrupt`, when given, mutates
// the analytic gradients before comparison (fault-injection hook for tests).
double grad_check(const MlpParams& params, const Vec& input, double eps,
                  const std::function<void(MlpParams&)>& corrupt = nullptr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool plain_sgd = false;  // p -= lr * g, no moments
};

// Per-parameter moment accumulators mirroring one MlpParams.
struct OptimState {
  AdamConfig cfg;
  std::vector<Layer> m;
  std::vector<Layer> v;
  long step = 0;

  static OptimState create(const MlpParams& params, AdamConfig cfg = {});
};

// One optimizer step. Throws NumericError naming the layer if grads are not finite.
void optim_step(MlpParams& params, const MlpParams& grads, OptimState& state);

// Same optimizer over a flat parameter vector (topology learner etc.).
struct FlatOptimState {
  AdamConfig cfg;
  Vec m;
  Vec v;
  long step = 0;

  static FlatOptimState create(size_t n, AdamConfig cfg = {});
};

void optim_step_flat(Vec& params, const Vec& grads, FlatOptimState& state);

// ---------------------------------------------------------------------------
// Checkpoint file: magic "DAGCOMM1", then named blocks. Block kinds: MLP
// (per-layer shape headers + row-major little-endian f64), raw matrix list,
// and a text blob for run metadata. All multi-byte fields little-endian.

class CheckpointWriter {
 public:
  void add_mlp(const std::string& name, const MlpParams& params);
  void add_mats(const std::string& name, const std::vector<Mat>& mats);
  void add_text(const std::string& name, const std::string& text);
  void save(const std::string& path) const;

 private:
  struct Block {
    std::string name;
    uint8_t kind;
    MlpParams mlp;
    std::vector<Mat> mats;
    std::string text;
  };
  std::vector<Block> blocks_;
};

class CheckpointReader {
 public:
  // Throws ConfigError on bad magic/truncation/shape mismatch.
  explicit CheckpointReader(const std::string& path);

  bool has(const std::string& name) const;
  const MlpParams& mlp(const std::string& name) const;
  const std::vector<Mat>& mats(const std::string& name) const;
  const std::string& text(const std::string& name) const;

 private:
  struct Entry {
    uint8_t kind;
    MlpParams mlp;
    std::vector<Mat> mats;
    std::string text;
  };
  std::vector<std::pair<std::string, Entry>> entries_;
  const Entry& find(const std::string& name, uint8_t kind) const;
};

}  // namespace dagcomm::numkit
