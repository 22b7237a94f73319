#ifndef HEMB_ENCODER_HPP_
#define HEMB_ENCODER_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hemb/losses.hpp"
#include "hemb/rng.hpp"

namespace hemb {

struct LayerShape {
  std::size_t rows = 0;  // output width
  std::size_t cols = 0;  // input width

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

// Fully connected encoder parameters stored in one flat buffer: for each layer
// the row-major weight matrix followed by its bias. The last layer is d + 1
// wide; its final row produces the log-variance.
class EncoderParams {
 public:
  EncoderParams() = default;
  explicit EncoderParams(std::vector<LayerShape> layers);

  // input -> hidden... -> embedding_dim + 1, zero-initialized.
  static EncoderParams make(std::size_t input_dim, std::span<const std::size_t> hidden,
                            std::size_t embedding_dim);

  const std::vector<LayerShape>& layers() const { return layers_; }
  std::size_t input_dim() const { return layers_.front().cols; }
  std::size_t embedding_dim() const { return layers_.back().rows - 1; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  double& weight(std::size_t layer, std::size_t row, std::size_t col) {
    return values_[offsets_[layer] + row * layers_[layer].cols + col];
  }
  double weight(std::size_t layer, std::size_t row, std::size_t col) const {
    return values_[offsets_[layer] + row * layers_[layer].cols + col];
  }
  double& bias(std::size_t layer, std::size_t row) {
    return values_[offsets_[layer] + layers_[layer].rows * layers_[layer].cols + row];
  }
  double bias(std::size_t layer, std::size_t row) const {
    return values_[offsets_[layer] + layers_[layer].rows * layers_[layer].cols + row];
  }
  std::size_t offset(std::size_t layer) const { return offsets_[layer]; }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;

 private:
  std::vector<LayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
void initialize(EncoderParams& params, Rng& rng);

// Per-layer inputs kept for the backward pass.
struct ForwardCache {
  std::vector<Vector> inputs;  // inputs[l] feeds layer l (post-ReLU for l > 0)
  double raw_log_variance = 0.0;
};

// ReLU hidden layers, linear head. The embedding is not normalized; the last
// output is clamped to `bounds` and returned as the log-variance.
EmbeddingOutput forward(const EncoderParams& params, std::span<const double> features,
                        const LogVarianceBounds& bounds = {}, ForwardCache* cache = nullptr);

// Accumulates dJ/dW into grad_params given dJ/d(embedding) and dJ/ds for one
// sample. grad_log_variance is expected to be already projected at the clamp.
void backward(const EncoderParams& params, const ForwardCache& cache,
              std::span<const double> grad_embedding, double grad_log_variance,
              std::span<double> grad_params);

// Classical momentum: v <- momentum * v + g; p <- p - lr * v.
void sgd_momentum_step(std::span<double> params, std::span<const double> gradients,
                       std::span<double> velocity, double lr, double momentum);

struct LrSchedule {
  enum class Kind { kConstant, kExponential, kLinear };

  Kind kind = Kind::kConstant;
  double initial = 1e-3;
  double final_value = 1e-3;  // target of exponential decay (unused by kLinear)
  double decay_start = 0.0;
  double decay_end = 1.0;

  // initial until decay_start, log-linear to final_value at decay_end, held after.
  static LrSchedule exponential(double initial, double decay_start, double final_value,
                                double decay_end);
  // initial until decay_start, linear to zero at decay_end, zero after.
  static LrSchedule linear_to_zero(double initial, double decay_start, double decay_end);
  static LrSchedule constant(double value);

  void validate() const;
};

double lr_schedule(const LrSchedule& schedule, double t);

std::string serialize_params(const EncoderParams& params);
EncoderParams deserialize_params(std::string bytes);
void save_params(const EncoderParams& params, const std::string& path);
EncoderParams load_params(const std::string& path);

}  // namespace hemb

#endif  // HEMB_ENCODER_HPP_
