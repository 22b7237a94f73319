#include "hemb/encoder.hpp"

#include <cmath>
#include <string>

#include "hemb/binary_io.hpp"
#include "hemb/error.hpp"

namespace hemb {

namespace {

constexpr char kModelMagic[] = "HEMB";
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

EncoderParams::EncoderParams(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) fail(ErrorKind::kConfig, "encoder needs at least one layer");
  std::size_t total = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerShape& shape = layers_[l];
    if (shape.rows == 0 || shape.cols == 0) {
      fail(ErrorKind::kConfig, "encoder layer " + std::to_string(l) + " has a zero dimension");
    }
    if (l > 0 && shape.cols != layers_[l - 1].rows) {
      fail(ErrorKind::kShape, "encoder layer " + std::to_string(l) + " expects " +
                                  std::to_string(shape.cols) + " inputs but previous layer emits " +
                                  std::to_string(layers_[l - 1].rows));
    }
    offsets_.push_back(total);
    total += shape.rows * shape.cols + shape.rows;
  }
  if (layers_.back().rows < 2) {
    fail(ErrorKind::kConfig, "encoder head must emit at least one embedding dim plus log-variance");
  }
  values_.assign(total, 0.0);
}

EncoderParams EncoderParams::make(std::size_t input_dim, std::span<const std::size_t> hidden,
                                  std::size_t embedding_dim) {
  std::vector<LayerShape> layers;
  std::size_t in = input_dim;
  for (std::size_t width : hidden) {
    layers.push_back({width, in});
    in = width;
  }
  layers.push_back({embedding_dim + 1, in});
  return EncoderParams(std::move(layers));
}

void initialize(EncoderParams& params, Rng& rng) {
  for (std::size_t l = 0; l < params.layers().size(); ++l) {
    const LayerShape shape = params.layers()[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(shape.rows + shape.cols));
    for (std::size_t r = 0; r < shape.rows; ++r) {
      for (std::size_t c = 0; c < shape.cols; ++c) {
        params.weight(l, r, c) = limit * (2.0 * rng.uniform01() - 1.0);
      }
      params.bias(l, r) = 0.0;
    }
  }
}

EmbeddingOutput forward(const EncoderParams& params, std::span<const double> features,
                        const LogVarianceBounds& bounds, ForwardCache* cache) {
  if (features.size() != params.input_dim()) {
    fail(ErrorKind::kShape, "encoder expects " + std::to_string(params.input_dim()) +
                                " features, got " + std::to_string(features.size()));
  }
  const std::size_t depth = params.layers().size();
  if (cache != nullptr) cache->inputs.assign(depth, Vector());

  Vector current(features.begin(), features.end());
  for (std::size_t l = 0; l < depth; ++l) {
    const LayerShape shape = params.layers()[l];
    Vector next(shape.rows);
    for (std::size_t r = 0; r < shape.rows; ++r) {
      double acc = params.bias(l, r);
      for (std::size_t c = 0; c < shape.cols; ++c) acc += params.weight(l, r, c) * current[c];
      next[r] = (l + 1 < depth) ? std::max(acc, 0.0) : acc;
    }
    if (cache != nullptr) cache->inputs[l] = std::move(current);
    current = std::move(next);
  }

  EmbeddingOutput out;
  const double raw = current.back();
  current.pop_back();
  out.embedding = std::move(current);
  out.log_variance = bounds.clamp(raw);
  if (cache != nullptr) cache->raw_log_variance = raw;
  return out;
}

void backward(const EncoderParams& params, const ForwardCache& cache,
              std::span<const double> grad_embedding, double grad_log_variance,
              std::span<double> grad_params) {
  const std::size_t depth = params.layers().size();
  if (grad_embedding.size() != params.embedding_dim() || grad_params.size() != params.size() ||
      cache.inputs.size() != depth) {
    fail(ErrorKind::kShape, "encoder backward: gradient shapes do not match parameters");
  }
  Vector delta(grad_embedding.begin(), grad_embedding.end());
  delta.push_back(grad_log_variance);

  for (std::size_t l = depth; l-- > 0;) {
    const LayerShape shape = params.layers()[l];
    const Vector& input = cache.inputs[l];
    const std::size_t w0 = params.offset(l);
    const std::size_t b0 = w0 + shape.rows * shape.cols;
    for (std::size_t r = 0; r < shape.rows; ++r) {
      if (delta[r] == 0.0) continue;
      for (std::size_t c = 0; c < shape.cols; ++c) grad_params[w0 + r * shape.cols + c] += delta[r] * input[c];
      grad_params[b0 + r] += delta[r];
    }
    if (l == 0) break;
    Vector prev(shape.cols, 0.0);
    for (std::size_t r = 0; r < shape.rows; ++r) {
      if (delta[r] == 0.0) continue;
      for (std::size_t c = 0; c < shape.cols; ++c) prev[c] += params.weight(l, r, c) * delta[r];
    }
    // ReLU gate: input[c] is the post-activation of layer l - 1.
    for (std::size_t c = 0; c < shape.cols; ++c) {
      if (input[c] <= 0.0) prev[c] = 0.0;
    }
    delta = std::move(prev);
  }
}

void sgd_momentum_step(std::span<double> params, std::span<const double> gradients,
                       std::span<double> velocity, double lr, double momentum) {
  if (params.size() != gradients.size() || params.size() != velocity.size()) {
    fail(ErrorKind::kShape, "sgd_momentum_step: parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    if (!std::isfinite(gradients[i])) {
      fail(ErrorKind::kNumerical, "non-finite gradient at parameter " + std::to_string(i) +
                                      " (value " + std::to_string(gradients[i]) + ")");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + gradients[i];
    params[i] -= lr * velocity[i];
    if (!std::isfinite(params[i])) {
      fail(ErrorKind::kNumerical, "parameter " + std::to_string(i) + " became non-finite");
    }
  }
}

LrSchedule LrSchedule::exponential(double initial, double decay_start, double final_value,
                                   double decay_end) {
  LrSchedule s{Kind::kExponential, initial, final_value, decay_start, decay_end};
  s.validate();
  return s;
}

LrSchedule LrSchedule::linear_to_zero(double initial, double decay_start, double decay_end) {
  LrSchedule s{Kind::kLinear, initial, 0.0, decay_start, decay_end};
  s.validate();
  return s;
}

LrSchedule LrSchedule::constant(double value) {
  LrSchedule s{Kind::kConstant, value, value, 0.0, 1.0};
  s.validate();
  return s;
}

void LrSchedule::validate() const {
  if (!(initial > 0.0) || !std::isfinite(initial)) {
    fail(ErrorKind::kConfig, "learning rate must be positive and finite");
  }
  if (kind == Kind::kConstant) return;
  if (!(decay_end > decay_start)) {
    fail(ErrorKind::kConfig, "learning-rate decay end must come after decay start");
  }
  if (decay_start < 0.0) fail(ErrorKind::kConfig, "learning-rate decay start must be >= 0");
  if (kind == Kind::kExponential && (!(final_value > 0.0) || !std::isfinite(final_value))) {
    fail(ErrorKind::kConfig, "exponential decay target must be positive");
  }
}

double lr_schedule(const LrSchedule& s, double t) {
  if (t < 0.0) fail(ErrorKind::kConfig, "learning-rate schedule queried at negative time");
  switch (s.kind) {
    case LrSchedule::Kind::kConstant:
      return s.initial;
    case LrSchedule::Kind::kExponential: {
      if (t <= s.decay_start) return s.initial;
      if (t >= s.decay_end) return s.final_value;
      const double frac = (t - s.decay_start) / (s.decay_end - s.decay_start);
      return s.initial * std::pow(s.final_value / s.initial, frac);
    }
    case LrSchedule::Kind::kLinear: {
      if (t <= s.decay_start) return s.initial;
      if (t >= s.decay_end) return 0.0;
      const double frac = (s.decay_end - t) / (s.decay_end - s.decay_start);
      return s.initial * frac;
    }
  }
  return s.initial;
}

std::string serialize_params(const EncoderParams& params) {
  BinaryWriter w;
  w.magic(kModelMagic);
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(params.layers().size()));
  for (const LayerShape& shape : params.layers()) {
    w.u32(static_cast<std::uint32_t>(shape.rows));
    w.u32(static_cast<std::uint32_t>(shape.cols));
  }
  for (double v : params.values()) w.f64(v);
  return w.finish();
}

EncoderParams deserialize_params(std::string bytes) {
  BinaryReader r(std::move(bytes), "model file");
  r.expect_magic(kModelMagic);
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) r.corrupt("unsupported model version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 1024) r.corrupt("implausible layer count " + std::to_string(count));
  std::vector<LayerShape> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    LayerShape shape;
    shape.rows = r.u32();
    shape.cols = r.u32();
    layers.push_back(shape);
  }
  EncoderParams params = [&] {
    try {
      return EncoderParams(layers);
    } catch (const Error& e) {
      r.corrupt(std::string("invalid layer layout: ") + e.what());
    }
  }();
  if (r.remaining() != params.size() * 8) {
    r.corrupt("expected " + std::to_string(params.size() * 8) + " parameter bytes, found " +
              std::to_string(r.remaining()));
  }
  for (double& v : params.values()) v = r.f64();
  r.expect_end();
  return params;
}

void save_params(const EncoderParams& params, const std::string& path) {
  write_file(path, serialize_params(params));
}

EncoderParams load_params(const std::string& path) { return deserialize_params(read_file(path)); }

}  // namespace hemb
