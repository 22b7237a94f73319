#include "hemb/trainer.hpp"

#include <charconv>
#include <cmath>

#include "compensated_sum.hpp"
#include "hemb/binary_io.hpp"
#include "hemb/error.hpp"
#include "hemb/mining.hpp"
#include "hemb/sampler.hpp"

namespace hemb {

namespace {

constexpr char kStateMagic[] = "HSTA";
constexpr std::uint32_t kStateVersion = 1;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::size_t batch_size(const SyntheticDataset& data, const TrainConfig& config) {
  if (config.sampling == BatchSampling::kPK) {
    return config.classes_per_batch * config.samples_per_class;
  }
  return data.num_classes * config.samples_per_class;
}

std::vector<EmbeddingOutput> forward_batch(const EncoderParams& params,
                                           std::span<const Vector> features,
                                           const TrainConfig& config,
                                           std::vector<ForwardCache>* caches) {
  std::vector<EmbeddingOutput> outputs;
  outputs.reserve(features.size());
  if (caches != nullptr) caches->assign(features.size(), ForwardCache());
  for (std::size_t i = 0; i < features.size(); ++i) {
    outputs.push_back(forward(params, features[i], config.bounds,
                              caches != nullptr ? &(*caches)[i] : nullptr));
    if (config.freeze_log_variance) outputs.back().log_variance = 0.0;
  }
  return outputs;
}

}  // namespace

void TrainConfig::validate() const {
  if (embedding_dim == 0) fail(ErrorKind::kConfig, "embedding_dim must be positive");
  for (std::size_t h : hidden) {
    if (h == 0) fail(ErrorKind::kConfig, "hidden layer widths must be positive");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    fail(ErrorKind::kConfig, "weight_decay (lambda) must be >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorKind::kConfig, "momentum must lie in [0, 1)");
  if (!(mining_margin >= 0.0)) fail(ErrorKind::kConfig, "mining margin must be >= 0");
  if (samples_per_class < 2) {
    fail(ErrorKind::kConfig, "samples_per_class must be >= 2 so every anchor has a positive");
  }
  if (sampling == BatchSampling::kPK && classes_per_batch < 2) {
    fail(ErrorKind::kConfig, "classes_per_batch must be >= 2");
  }
  if (!(bounds.min < bounds.max)) fail(ErrorKind::kConfig, "log-variance bounds must satisfy min < max");
  lr.validate();
}

TrainState initial_state(std::size_t input_dim, const TrainConfig& config) {
  config.validate();
  TrainState state;
  state.params = EncoderParams::make(input_dim, config.hidden, config.embedding_dim);
  Rng rng = Rng::derive(config.seed, 0xE1C0DE);
  initialize(state.params, rng);
  // s head bias starts at zero (sigma^2 = 1).
  const std::size_t head = state.params.layers().size() - 1;
  state.params.bias(head, config.embedding_dim) = 0.0;
  state.velocity.assign(state.params.size(), 0.0);
  return state;
}

std::size_t batches_per_epoch(const SyntheticDataset& data, const TrainConfig& config) {
  const std::size_t n = data.indices_of(Split::kTrain).size();
  const std::size_t b = batch_size(data, config);
  return b == 0 ? 1 : std::max<std::size_t>(1, (n + b - 1) / b);
}

namespace {

BatchObjective objective_from_outputs(const EncoderParams& params,
                                      std::span<const EmbeddingOutput> outputs,
                                      std::span<const ForwardCache> caches,
                                      std::span<const Triplet> triplets, const TrainConfig& config,
                                      bool with_gradients) {
  const LossGradients lg = loss_gradients(outputs, triplets, config.margin_mode, config.loss,
                                          config.weight_decay, params.values(), config.bounds,
                                          with_gradients);
  BatchObjective out;
  out.terms = lg.terms;
  if (!with_gradients) return out;
  out.grad = lg.params;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const double gs = config.freeze_log_variance ? 0.0 : lg.log_variance[i];
    backward(params, caches[i], lg.embedding[i], gs, out.grad);
  }
  return out;
}

}  // namespace

BatchObjective batch_objective(const EncoderParams& params, std::span<const Vector> features,
                               std::span<const Triplet> triplets, const TrainConfig& config,
                               bool with_gradients) {
  std::vector<ForwardCache> caches;
  const auto outputs = forward_batch(params, features, config, with_gradients ? &caches : nullptr);
  return objective_from_outputs(params, outputs, caches, triplets, config, with_gradients);
}

std::vector<TraceRow> train_steps(TrainState& state, const SyntheticDataset& data,
                                  const TrainConfig& config, std::size_t until) {
  config.validate();
  if (state.params.input_dim() != data.feature_dim) {
    fail(ErrorKind::kShape, "model expects " + std::to_string(state.params.input_dim()) +
                                " features but dataset has " + std::to_string(data.feature_dim));
  }
  const std::vector<std::size_t> train_idx = data.indices_of(Split::kTrain);
  if (train_idx.empty()) fail(ErrorKind::kCapacity, "dataset has no train split");
  Labels train_labels;
  for (std::size_t i : train_idx) train_labels.push_back(data.noisy_labels[i]);
  const double epoch_len = static_cast<double>(batches_per_epoch(data, config));

  std::vector<TraceRow> trace;
  for (; state.iteration < until; ++state.iteration) {
    const std::size_t t = state.iteration;
    Rng rng = Rng::derive(config.seed, t);
    const BatchPlan plan =
        config.sampling == BatchSampling::kPK
            ? pk_batch(train_labels, config.classes_per_batch, config.samples_per_class, rng)
            : class_balanced_batch(train_labels, config.samples_per_class, rng);

    std::vector<Vector> features;
    features.reserve(plan.indices.size());
    for (std::size_t pos : plan.indices) {
      const auto f = data.feature(train_idx[pos]);
      features.emplace_back(f.begin(), f.end());
    }
    std::vector<ForwardCache> caches;
    const auto outputs = forward_batch(state.params, features, config, &caches);
    std::vector<Vector> embeddings;
    embeddings.reserve(outputs.size());
    detail::CompensatedSum s_sum;
    for (const auto& o : outputs) {
      for (double x : o.embedding) {
        if (!std::isfinite(x)) {
          fail(ErrorKind::kNumerical, "non-finite embedding at iteration " + std::to_string(t));
        }
      }
      embeddings.push_back(o.embedding);
      s_sum.add(o.log_variance);
    }
    const double s_mean = s_sum.value() / static_cast<double>(outputs.size());
    const DistanceMatrix dist = pairwise_distances(embeddings);
    const MiningResult mined = config.mining == MiningStrategy::kSemiHard
                                   ? semi_hard_triplets(dist, plan.labels, config.mining_margin)
                                   : batch_hard_triplets(dist, plan.labels);

    BatchObjective objective =
        objective_from_outputs(state.params, outputs, caches, mined.triplets, config, true);
    if (!std::isfinite(objective.terms.total)) {
      fail(ErrorKind::kNumerical, "non-finite loss at iteration " + std::to_string(t));
    }
    const double time = config.lr_in_epochs ? std::floor(static_cast<double>(t) / epoch_len)
                                            : static_cast<double>(t);
    const double lr = lr_schedule(config.lr, time);
    try {
      sgd_momentum_step(state.params.values(), objective.grad, state.velocity, lr, config.momentum);
    } catch (const Error& e) {
      fail(e.kind(), std::string(e.what()) + " at iteration " + std::to_string(t));
    }

    TraceRow row;
    row.iteration = t;
    row.lr = lr;
    row.terms = objective.terms;
    row.triplets = mined.triplets.size();
    row.mean_log_variance = s_mean;
    trace.push_back(row);
  }
  return trace;
}

TrainResult train(const SyntheticDataset& data, const TrainConfig& config) {
  TrainState state = initial_state(data.feature_dim, config);
  TrainResult result;
  result.trace = train_steps(state, data, config, config.iterations);
  result.params = std::move(state.params);
  return result;
}

std::vector<EmbeddingOutput> embed(const EncoderParams& params, const SyntheticDataset& data,
                                   std::span<const std::size_t> indices,
                                   const LogVarianceBounds& bounds) {
  std::vector<EmbeddingOutput> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(forward(params, data.feature(i), bounds));
  return out;
}

std::string trace_to_csv(std::span<const TraceRow> trace) {
  std::string out = "iteration,lr,total,data_term,log_term,decay_term,triplets,mean_log_variance\n";
  for (const TraceRow& row : trace) {
    out += std::to_string(row.iteration) + ',' + format_double(row.lr) + ',' +
           format_double(row.terms.total) + ',' + format_double(row.terms.data_term) + ',' +
           format_double(row.terms.log_term) + ',' + format_double(row.terms.decay_term) + ',' +
           std::to_string(row.triplets) + ',' + format_double(row.mean_log_variance) + '\n';
  }
  return out;
}

void save_train_state(const TrainState& state, const std::string& path) {
  BinaryWriter w;
  w.magic(kStateMagic);
  w.u32(kStateVersion);
  w.u64(state.iteration);
  w.u64(state.velocity.size());
  for (double v : state.velocity) w.f64(v);
  write_file(path, w.finish());
}

void load_train_state(TrainState& state, const std::string& path) {
  BinaryReader r(read_file(path), "training state file");
  r.expect_magic(kStateMagic);
  const std::uint32_t version = r.u32();
  if (version != kStateVersion) r.corrupt("unsupported state version " + std::to_string(version));
  const std::uint64_t iteration = r.u64();
  const std::uint64_t count = r.u64();
  if (count != state.params.size() || r.remaining() != count * 8) {
    r.corrupt("velocity size " + std::to_string(count) + " does not match model with " +
              std::to_string(state.params.size()) + " parameters");
  }
  state.velocity.assign(count, 0.0);
  for (double& v : state.velocity) v = r.f64();
  r.expect_end();
  state.iteration = iteration;
}

}  // namespace hemb
