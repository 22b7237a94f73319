#ifndef HEMB_TRAINER_HPP_
#define HEMB_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hemb/data.hpp"
#include "hemb/encoder.hpp"
#include "hemb/losses.hpp"

namespace hemb {

enum class MiningStrategy { kSemiHard, kBatchHard };
enum class BatchSampling { kPK, kClassBalanced };

struct TrainConfig {
  std::size_t embedding_dim = 8;
  std::vector<std::size_t> hidden = {64};
  MarginMode margin_mode = MarginMode::soft_plus();
  double mining_margin = 3.0;  // semi-hard band width
  double weight_decay = 1e-3;  // lambda
  LrSchedule lr = LrSchedule::exponential(3e-3, 1000.0, 1e-4, 2000.0);
  bool lr_in_epochs = false;   // schedule time measured in epochs instead of iterations
  double momentum = 0.9;
  BatchSampling sampling = BatchSampling::kClassBalanced;
  std::size_t classes_per_batch = 10;  // P (pk sampling only)
  std::size_t samples_per_class = 10;  // K
  MiningStrategy mining = MiningStrategy::kSemiHard;
  LossKind loss = LossKind::kHetero;
  std::size_t iterations = 2000;
  std::uint64_t seed = 0;
  LogVarianceBounds bounds;
  bool freeze_log_variance = false;  // ablation: s forced to 0

  void validate() const;
};

struct TraceRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  LossTerms terms;
  std::size_t triplets = 0;
  double mean_log_variance = 0.0;
};

struct TrainState {
  EncoderParams params;
  Vector velocity;
  std::size_t iteration = 0;  // next iteration to run
};

TrainState initial_state(std::size_t input_dim, const TrainConfig& config);

// Runs iterations [state.iteration, until) on the train split with observed
// labels. Iteration t draws its batch from a stream derived from (seed, t), so
// a run split at any point reproduces the unbroken run.
std::vector<TraceRow> train_steps(TrainState& state, const SyntheticDataset& data,
                                  const TrainConfig& config, std::size_t until);

struct TrainResult {
  EncoderParams params;
  std::vector<TraceRow> trace;
};

TrainResult train(const SyntheticDataset& data, const TrainConfig& config);

// ceil(train split size / batch size).
std::size_t batches_per_epoch(const SyntheticDataset& data, const TrainConfig& config);

struct BatchObjective {
  LossTerms terms;
  Vector grad;  // dJ/dW over the flat parameter buffer
};

// Full batch objective for fixed triplets, with gradients through the encoder.
BatchObjective batch_objective(const EncoderParams& params, std::span<const Vector> features,
                               std::span<const Triplet> triplets, const TrainConfig& config,
                               bool with_gradients = true);

std::vector<EmbeddingOutput> embed(const EncoderParams& params, const SyntheticDataset& data,
                                   std::span<const std::size_t> indices,
                                   const LogVarianceBounds& bounds);

std::string trace_to_csv(std::span<const TraceRow> trace);

void save_train_state(const TrainState& state, const std::string& path);
// Loads velocity and iteration into `state`; params come from the model file.
void load_train_state(TrainState& state, const std::string& path);

}  // namespace hemb

#endif  // HEMB_TRAINER_HPP_
