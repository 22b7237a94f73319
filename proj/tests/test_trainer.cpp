#include <doctest.h>

#include <cmath>
#include <vector>

#include "hemb/trainer.hpp"
#include "support.hpp"

using namespace hemb;

namespace {

GeneratorConfig two_blobs(std::uint64_t seed) {
  GeneratorConfig c;
  c.train_size = 400;
  c.query_size = 0;
  c.gallery_size = 200;
  c.feature_dim = 2;
  c.num_classes = 2;
  c.separation = 2.0;
  c.base_noise = 0.6;
  c.hetero_fraction = 0.0;
  c.flip_rate = 0.0;
  c.seed = seed;
  return c;
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig t;
  t.embedding_dim = 2;
  t.hidden = {8};
  t.samples_per_class = 8;
  t.iterations = 200;
  t.lr = LrSchedule::constant(3e-3);
  t.seed = seed;
  return t;
}

}  // namespace

TEST_CASE("frozen log-variance gives 1.5x the vanilla objective") {
  Rng rng(71);
  TrainConfig config = small_config(1);
  config.weight_decay = 0.0;
  config.freeze_log_variance = true;
  TrainState state = initial_state(3, config);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vector> features;
    for (int i = 0; i < 6; ++i) features.push_back(test::random_vector(rng, 3, 2.0));
    const std::vector<Triplet> triplets = {{0, 1, 2}, {3, 4, 5}, {1, 0, 5}, {4, 3, 0}};
    config.loss = LossKind::kHetero;
    const auto hetero = batch_objective(state.params, features, triplets, config, false);
    config.loss = LossKind::kVanilla;
    const auto vanilla = batch_objective(state.params, features, triplets, config, false);
    CHECK(hetero.terms.log_term == 0.0);
    CHECK(test::ulp_distance(hetero.terms.total, 1.5 * vanilla.terms.total) <= 1);
    initialize(state.params, rng);
  }
}

TEST_CASE("decay gradient is 2 lambda W") {
  TrainConfig config = small_config(2);
  config.weight_decay = 0.25;
  const TrainState state = initial_state(3, config);
  const std::vector<Vector> features = {{1, 2, 3}};
  const auto obj = batch_objective(state.params, features, {}, config, true);
  const auto w = state.params.values();
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(obj.grad[i] == 2.0 * 0.25 * w[i]);
  CHECK(obj.terms.decay_term == weight_decay(w, 0.25));
}

TEST_CASE("encoder gradient matches central differences") {
  Rng rng(72);
  TrainConfig config = small_config(3);
  config.embedding_dim = 3;
  config.hidden = {5};
  config.weight_decay = 0.01;
  TrainState state = initial_state(4, config);
  std::vector<Vector> features;
  for (int i = 0; i < 5; ++i) features.push_back(test::random_vector(rng, 4, 1.5));
  const std::vector<Triplet> triplets = {{0, 1, 2}, {1, 0, 3}, {2, 3, 4}};
  const auto obj = batch_objective(state.params, features, triplets, config, true);
  const double h = 1e-6;
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    auto plus = state.params;
    auto minus = state.params;
    plus.values()[i] += h;
    minus.values()[i] -= h;
    const double fd = (batch_objective(plus, features, triplets, config, false).terms.total -
                       batch_objective(minus, features, triplets, config, false).terms.total) /
                      (2 * h);
    CHECK(std::fabs(obj.grad[i] - fd) <= 1e-4 * std::max({std::fabs(fd), std::fabs(obj.grad[i]), 1e-3}));
  }
}

TEST_CASE("training separates two blobs") {
  const auto data = generate(two_blobs(4));
  TrainConfig config = small_config(4);
  config.loss = LossKind::kVanilla;
  const auto result = train(data, config);
  REQUIRE(result.trace.size() == 200);
  const auto held = data.indices_of(Split::kGallery);
  const auto out = embed(result.params, data, held, config.bounds);
  double intra = 0.0;
  double inter = 0.0;
  std::size_t ni = 0;
  std::size_t ne = 0;
  for (std::size_t i = 0; i < held.size(); ++i) {
    for (std::size_t j = i + 1; j < held.size(); ++j) {
      const double d = euclidean_distance(out[i].embedding, out[j].embedding);
      if (data.true_labels[held[i]] == data.true_labels[held[j]]) {
        intra += d;
        ++ni;
      } else {
        inter += d;
        ++ne;
      }
    }
  }
  CHECK(intra / ni < inter / ne);
  for (const auto& row : result.trace) CHECK(std::isfinite(row.terms.total));
}

TEST_CASE("training is deterministic and resumable") {
  const auto data = generate(two_blobs(5));
  TrainConfig config = small_config(5);
  config.iterations = 60;
  config.lr = LrSchedule::exponential(3e-3, 20, 1e-4, 50);
  const auto full = train(data, config);
  const auto again = train(data, config);
  CHECK(full.params == again.params);
  CHECK(trace_to_csv(full.trace) == trace_to_csv(again.trace));

  TrainState state = initial_state(data.feature_dim, config);
  auto first = train_steps(state, data, config, 25);
  test::TempDir dir("trainer");
  save_params(state.params, dir.file("m.hemb"));
  save_train_state(state, dir.file("m.state"));

  TrainState resumed;
  resumed.params = load_params(dir.file("m.hemb"));
  load_train_state(resumed, dir.file("m.state"));
  CHECK(resumed.iteration == 25);
  const auto second = train_steps(resumed, data, config, 60);
  CHECK(resumed.params == full.params);
  first.insert(first.end(), second.begin(), second.end());
  CHECK(trace_to_csv(first) == trace_to_csv(full.trace));

  config.seed = 6;
  CHECK(!(train(data, config).params == full.params));
}

TEST_CASE("trace and epochs") {
  const auto data = generate(two_blobs(6));
  TrainConfig config = small_config(6);
  CHECK(batches_per_epoch(data, config) == 25);  // 400 / 16
  config.sampling = BatchSampling::kPK;
  config.classes_per_batch = 2;
  config.samples_per_class = 6;
  CHECK(batches_per_epoch(data, config) == 34);  // ceil(400 / 12)

  config.iterations = 70;
  config.lr_in_epochs = true;
  config.lr = LrSchedule::linear_to_zero(0.01, 1, 3);
  const auto result = train(data, config);
  CHECK(result.trace[0].lr == 0.01);
  CHECK(result.trace[33].lr == 0.01);
  CHECK(result.trace[34].lr == 0.01);
  CHECK(result.trace[68].lr == 0.005);
  const std::string csv = trace_to_csv(result.trace);
  CHECK(csv.rfind("iteration,lr,total,data_term,log_term,decay_term,triplets,mean_log_variance\n", 0) == 0);
}

TEST_CASE("training failures") {
  const auto data = generate(two_blobs(7));
  TrainConfig config = small_config(7);
  config.weight_decay = -1.0;
  CHECK(test::error_kind([&] { train(data, config); }) == ErrorKind::kConfig);
  config = small_config(7);
  config.momentum = 1.0;
  CHECK(test::error_kind([&] { train(data, config); }) == ErrorKind::kConfig);

  config = small_config(7);
  config.lr = LrSchedule::constant(1e200);
  try {
    train(data, config);
    FAIL("expected numerical failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumerical);
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
  }

  TrainState state = initial_state(5, small_config(7));
  CHECK(test::error_kind([&] { train_steps(state, data, small_config(7), 1); }) == ErrorKind::kShape);
}
