// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <future>
#include <sstream>
#include <string>
#include <vector>

#include "hemb/config.hpp"
#include "hemb/eval.hpp"
#include "hemb/trainer.hpp"
#include "hemb/uncertainty.hpp"
#include "support.hpp"

#ifndef HEMB_CLI_PATH
#error "HEMB_CLI_PATH must name the hemb executable"
#endif

using namespace hemb;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// Relative error of an analytic derivative against a central difference.
// Magnitudes below the floor are compared on an absolute scale of floor * 1e-4.
constexpr double kGradientFloor = 1e-4;

double gradient_error(double analytic, double numeric) {
  const double scale = std::max({std::fabs(analytic), std::fabs(numeric), kGradientFloor});
  return std::fabs(analytic - numeric) / scale;
}

Verdict gradient_check() {
  Rng rng(1001);
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  for (int config_id = 0; config_id < 100; ++config_id) {
    TrainConfig config;
    config.embedding_dim = 1 + rng.uniform_index(4);
    config.hidden.clear();
    for (std::size_t l = rng.uniform_index(3); l > 0; --l) config.hidden.push_back(2 + rng.uniform_index(5));
    config.weight_decay = 0.01 * rng.uniform01();
    config.margin_mode = rng.uniform01() < 0.75 ? MarginMode::soft_plus()
                                                : MarginMode::hard_hinge(0.2 + rng.uniform01());
    config.loss = LossKind::kHetero;
    config.seed = rng.next_u64();
    const std::size_t features_dim = 1 + rng.uniform_index(8);
    TrainState state = initial_state(features_dim, config);
    // random biases on every layer
    for (std::size_t l = 0; l < state.params.layers().size(); ++l) {
      for (std::size_t r = 0; r < state.params.layers()[l].rows; ++r) state.params.bias(l, r) = 0.5 * rng.normal();
    }

    const std::size_t batch = 4 + rng.uniform_index(5);
    std::vector<Vector> features;
    std::vector<int> labels;
    for (std::size_t i = 0; i < batch; ++i) {
      features.push_back(test::random_vector(rng, features_dim, 2.0));
      labels.push_back(static_cast<int>(i % 2));
    }
    std::vector<EmbeddingOutput> outputs;
    std::vector<Vector> embeddings;
    for (const auto& f : features) {
      outputs.push_back(forward(state.params, f, config.bounds));
      embeddings.push_back(outputs.back().embedding);
    }
    const auto triplets = semi_hard_triplets(pairwise_distances(embeddings), labels, 1.0).triplets;

    const auto analytic = batch_objective(state.params, features, triplets, config, true);
    const double h = 1e-6;
    for (std::size_t i = 0; i < state.params.size(); ++i) {
      auto plus = state.params;
      auto minus = state.params;
      plus.values()[i] += h;
      minus.values()[i] -= h;
      const double fd = (batch_objective(plus, features, triplets, config, false).terms.total -
                         batch_objective(minus, features, triplets, config, false).terms.total) /
                        (2 * h);
      const double err = gradient_error(analytic.grad[i], fd);
      worst = std::max(worst, err);
      failures += err > 1e-4 ? 1 : 0;
      ++checked;
    }
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {failures == 0 && seconds < 30.0,
          "100 configs, " + std::to_string(checked) + " parameters, max rel err " + num(worst, 3) +
              ", " + std::to_string(failures) + " above 1e-4, " + num(seconds, 3) + " s"};
}

Verdict reduction_identity() {
  Rng rng(1002);
  std::uint64_t worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(8);
    const std::size_t b = 3 + rng.uniform_index(10);
    std::vector<EmbeddingOutput> batch;
    for (std::size_t i = 0; i < b; ++i) batch.push_back({test::random_vector(rng, d, 3.0), 0.0});
    std::vector<Triplet> triplets;
    for (std::size_t t = 1 + rng.uniform_index(30); t > 0; --t) {
      triplets.push_back({rng.uniform_index(b), rng.uniform_index(b), rng.uniform_index(b)});
    }
    const auto mode = trial % 2 == 0 ? MarginMode::soft_plus() : MarginMode::hard_hinge(1.0);
    const double hetero = loss_gradients(batch, triplets, mode, LossKind::kHetero, 0.0, {}, {}, false).terms.total;
    const double vanilla = loss_gradients(batch, triplets, mode, LossKind::kVanilla, 0.0, {}, {}, false).terms.total;
    worst = std::max(worst, test::ulp_distance(hetero, 1.5 * vanilla));
  }
  return {worst <= 1, "1000 batches, max distance " + std::to_string(worst) + " ulp"};
}

Verdict ktuple_consistency() {
  Rng rng(1003);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(8);
    std::vector<EmbeddingOutput> items;
    for (int j = 0; j < 3; ++j) items.push_back(test::random_output(rng, d, 10.0));
    const auto mode = trial % 2 == 0 ? MarginMode::soft_plus() : MarginMode::hard_hinge(rng.uniform01());
    const LossTerms k = ktuple_loss(items, mode);
    const LossTerms t = hetero_triplet_loss(items[0], items[1], items[2], mode);
    mismatches += std::memcmp(&k, &t, sizeof k) != 0 ? 1 : 0;
  }
  return {mismatches == 0, "1000 inputs, " + std::to_string(mismatches) + " bitwise mismatches"};
}

Verdict mining_oracles() {
  Rng rng(1004);
  std::size_t mismatches = 0;
  std::size_t fallbacks = 0;
  std::size_t ties = 0;
  std::size_t skipped = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto [emb, labels] = test::random_grid_batch(rng, 64);
    const auto d = pairwise_distances(emb);
    const double margin = trial % 10 == 0 ? 0.0 : 2.0 * rng.uniform01();
    const auto semi = semi_hard_triplets(d, labels, margin);
    const auto semi_want = test::semi_hard_oracle(d, labels, margin);
    const auto hard = batch_hard_triplets(d, labels);
    const auto hard_want = test::batch_hard_oracle(d, labels);
    if (!(semi.triplets == semi_want.triplets) || semi.skipped != semi_want.skipped ||
        !(hard.triplets == hard_want.triplets) || hard.skipped != hard_want.skipped) {
      ++mismatches;
    }
    skipped += semi.skipped + hard.skipped;
    for (const Triplet& t : semi.triplets) {
      const double dap = d(t.anchor, t.positive);
      const double dan = d(t.anchor, t.negative);
      if (!(dap < dan && dan < dap + margin)) ++fallbacks;
      for (std::size_t c = 0; c < labels.size(); ++c) {
        if (c != t.negative && labels[c] != labels[t.anchor] && d(t.anchor, c) == dan) {
          ++ties;
          break;
        }
      }
    }
  }
  return {mismatches == 0, "500 batches, " + std::to_string(mismatches) + " mismatches (" +
                               std::to_string(fallbacks) + " fallback picks, " +
                               std::to_string(ties) + " tied picks, " + std::to_string(skipped) +
                               " skipped anchors/pairs exercised)"};
}

Verdict ap_oracle_check() {
  std::size_t lists = 0;
  std::size_t mismatches = 0;
  for (std::size_t len = 1; len <= 12; ++len) {
    for (std::uint32_t mask = 1; mask < (1u << len); ++mask) {
      std::vector<std::uint8_t> f(len);
      for (std::size_t i = 0; i < len; ++i) f[i] = (mask >> i) & 1u;
      const auto ap = average_precision(f);
      ++lists;
      if (!ap || std::fabs(*ap - test::ap_oracle(f)) > 1e-15) ++mismatches;
    }
    const std::vector<std::uint8_t> none(len, 0);
    if (average_precision(none).has_value()) ++mismatches;
  }
  const std::vector<std::uint8_t> hand = {1, 0, 1};
  const bool fixture = test::ulp_distance(*average_precision(hand), 5.0 / 6.0) <= 1;
  return {mismatches == 0 && fixture, std::to_string(lists) + " lists, " + std::to_string(mismatches) +
                                          " mismatches, [1,0,1] -> " + num(*average_precision(hand), 17)};
}

struct SeedRun {
  double map = 0.0;
  double pearson_r = 0.0;
  double clean_uncertainty = 0.0;
  double clean_random = 0.0;
  double noise_precision = 0.0;
  double base_rate = 0.0;
};

struct Split3 {
  std::vector<Vector> emb;
  Vector s;
  Labels labels;
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> mask;
};

Split3 embed_split(const EncoderParams& params, const SyntheticDataset& data, Split split,
                   const LogVarianceBounds& bounds) {
  Split3 out;
  out.ids = data.indices_of(split);
  for (const auto& o : embed(params, data, out.ids, bounds)) {
    out.emb.push_back(o.embedding);
    out.s.push_back(o.log_variance);
  }
  for (std::size_t i : out.ids) {
    out.labels.push_back(data.noisy_labels[i]);
    out.mask.push_back(data.noise_mask[i]);
  }
  return out;
}

SeedRun run_seed(std::uint64_t seed, double flip_rate, LossKind loss, bool analyses) {
  ExperimentConfig config;
  config.data.flip_rate = flip_rate;
  config.train.loss = loss;
  config.apply_seed(seed);
  const SyntheticDataset data = generate(config.data);
  const TrainResult trained = train(data, config.train);
  const auto& bounds = config.train.bounds;
  const Split3 q = embed_split(trained.params, data, Split::kQuery, bounds);
  const Split3 g = embed_split(trained.params, data, Split::kGallery, bounds);
  const RetrievalSet queries{q.emb, q.labels, q.s, q.ids};
  const RetrievalSet gallery{g.emb, g.labels, g.s, g.ids};
  const std::vector<std::size_t> top_k = {1, 5, 10};
  const RetrievalReport report = evaluate(queries, gallery, top_k);
  SeedRun run;
  run.map = report.micro_map;
  if (!analyses) return run;

  run.pearson_r = ap_uncertainty_correlation(report).pearson_r;
  Rng unused(0);
  run.clean_uncertainty =
      clean_gallery(gallery, queries, 0.2, DropStrategy::kByUncertainty, unused).map_after;
  Rng rng = Rng::derive(seed, 0xC1EA);
  run.clean_random = clean_gallery(gallery, queries, 0.2, DropStrategy::kRandom, rng).map_after;

  const Split3 t = embed_split(trained.params, data, Split::kTrain, bounds);
  const auto ranking = rank_training_noise(t.s, t.ids, t.labels, t.mask, t.ids.size() / 10);
  run.noise_precision = ranking.precision_at_n.value_or(0.0);
  run.base_rate = ranking.base_rate;
  return run;
}

std::vector<SeedRun> run_seeds(double flip_rate, LossKind loss, bool analyses) {
  std::vector<std::future<SeedRun>> jobs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    jobs.push_back(std::async(std::launch::async, run_seed, seed, flip_rate, loss, analyses));
  }
  std::vector<SeedRun> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

std::string join(const std::vector<SeedRun>& runs, double SeedRun::*field, int digits = 3) {
  std::string s;
  for (const auto& r : runs) s += (s.empty() ? "" : " ") + num(r.*field, digits);
  return s;
}

Verdict correlation_trend(const std::vector<SeedRun>& runs) {
  int hits = 0;
  for (const auto& r : runs) hits += r.pearson_r < -0.1 ? 1 : 0;
  return {hits >= 4, std::to_string(hits) + "/5 seeds with r < -0.1 (r = " +
                         join(runs, &SeedRun::pearson_r) + ")"};
}

Verdict cleaning_trend(const std::vector<SeedRun>& runs) {
  double base = 0.0;
  double unc = 0.0;
  double rnd = 0.0;
  for (const auto& r : runs) {
    base += r.map / 5;
    unc += r.clean_uncertainty / 5;
    rnd += r.clean_random / 5;
  }
  const bool pass = unc > rnd && std::fabs(rnd - base) <= 0.01;
  return {pass, "mean mAP no-drop " + num(100 * base) + ", uncertainty drop " + num(100 * unc) +
                    ", random drop " + num(100 * rnd) + " (random - no-drop " +
                    num(100 * (rnd - base), 3) + " pt)"};
}

Verdict noise_trend(const std::vector<SeedRun>& runs) {
  int hits = 0;
  for (const auto& r : runs) hits += r.noise_precision >= 1.5 * r.base_rate ? 1 : 0;
  return {hits >= 4, std::to_string(hits) + "/5 seeds with precision@10% >= 1.5 x base rate " +
                         num(runs.front().base_rate, 3) + " (precision = " +
                         join(runs, &SeedRun::noise_precision) + ")"};
}

Verdict clean_parity() {
  const auto hetero = run_seeds(0.0, LossKind::kHetero, false);
  const auto vanilla = run_seeds(0.0, LossKind::kVanilla, false);
  double worst = 0.0;
  std::string diffs;
  for (std::size_t i = 0; i < 5; ++i) {
    const double diff = 100 * (hetero[i].map - vanilla[i].map);
    worst = std::max(worst, std::fabs(diff));
    diffs += (diffs.empty() ? "" : " ") + num(diff, 3);
  }
  return {worst <= 2.0, "hetero - vanilla mAP per seed (pt): " + diffs + "; max |diff| " + num(worst, 3)};
}

int shell(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

Verdict cli_determinism() {
  test::TempDir dir("acceptance_cli");
  test::spill(dir.file("c.json"), R"({
    "schema_version": 1,
    "seed": 11,
    "data": {"train_size": 600, "query_size": 120, "gallery_size": 120, "feature_dim": 8,
             "num_classes": 5},
    "train": {"embedding_dim": 4, "hidden": [16], "samples_per_class": 8, "iterations": 150,
              "lr": {"kind": "exponential", "initial": 0.003, "final": 0.0001,
                     "decay_start": 75, "decay_end": 150}},
    "clean": {"fractions": [0.0, 0.1, 0.2], "seeds": [1, 2, 3]}
  })");
  const std::string exe = HEMB_CLI_PATH;
  const std::string cfg = " --config " + dir.file("c.json") + " --quiet";
  int failures = 0;
  for (const char* tag : {"a", "b"}) {
    const std::string d = dir.file(tag);
    failures += shell(exe + " gen-data" + cfg + " --out " + d + "/data.bin --csv " + d + "/data.csv") != 0;
    failures += shell(exe + " import-csv" + cfg + " --input " + d + "/data.csv --out " + d + "/imported.bin") != 0;
    failures += shell(exe + " train" + cfg + " --dataset " + d + "/data.bin --out " + d + "/model.bin") != 0;
    const std::string md = " --model " + d + "/model.bin --dataset " + d + "/data.bin";
    failures += shell(exe + " eval" + cfg + md + " --out " + d + "/eval") != 0;
    failures += shell(exe + " clean" + cfg + md + " --out " + d + "/clean") != 0;
    failures += shell(exe + " analyze" + cfg + md + " --out " + d + "/analyze") != 0;
  }
  std::size_t compared = 0;
  std::size_t differing = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir.path() / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), dir.path() / "a");
    ++compared;
    const std::string other = (dir.path() / "b" / rel).string();
    if (!std::filesystem::exists(other) || test::slurp(entry.path().string()) != test::slurp(other)) {
      ++differing;
    }
  }
  return {failures == 0 && differing == 0 && compared == 11,
          std::to_string(compared) + " output files from 6 commands, " + std::to_string(differing) +
              " differ, " + std::to_string(failures) + " failed invocations"};
}

Verdict schedule_fixtures() {
  const auto exp = LrSchedule::exponential(3e-4, 15000, 1e-7, 25000);
  const auto lin = LrSchedule::linear_to_zero(0.01, 250, 500);
  bool ok = true;
  for (double t : {0.0, 1.0, 7500.0, 14999.0}) ok = ok && lr_schedule(exp, t) == 3e-4;
  ok = ok && lr_schedule(exp, 25000) == 1e-7;
  for (double t : {0.0, 100.0, 250.0}) ok = ok && lr_schedule(lin, t) == 0.01;
  ok = ok && lr_schedule(lin, 500) == 0.0 && lr_schedule(lin, 375) == 0.005;
  return {ok, "lr(14999) = " + num(lr_schedule(exp, 14999), 17) + ", lr(25000) = " +
                  num(lr_schedule(exp, 25000), 17) + ", linear 250/375/500 = " +
                  num(lr_schedule(lin, 250), 17) + "/" + num(lr_schedule(lin, 375), 17) + "/" +
                  num(lr_schedule(lin, 500), 17)};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d %s  %-22s %s [%.1f s]\n", id, v.pass ? "PASS" : "FAIL", name,
                v.detail.c_str(), seconds);
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  };

  report(1, "gradient check", gradient_check);
  report(2, "reduction identity", reduction_identity);
  report(3, "k-tuple at k=3", ktuple_consistency);
  report(4, "mining oracles", mining_oracles);
  report(5, "AP oracle", ap_oracle_check);

  std::vector<SeedRun> noisy;
  const auto start = std::chrono::steady_clock::now();
  std::string train_error;
  try {
    noisy = run_seeds(0.2, LossKind::kHetero, true);
  } catch (const std::exception& e) {
    train_error = e.what();
  }
  const double train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("noisy default runs (5 seeds, hetero): %.1f s, mAP %s\n", train_seconds,
              noisy.empty() ? "n/a" : join(noisy, &SeedRun::map).c_str());
  auto with_runs = [&](Verdict (*fn)(const std::vector<SeedRun>&)) {
    return [&, fn] {
      if (noisy.empty()) return Verdict{false, "training failed: " + train_error};
      Verdict v = fn(noisy);
      if (train_seconds > 300.0) {
        v.pass = false;
        v.detail += " (runtime over 5 min)";
      }
      return v;
    };
  };
  report(6, "correlation trend", with_runs(correlation_trend));
  report(7, "cleaning trend", with_runs(cleaning_trend));
  report(8, "noise detection", with_runs(noise_trend));
  report(9, "clean-data parity", clean_parity);
  report(10, "CLI determinism", cli_determinism);
  report(11, "schedule fixtures", schedule_fixtures);

  std::printf("%d of 11 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
