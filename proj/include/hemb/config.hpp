#ifndef HEMB_CONFIG_HPP_
#define HEMB_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hemb/data.hpp"
#include "hemb/trainer.hpp"
#include "hemb/uncertainty.hpp"

namespace hemb {

inline constexpr int kConfigSchemaVersion = 1;

struct EvalConfig {
  std::vector<std::size_t> top_k = {1, 5, 10};
};

struct CleanConfig {
  std::vector<double> fractions = {0.0, 0.1, 0.2, 0.3, 0.4};
  std::vector<DropStrategy> strategies = {DropStrategy::kByUncertainty, DropStrategy::kRandom};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct AnalyzeConfig {
  double top_fraction = 0.1;  // share of the train split ranked for noise detection
  std::size_t per_class_top = 5;
};

// One JSON document driving every command. Unknown keys are rejected.
struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::optional<std::uint64_t> seed;
  std::string output_dir = "hemb_out";
  GeneratorConfig data;
  TrainConfig train;
  EvalConfig eval;
  CleanConfig clean;
  AnalyzeConfig analyze;
  unsigned threads = 1;

  // Copies the resolved seed into the generator and trainer.
  void apply_seed(std::uint64_t value);
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

// Seed priority: explicit flag, then the config's "seed", then HEMB_SEED, then 0.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const ExperimentConfig& config);

}  // namespace hemb

#endif  // HEMB_CONFIG_HPP_
