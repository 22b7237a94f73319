#include "hemb/config.hpp"

#include <cstdlib>
#include <set>

#include "hemb/binary_io.hpp"
#include "hemb/error.hpp"

namespace hemb {

namespace {

using nlohmann::json;

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(ErrorKind::kConfig, path_ + " must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = node_.find(key);
    if (it == node_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::kConfig, where(key) + ": " + e.what());
    }
  }

  template <typename T>
  bool read_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    auto it = node_.find(key);
    if (it == node_.end()) return false;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::kConfig, where(key) + ": " + e.what());
    }
    return true;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string where(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) fail(ErrorKind::kConfig, "unknown config key " + path_ + "." + it.key());
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum>
Enum parse_choice(const std::string& value, const std::string& where,
                  std::initializer_list<std::pair<const char*, Enum>> choices) {
  std::string names;
  for (const auto& [name, e] : choices) {
    if (value == name) return e;
    names += names.empty() ? name : std::string(", ") + name;
  }
  fail(ErrorKind::kConfig, where + ": \"" + value + "\" is not one of " + names);
}

void parse_data(const json& node, GeneratorConfig& c) {
  Section s(node, "data");
  s.read("train_size", c.train_size);
  s.read("query_size", c.query_size);
  s.read("gallery_size", c.gallery_size);
  s.read("feature_dim", c.feature_dim);
  s.read("num_classes", c.num_classes);
  s.read("separation", c.separation);
  s.read("base_noise", c.base_noise);
  s.read("hetero_fraction", c.hetero_fraction);
  s.read("hetero_scale", c.hetero_scale);
  s.read("flip_rate", c.flip_rate);
  std::string scheme = c.flip_scheme == FlipScheme::kUniform ? "uniform" : "confusion_pairs";
  s.read("flip_scheme", scheme);
  c.flip_scheme = parse_choice<FlipScheme>(scheme, s.where("flip_scheme"),
                                           {{"uniform", FlipScheme::kUniform},
                                            {"confusion_pairs", FlipScheme::kConfusionPairs}});
  s.read("flips_follow_noise", c.flips_follow_noise);
  s.finish();
  c.validate();
}

void parse_lr(const json& node, TrainConfig& c) {
  Section s(node, "train.lr");
  std::string kind = "exponential";
  switch (c.lr.kind) {
    case LrSchedule::Kind::kConstant: kind = "constant"; break;
    case LrSchedule::Kind::kLinear: kind = "linear"; break;
    case LrSchedule::Kind::kExponential: kind = "exponential"; break;
  }
  s.read("kind", kind);
  c.lr.kind = parse_choice<LrSchedule::Kind>(kind, s.where("kind"),
                                             {{"constant", LrSchedule::Kind::kConstant},
                                              {"exponential", LrSchedule::Kind::kExponential},
                                              {"linear", LrSchedule::Kind::kLinear}});
  s.read("initial", c.lr.initial);
  s.read("final", c.lr.final_value);
  s.read("decay_start", c.lr.decay_start);
  s.read("decay_end", c.lr.decay_end);
  std::string unit = c.lr_in_epochs ? "epoch" : "iteration";
  s.read("unit", unit);
  c.lr_in_epochs = parse_choice<bool>(unit, s.where("unit"), {{"iteration", false}, {"epoch", true}});
  s.finish();
  if (c.lr.kind == LrSchedule::Kind::kLinear) c.lr.final_value = 0.0;
}

void parse_train(const json& node, TrainConfig& c) {
  Section s(node, "train");
  s.read("embedding_dim", c.embedding_dim);
  s.read("hidden", c.hidden);
  std::string mode = c.margin_mode.kind() == MarginMode::Kind::kSoftPlus ? "softplus" : "hinge";
  double margin = c.margin_mode.margin();
  s.read("margin_mode", mode);
  s.read("margin", margin);
  const bool soft = parse_choice<bool>(mode, s.where("margin_mode"), {{"softplus", true}, {"hinge", false}});
  c.margin_mode = soft ? MarginMode::soft_plus() : MarginMode::hard_hinge(margin);
  s.read("mining_margin", c.mining_margin);
  s.read("weight_decay", c.weight_decay);
  s.read("momentum", c.momentum);
  if (const json* lr = s.child("lr")) parse_lr(*lr, c);
  std::string sampling = c.sampling == BatchSampling::kPK ? "pk" : "class_balanced";
  s.read("sampling", sampling);
  c.sampling = parse_choice<BatchSampling>(sampling, s.where("sampling"),
                                           {{"pk", BatchSampling::kPK},
                                            {"class_balanced", BatchSampling::kClassBalanced}});
  s.read("classes_per_batch", c.classes_per_batch);
  s.read("samples_per_class", c.samples_per_class);
  std::string mining = c.mining == MiningStrategy::kSemiHard ? "semi_hard" : "batch_hard";
  s.read("mining", mining);
  c.mining = parse_choice<MiningStrategy>(mining, s.where("mining"),
                                          {{"semi_hard", MiningStrategy::kSemiHard},
                                           {"batch_hard", MiningStrategy::kBatchHard}});
  std::string loss = c.loss == LossKind::kHetero ? "hetero" : "vanilla";
  s.read("loss", loss);
  c.loss = parse_choice<LossKind>(loss, s.where("loss"),
                                  {{"hetero", LossKind::kHetero}, {"vanilla", LossKind::kVanilla}});
  s.read("iterations", c.iterations);
  s.read("log_variance_min", c.bounds.min);
  s.read("log_variance_max", c.bounds.max);
  s.read("freeze_log_variance", c.freeze_log_variance);
  s.finish();
  c.validate();
}

void parse_clean(const json& node, CleanConfig& c) {
  Section s(node, "clean");
  s.read("fractions", c.fractions);
  std::vector<std::string> names;
  for (DropStrategy d : c.strategies) names.emplace_back(to_string(d));
  s.read("strategies", names);
  c.strategies.clear();
  for (const auto& name : names) c.strategies.push_back(drop_strategy_from_string(name));
  s.read("seeds", c.seeds);
  s.finish();
  for (double f : c.fractions) validate_fraction(f);
  if (c.seeds.empty()) fail(ErrorKind::kConfig, "clean.seeds must not be empty");
}

}  // namespace

void ExperimentConfig::apply_seed(std::uint64_t value) {
  seed = value;
  data.seed = value;
  train.seed = value;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfig, std::string("malformed config JSON: ") + e.what());
  }
  ExperimentConfig config;
  Section s(root, "config");
  s.read("schema_version", config.schema_version);
  if (config.schema_version != kConfigSchemaVersion) {
    fail(ErrorKind::kConfig, "unsupported config schema_version " +
                                 std::to_string(config.schema_version) + " (expected " +
                                 std::to_string(kConfigSchemaVersion) + ")");
  }
  s.read_optional("seed", config.seed);
  s.read("output_dir", config.output_dir);
  s.read("threads", config.threads);
  if (const json* node = s.child("data")) parse_data(*node, config.data);
  if (const json* node = s.child("train")) parse_train(*node, config.train);
  if (const json* node = s.child("eval")) {
    Section e(*node, "eval");
    e.read("top_k", config.eval.top_k);
    e.finish();
    for (std::size_t k : config.eval.top_k) {
      if (k == 0) fail(ErrorKind::kConfig, "eval.top_k values must be positive");
    }
  }
  if (const json* node = s.child("clean")) parse_clean(*node, config.clean);
  if (const json* node = s.child("analyze")) {
    Section a(*node, "analyze");
    a.read("top_fraction", config.analyze.top_fraction);
    a.read("per_class_top", config.analyze.per_class_top);
    a.finish();
    if (!(config.analyze.top_fraction > 0.0 && config.analyze.top_fraction <= 1.0)) {
      fail(ErrorKind::kConfig, "analyze.top_fraction must lie in (0, 1]");
    }
  }
  s.finish();
  if (config.threads == 0) fail(ErrorKind::kConfig, "threads must be >= 1");
  if (config.seed) config.apply_seed(*config.seed);
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }
  return parse_experiment_config(text);
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  if (c.seed) j["seed"] = *c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  const GeneratorConfig& d = c.data;
  j["data"] = {{"train_size", d.train_size},
               {"query_size", d.query_size},
               {"gallery_size", d.gallery_size},
               {"feature_dim", d.feature_dim},
               {"num_classes", d.num_classes},
               {"separation", d.separation},
               {"base_noise", d.base_noise},
               {"hetero_fraction", d.hetero_fraction},
               {"hetero_scale", d.hetero_scale},
               {"flip_rate", d.flip_rate},
               {"flip_scheme", d.flip_scheme == FlipScheme::kUniform ? "uniform" : "confusion_pairs"},
               {"flips_follow_noise", d.flips_follow_noise}};
  const TrainConfig& t = c.train;
  const char* lr_kind = t.lr.kind == LrSchedule::Kind::kConstant   ? "constant"
                        : t.lr.kind == LrSchedule::Kind::kLinear ? "linear"
                                                                 : "exponential";
  j["train"] = {{"embedding_dim", t.embedding_dim},
                {"hidden", t.hidden},
                {"margin_mode", t.margin_mode.kind() == MarginMode::Kind::kSoftPlus ? "softplus" : "hinge"},
                {"margin", t.margin_mode.margin()},
                {"mining_margin", t.mining_margin},
                {"weight_decay", t.weight_decay},
                {"momentum", t.momentum},
                {"lr",
                 {{"kind", lr_kind},
                  {"initial", t.lr.initial},
                  {"final", t.lr.final_value},
                  {"decay_start", t.lr.decay_start},
                  {"decay_end", t.lr.decay_end},
                  {"unit", t.lr_in_epochs ? "epoch" : "iteration"}}},
                {"sampling", t.sampling == BatchSampling::kPK ? "pk" : "class_balanced"},
                {"classes_per_batch", t.classes_per_batch},
                {"samples_per_class", t.samples_per_class},
                {"mining", t.mining == MiningStrategy::kSemiHard ? "semi_hard" : "batch_hard"},
                {"loss", t.loss == LossKind::kHetero ? "hetero" : "vanilla"},
                {"iterations", t.iterations},
                {"log_variance_min", t.bounds.min},
                {"log_variance_max", t.bounds.max},
                {"freeze_log_variance", t.freeze_log_variance}};
  j["eval"] = {{"top_k", c.eval.top_k}};
  std::vector<std::string> strategies;
  for (DropStrategy s : c.clean.strategies) strategies.emplace_back(to_string(s));
  j["clean"] = {{"fractions", c.clean.fractions}, {"strategies", strategies}, {"seeds", c.clean.seeds}};
  j["analyze"] = {{"top_fraction", c.analyze.top_fraction}, {"per_class_top", c.analyze.per_class_top}};
  return j;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const ExperimentConfig& config) {
  if (flag) return *flag;
  if (config.seed) return *config.seed;
  if (const char* env = std::getenv("HEMB_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') fail(ErrorKind::kConfig, std::string("HEMB_SEED is not an integer: ") + env);
    return v;
  }
  return 0;
}

}  // namespace hemb
