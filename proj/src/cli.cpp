#include "hemb/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>

#include "hemb/binary_io.hpp"
#include "hemb/config.hpp"
#include "hemb/data.hpp"
#include "hemb/encoder.hpp"
#include "hemb/error.hpp"
#include "hemb/eval.hpp"
#include "hemb/trainer.hpp"
#include "hemb/uncertainty.hpp"

namespace hemb::cli {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  unsigned threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "experiment config (JSON)");
  cmd->add_option("--seed", c.seed, "seed; overrides the config and HEMB_SEED");
  cmd->add_option("--out", c.out, "output path");
  cmd->add_flag("--quiet", c.quiet, "suppress the stdout summary");
  cmd->add_option("--threads", c.threads, "worker threads for evaluation (default 1)");
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig config = c.config_path.empty() ? ExperimentConfig{}
                                                  : load_experiment_config(c.config_path);
  config.apply_seed(resolve_seed(c.seed, config));
  if (c.threads > 0) config.threads = c.threads;
  return config;
}

std::string output_path(const Common& c, const ExperimentConfig& config, const std::string& fallback) {
  std::string path = c.out.empty() ? (std::filesystem::path(config.output_dir) / fallback).string() : c.out;
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  return path;
}

std::string output_dir(const Common& c, const ExperimentConfig& config, const std::string& fallback) {
  std::string dir = c.out.empty() ? (std::filesystem::path(config.output_dir) / fallback).string() : c.out;
  std::filesystem::create_directories(dir);
  return dir;
}

void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

// Embeddings, log-variances, observed labels and ids of one split.
struct Embedded {
  std::vector<Vector> embeddings;
  Vector log_variances;
  Labels labels;
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> noise_mask;

  RetrievalSet view() const { return {embeddings, labels, log_variances, ids}; }
};

Embedded embed_split(const EncoderParams& params, const SyntheticDataset& data, Split split,
                     const LogVarianceBounds& bounds) {
  if (params.input_dim() != data.feature_dim) {
    fail(ErrorKind::kShape, "model expects " + std::to_string(params.input_dim()) +
                                " features but dataset has " + std::to_string(data.feature_dim));
  }
  Embedded e;
  e.ids = data.indices_of(split);
  for (const auto& o : embed(params, data, e.ids, bounds)) {
    e.embeddings.push_back(o.embedding);
    e.log_variances.push_back(o.log_variance);
  }
  for (std::size_t i : e.ids) {
    e.labels.push_back(data.noisy_labels[i]);
    e.noise_mask.push_back(data.noise_mask[i]);
  }
  return e;
}

json metadata(const ExperimentConfig& config, const char* command) {
  return {{"command", command},
          {"uncertainty_scalar", "s = log(sigma^2), the raw clamped encoder output"},
          {"config", config_to_json(config)}};
}

RetrievalReport query_gallery_report(const EncoderParams& params, const SyntheticDataset& data,
                                     const ExperimentConfig& config, bool leave_one_out,
                                     Embedded* queries_out = nullptr) {
  const auto& bounds = config.train.bounds;
  if (leave_one_out) {
    Embedded items = embed_split(params, data, Split::kGallery, bounds);
    if (items.ids.empty()) items = embed_split(params, data, Split::kTrain, bounds);
    if (queries_out) *queries_out = items;
    return leave_one_out_evaluate(items.view(), config.eval.top_k, config.threads);
  }
  Embedded queries = embed_split(params, data, Split::kQuery, bounds);
  Embedded gallery = embed_split(params, data, Split::kGallery, bounds);
  if (queries.ids.empty() || gallery.ids.empty()) {
    fail(ErrorKind::kCapacity, "dataset needs non-empty query and gallery splits");
  }
  auto report = evaluate(queries.view(), gallery.view(), config.eval.top_k, config.threads);
  if (queries_out) *queries_out = std::move(queries);
  return report;
}

int cmd_gen_data(const Common& c, const std::string& csv_path, std::ostream& out) {
  const ExperimentConfig config = load_config(c);
  const SyntheticDataset data = generate(config.data);
  const std::string path = output_path(c, config, "dataset.bin");
  save_features(data, path);
  if (!csv_path.empty()) write_file(csv_path, features_to_csv(data));
  if (!c.quiet) {
    std::size_t flips = 0;
    for (auto m : data.noise_mask) flips += m;
    out << "dataset: " << data.size() << " samples, " << data.feature_dim << " features, "
        << data.num_classes << " classes\n"
        << "splits: train " << data.indices_of(Split::kTrain).size() << ", query "
        << data.indices_of(Split::kQuery).size() << ", gallery "
        << data.indices_of(Split::kGallery).size() << "\n"
        << "flipped train labels: " << flips << "\n"
        << "wrote " << path << "\n";
  }
  return 0;
}

int cmd_import_csv(const Common& c, const std::string& input, std::ostream& out) {
  const ExperimentConfig config = load_config(c);
  const SyntheticDataset data = import_features_csv(input);
  const std::string path = output_path(c, config, "dataset.bin");
  save_features(data, path);
  if (!c.quiet) out << "imported " << data.size() << " rows -> " << path << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& dataset_path, const std::string& resume,
              std::optional<std::size_t> iterations, const std::string& loss, std::ostream& out) {
  ExperimentConfig config = load_config(c);
  if (iterations) config.train.iterations = *iterations;
  if (!loss.empty()) {
    if (loss == "hetero") {
      config.train.loss = LossKind::kHetero;
    } else if (loss == "vanilla") {
      config.train.loss = LossKind::kVanilla;
    } else {
      fail(ErrorKind::kConfig, "--loss must be hetero or vanilla");
    }
  }
  config.train.validate();
  const SyntheticDataset data = load_features(dataset_path);

  TrainState state = initial_state(data.feature_dim, config.train);
  if (!resume.empty()) {
    state.params = load_params(resume);
    load_train_state(state, resume + ".state");
    if (state.params.layers() != initial_state(data.feature_dim, config.train).params.layers()) {
      fail(ErrorKind::kConfig, "resumed model layout differs from the configured encoder");
    }
  }
  const std::size_t start = state.iteration;
  const auto trace = train_steps(state, data, config.train, config.train.iterations);

  const std::string path = output_path(c, config, "model.bin");
  save_params(state.params, path);
  save_train_state(state, path + ".state");
  write_file(path + ".trace.csv", trace_to_csv(trace));
  if (!c.quiet) {
    out << "trained iterations " << start << ".." << state.iteration << " ("
        << (config.train.loss == LossKind::kHetero ? "hetero" : "vanilla") << " loss)\n";
    if (!trace.empty()) {
      const TraceRow& last = trace.back();
      out << "final loss " << fmt(last.terms.total) << " (data " << fmt(last.terms.data_term)
          << ", log " << fmt(last.terms.log_term) << ", decay " << fmt(last.terms.decay_term)
          << "), mean s " << fmt(last.mean_log_variance) << "\n";
    }
    out << "wrote " << path << ", " << path << ".state, " << path << ".trace.csv\n";
  }
  return 0;
}

int cmd_eval(const Common& c, const std::string& model_path, const std::string& dataset_path,
             const std::vector<std::size_t>& top_k, bool leave_one_out, std::ostream& out) {
  ExperimentConfig config = load_config(c);
  if (!top_k.empty()) config.eval.top_k = top_k;
  const EncoderParams params = load_params(model_path);
  const SyntheticDataset data = load_features(dataset_path);
  const RetrievalReport report = query_gallery_report(params, data, config, leave_one_out);

  const std::string dir = output_dir(c, config, "eval");
  json j = report_to_json(report);
  j["protocol"] = leave_one_out ? "leave_one_out" : "query_gallery";
  j["metadata"] = metadata(config, "eval");
  write_json((std::filesystem::path(dir) / "report.json").string(), j);
  write_file((std::filesystem::path(dir) / "per_query.csv").string(), report_to_csv(report));
  if (!c.quiet) {
    out << "queries " << report.per_query.size() << " (excluded " << report.excluded_queries << ")\n"
        << "micro mAP " << fmt(report.micro_map) << "\n"
        << "macro mAP " << fmt(report.macro_map) << "\n";
    for (const auto& [k, acc] : report.top_k_accuracy) out << "top-" << k << " " << fmt(acc) << "\n";
  }
  return 0;
}

int cmd_clean(const Common& c, const std::string& model_path, const std::string& dataset_path,
              std::ostream& out) {
  const ExperimentConfig config = load_config(c);
  const EncoderParams params = load_params(model_path);
  const SyntheticDataset data = load_features(dataset_path);
  const auto& bounds = config.train.bounds;
  const Embedded queries = embed_split(params, data, Split::kQuery, bounds);
  const Embedded gallery = embed_split(params, data, Split::kGallery, bounds);
  if (queries.ids.empty() || gallery.ids.empty()) {
    fail(ErrorKind::kCapacity, "dataset needs non-empty query and gallery splits");
  }
  const RetrievalReport base = evaluate(queries.view(), gallery.view(), {}, config.threads);

  json gallery_rows = json::array();
  json query_rows = json::array();
  std::string csv = "experiment,fraction,strategy,seed,map_before,map_after,dropped\n";
  std::map<std::pair<double, std::string>, std::pair<double, std::size_t>> means;

  for (double fraction : config.clean.fractions) {
    for (DropStrategy strategy : config.clean.strategies) {
      for (std::uint64_t seed : config.clean.seeds) {
        Rng rng = Rng::derive(seed, 0xC1EA);
        const CleaningResult r =
            clean_gallery(gallery.view(), queries.view(), fraction, strategy, rng, config.threads);
        gallery_rows.push_back({{"fraction", fraction},
                                {"strategy", to_string(strategy)},
                                {"seed", seed},
                                {"map_before", r.map_before},
                                {"map_after", r.map_after},
                                {"dropped", r.dropped_ids.size()},
                                {"emptied_classes", r.emptied_classes}});
        csv += "gallery," + fmt(fraction) + ',' + to_string(strategy) + ',' + std::to_string(seed) +
               ',' + fmt(r.map_before) + ',' + fmt(r.map_after) + ',' +
               std::to_string(r.dropped_ids.size()) + '\n';
        auto& m = means[{fraction, to_string(strategy)}];
        m.first += r.map_after;
        ++m.second;
      }
    }
  }
  for (std::uint64_t seed : config.clean.seeds) {
    Rng rng = Rng::derive(seed, 0xD20F);
    for (const DropQueryPoint& p : drop_query_experiment(base, config.clean.fractions, rng)) {
      query_rows.push_back({{"fraction", p.fraction},
                            {"strategy", to_string(p.strategy)},
                            {"seed", seed},
                            {"map", p.map},
                            {"retained", p.retained}});
      csv += "query," + fmt(p.fraction) + ',' + to_string(p.strategy) + ',' + std::to_string(seed) +
             ',' + fmt(base.micro_map) + ',' + fmt(p.map) + ',' +
             std::to_string(base.per_query.size() - p.retained) + '\n';
    }
  }
  json summary = json::array();
  for (const auto& [key, m] : means) {
    summary.push_back({{"fraction", key.first},
                       {"strategy", key.second},
                       {"mean_map_after", m.first / static_cast<double>(m.second)}});
  }

  const std::string dir = output_dir(c, config, "clean");
  json j;
  j["map_no_drop"] = base.micro_map;
  j["gallery_cleaning"] = std::move(gallery_rows);
  j["gallery_summary"] = summary;
  j["query_dropping"] = std::move(query_rows);
  j["metadata"] = metadata(config, "clean");
  write_json((std::filesystem::path(dir) / "clean.json").string(), j);
  write_file((std::filesystem::path(dir) / "clean_curves.csv").string(), csv);
  if (!c.quiet) {
    out << "no-drop mAP " << fmt(base.micro_map) << "\n";
    for (const auto& row : summary) {
      out << "gallery drop " << fmt(row["fraction"].get<double>()) << " "
          << row["strategy"].get<std::string>() << ": mean mAP "
          << fmt(row["mean_map_after"].get<double>()) << "\n";
    }
  }
  return 0;
}

int cmd_analyze(const Common& c, const std::string& model_path, const std::string& dataset_path,
                std::ostream& out) {
  const ExperimentConfig config = load_config(c);
  const EncoderParams params = load_params(model_path);
  const SyntheticDataset data = load_features(dataset_path);
  Embedded queries;
  const RetrievalReport report = query_gallery_report(params, data, config, false, &queries);

  json j;
  j["metadata"] = metadata(config, "analyze");

  const UncertaintyBins bins = bin_by_uncertainty(queries.log_variances);
  json counts = json::object();
  for (std::size_t b = 0; b < 5; ++b) counts[to_string(static_cast<UncertaintyBin>(b))] = bins.counts[b];
  json assignment = json::array();
  for (std::size_t i = 0; i < queries.ids.size(); ++i) {
    assignment.push_back({{"id", queries.ids[i]}, {"bin", to_string(bins.assignment[i])}});
  }
  j["bins"] = {{"population", "query"},
               {"edges", bins.edges},
               {"counts", counts},
               {"assignment", assignment}};

  json correlation;
  try {
    const ApUncertaintyCorrelation corr = ap_uncertainty_correlation(report);
    json deciles = json::array();
    for (const DecileRow& d : corr.deciles) {
      deciles.push_back({{"decile", d.decile},
                         {"count", d.count},
                         {"ap_min", d.ap_min},
                         {"ap_max", d.ap_max},
                         {"mean_ap", d.mean_ap},
                         {"mean_s", d.mean_s},
                         {"std_s", d.std_s}});
    }
    correlation = {{"pearson_r", corr.pearson_r}, {"deciles", deciles}};
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kUndefinedCorrelation && e.kind() != ErrorKind::kInsufficientData) throw;
    correlation = {{"pearson_r", nullptr}, {"undefined", e.what()}, {"deciles", json::array()}};
  }
  j["correlation"] = correlation;

  const Embedded train = embed_split(params, data, Split::kTrain, config.train.bounds);
  const auto top_n = static_cast<std::size_t>(
      std::llround(config.analyze.top_fraction * static_cast<double>(train.ids.size())));
  const NoiseRanking ranking = rank_training_noise(train.log_variances, train.ids, train.labels,
                                                   train.noise_mask, top_n,
                                                   config.analyze.per_class_top);
  json per_class_top = json::object();
  for (const auto& [label, ids] : ranking.per_class_top) per_class_top[std::to_string(label)] = ids;
  json noise = {{"top_n", ranking.top_n},
                {"base_rate", ranking.base_rate},
                {"ranked_ids", std::vector<std::size_t>(ranking.ranked_ids.begin(),
                                                        ranking.ranked_ids.begin() +
                                                            static_cast<std::ptrdiff_t>(ranking.top_n))},
                {"per_class_top", per_class_top}};
  noise["precision_at_n"] = ranking.precision_at_n ? json(*ranking.precision_at_n) : json(nullptr);
  j["noise_ranking"] = noise;

  json classes = json::object();
  for (const auto& [label, m] : report.per_class_map) classes[std::to_string(label)] = m;
  j["per_class_map"] = {{"micro_map", report.micro_map},
                        {"macro_map", report.macro_map},
                        {"classes", classes}};

  const std::string dir = output_dir(c, config, "analyze");
  write_json((std::filesystem::path(dir) / "analysis.json").string(), j);
  if (!c.quiet) {
    out << "micro mAP " << fmt(report.micro_map) << ", macro mAP " << fmt(report.macro_map) << "\n";
    if (correlation["pearson_r"].is_number()) {
      out << "pearson r(AP, s) " << fmt(correlation["pearson_r"].get<double>()) << "\n";
    } else {
      out << "pearson r(AP, s) undefined\n";
    }
    out << "noise detection precision@" << ranking.top_n << " "
        << (ranking.precision_at_n ? fmt(*ranking.precision_at_n) : std::string("n/a"))
        << " (base rate " << fmt(ranking.base_rate) << ")\n";
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Metric learning with heteroscedastic triplet uncertainty", "hemb"};
  app.require_subcommand(1);

  Common common;
  std::string csv_path, input, dataset, model, resume, loss;
  std::optional<std::size_t> iterations;
  std::vector<std::size_t> top_k;
  bool leave_one_out = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, common);
  gen->add_option("--csv", csv_path, "also export the dataset as CSV");

  auto* import = app.add_subcommand("import-csv", "convert a feature CSV to the binary format");
  add_common(import, common);
  import->add_option("--input", input, "CSV with header id,label[,split],f0,...")->required();

  auto* train_cmd = app.add_subcommand("train", "train the encoder");
  add_common(train_cmd, common);
  train_cmd->add_option("--dataset", dataset, "dataset file")->required();
  train_cmd->add_option("--resume", resume, "continue from a model written by train");
  train_cmd->add_option("--iterations", iterations, "total iteration count (overrides config)");
  train_cmd->add_option("--loss", loss, "hetero or vanilla (overrides config)");

  auto* eval_cmd = app.add_subcommand("eval", "retrieval evaluation");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--model", model, "model file")->required();
  eval_cmd->add_option("--dataset", dataset, "dataset file")->required();
  eval_cmd->add_option("--top-k", top_k, "top-k cutoffs")->delimiter(',');
  eval_cmd->add_flag("--leave-one-out", leave_one_out, "query-by-example within the gallery split");

  auto* clean_cmd = app.add_subcommand("clean", "gallery cleaning and query dropping curves");
  add_common(clean_cmd, common);
  clean_cmd->add_option("--model", model, "model file")->required();
  clean_cmd->add_option("--dataset", dataset, "dataset file")->required();

  auto* analyze_cmd = app.add_subcommand("analyze", "uncertainty bins, correlation, noise ranking");
  add_common(analyze_cmd, common);
  analyze_cmd->add_option("--model", model, "model file")->required();
  analyze_cmd->add_option("--dataset", dataset, "dataset file")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, csv_path, out);
    if (import->parsed()) return cmd_import_csv(common, input, out);
    if (train_cmd->parsed()) return cmd_train(common, dataset, resume, iterations, loss, out);
    if (eval_cmd->parsed()) return cmd_eval(common, model, dataset, top_k, leave_one_out, out);
    if (clean_cmd->parsed()) return cmd_clean(common, model, dataset, out);
    if (analyze_cmd->parsed()) return cmd_analyze(common, model, dataset, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error (io): " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace hemb::cli
