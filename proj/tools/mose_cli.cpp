// mose: command-line driver for ingesting data, training, fitting ensembles
// and evaluating modality-split knowledge graph completion models.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mose/checkpoint.hpp"
#include "mose/error.hpp"
#include "mose/evaluator.hpp"
#include "mose/kernels.hpp"
#include "mose/run.hpp"
#include "mose/synth.hpp"
#include "mose/trainer.hpp"

namespace fs = std::filesystem;
using namespace mose;

namespace {

constexpr const char* kCheckpointFile = "model.msec";
constexpr const char* kConfigFile = "config.json";

void report_error(std::string_view kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad temperature grid entry '" + item + "'");
    }
  }
  if (grid.empty()) throw ConfigError("empty temperature grid");
  return grid;
}

RunConfig run_config_for(const fs::path& run) {
  if (!fs::exists(run / kConfigFile)) {
    throw StateError("no " + std::string(kConfigFile) + " in " + run.string() +
                     " (run ingest first)");
  }
  return load_run_config(run / kConfigFile);
}

Checkpoint load_trained(const fs::path& run, const Dataset& data) {
  if (!fs::exists(run / kCheckpointFile)) {
    throw StateError("no trained model in " + run.string() + " (run train first)");
  }
  return load_checkpoint(run / kCheckpointFile, data.features);
}

EnsembleModel ensemble_of(const Checkpoint& ckpt) {
  return {ckpt.boosting, ckpt.meta};
}

// Options that override config-file values when given on the command line.
struct TrainOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> dim, epochs, batch_size;
  std::optional<double> learning_rate, temperature;
  std::optional<int> patience;
  bool tie_relations = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Run seed (all randomness derives from it)");
    cmd->add_option("--dim", dim, "Complex embedding dimension");
    cmd->add_option("--epochs", epochs, "Maximum epochs");
    cmd->add_option("--batch-size", batch_size, "Mini-batch size");
    cmd->add_option("--lr", learning_rate, "Adagrad learning rate");
    cmd->add_option("--temperature", temperature, "Visual/text temperature");
    cmd->add_option("--patience", patience, "Early-stopping patience (<0 disables)");
    cmd->add_flag("--tie-relations", tie_relations, "Share one relation table");
  }
  void apply(RunConfig& c) const {
    if (seed) c.seed = *seed;
    if (dim) c.train.dim = *dim;
    if (epochs) c.train.max_epochs = *epochs;
    if (batch_size) c.train.batch_size = *batch_size;
    if (learning_rate) c.train.learning_rate = *learning_rate;
    if (temperature) c.train.temperature = *temperature;
    if (patience) c.train.patience = *patience;
    if (tie_relations) c.train.tie_relations = true;
    c.propagate_seed();
    c.train.validate();
  }
};

void cmd_ingest(const fs::path& data_dir, const fs::path& run,
                const std::string& config_path, const TrainOverrides& overrides) {
  const Dataset data = load_dataset_dir(data_dir);
  write_run_bundle(data, run);
  RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  overrides.apply(config);
  save_run_config(config, run / kConfigFile);
  std::cout << "entities\t" << data.vocab.num_entities() << "\nrelations\t"
            << data.vocab.num_relations() << "\ntrain\t" << data.store.train.size()
            << "\nvalid\t" << data.store.valid.size() << "\ntest\t"
            << data.store.test.size() << '\n';
}

void cmd_train(const fs::path& run, const std::string& config_path,
               const TrainOverrides& overrides) {
  const Dataset data = load_run_bundle(run);
  RunConfig config = run_config_for(run);
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config " + config_path);
    config = run_config_from_json(nlohmann::json::parse(in), config);
  }
  overrides.apply(config);
  save_run_config(config, run / kConfigFile);

  const FilterIndex filter = build_filter_index(data.store);
  auto params = ModelParams::initialize(init_options(config, data), data.features);
  std::ofstream log(run / "train_log.jsonl", std::ios::trunc);
  auto result = fit(data.store, filter, std::move(params), config.train,
                    [&](const EpochLog& e) {
                      write_epoch_log(log, e);
                      log.flush();
                    });

  Checkpoint ckpt;
  ckpt.config = nlohmann::json::parse(to_json(config).dump());
  ckpt.num_entities = data.vocab.num_entities();
  ckpt.num_base_relations = data.vocab.num_relations();
  ckpt.params = std::move(result.params);
  ckpt.optimizer = std::move(result.optimizer);
  ckpt.epoch = config.train.keep_best ? result.best_epoch : result.epochs_run;
  ckpt.seed = config.seed;
  ckpt.rng_state = result.rng_state;
  save_checkpoint(ckpt, run / kCheckpointFile);
  std::cout << "epochs_run\t" << result.epochs_run << "\nbest_epoch\t"
            << result.best_epoch << "\nbest_valid_hits@10\t"
            << (result.log.empty() ? 0.0 : result.log[result.best_epoch - 1].valid_hits10)
            << '\n';
}

void cmd_fit_ensemble(const fs::path& run, const std::string& method) {
  const Dataset data = load_run_bundle(run);
  const RunConfig config = run_config_for(run);
  Checkpoint ckpt = load_trained(run, data);
  const FilterIndex filter = build_filter_index(data.store);
  const auto& meta_set = data.store.valid;
  if (method == "ai") {
    ckpt.has_average = true;
  } else if (method == "bi") {
    auto scores = modality_scores(ckpt.params, meta_set);
    ckpt.boosting = fit_rankboost(meta_set, scores, filter, config.rankboost).weights;
  } else if (method == "mi") {
    auto scores = modality_scores(ckpt.params, meta_set);
    ckpt.meta = fit_metalearner(meta_set, scores, filter, config.meta_learner);
  } else {
    throw ConfigError("unknown ensemble method '" + method + "'");
  }
  save_checkpoint(ckpt, run / kCheckpointFile);
  std::cout << "fitted\t" << method << '\n';
}

void cmd_evaluate(const fs::path& run, const std::string& inference,
                  const std::string& split_name) {
  const auto mode = InferenceMode::parse(inference);
  const Split split = parse_split(split_name);
  const Dataset data = load_run_bundle(run);
  const RunConfig config = run_config_for(run);
  const Checkpoint ckpt = load_trained(run, data);
  const FilterIndex filter = build_filter_index(data.store);
  const EnsembleModel ensemble = ensemble_of(ckpt);
  const auto report = evaluate(data.store.split(split), ckpt.params, filter, mode,
                               &ensemble, config.train.eval_batch_size);

  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  const auto path = run / "metrics.json";
  if (fs::exists(path)) {
    std::ifstream in(path);
    metrics = nlohmann::ordered_json::parse(in);
  }
  auto entry = to_json(report);
  for (const auto& [r, m] : report.by_relation) {
    entry["by_relation"][data.vocab.relation_label(r)] = to_json(m);
  }
  metrics[std::string(to_string(split))][mode.name()] = entry;
  std::ofstream(path) << metrics.dump(2) << '\n';
  std::cout << metrics_tsv(mode.name(), report);
}

void cmd_sweep(const fs::path& run, const std::string& grid_text,
               const std::string& split_name) {
  const auto grid = parse_grid(grid_text);
  for (double t : grid) {
    if (!(t > 0.0)) throw ConfigError("temperatures must be > 0");
  }
  const Split split = parse_split(split_name);
  const Dataset data = load_run_bundle(run);
  const RunConfig config = run_config_for(run);
  const FilterIndex filter = build_filter_index(data.store);
  const auto rows = temperature_sweep(data.store, filter, data.features,
                                      init_options(config, data), config.train, grid,
                                      split);
  const auto tsv = sweep_tsv(rows);
  std::ofstream(run / "temperature_sweep.tsv") << tsv;
  std::cout << tsv;
}

void cmd_export_weights(const fs::path& run, const std::string& out_path) {
  const Dataset data = load_run_bundle(run);
  const Checkpoint ckpt = load_trained(run, data);
  if (!ckpt.boosting) {
    throw StateError("no relation weights (run fit-ensemble --method bi first)");
  }
  const auto& w = *ckpt.boosting;
  std::ostringstream out;
  out << std::setprecision(17);
  for (RelationId r = 0; r < 2 * data.vocab.num_relations(); ++r) {
    const auto& weights = w.for_relation(r);
    out << data.vocab.relation_label(r);
    for (auto m : kAllModalities) {
      double value = 0.0;
      for (std::size_t i = 0; i < w.modalities.size(); ++i) {
        if (w.modalities[i] == m) value = weights[i];
      }
      out << '\t' << value;
    }
    out << '\n';
  }
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    std::ofstream(out_path) << out.str();
  }
}

void cmd_predict(const fs::path& run, const std::string& head,
                 const std::string& relation, std::size_t topk,
                 const std::string& inference) {
  const auto mode = InferenceMode::parse(inference);
  const Dataset data = load_run_bundle(run);
  const Checkpoint ckpt = load_trained(run, data);
  const EnsembleModel ensemble = ensemble_of(ckpt);
  const Triple query{data.vocab.entity_index(head), data.vocab.relation_slot(relation), 0};
  const Matrix scores = fused_scores(ckpt.params, std::span(&query, 1), mode, &ensemble);
  std::vector<EntityId> order(scores.cols);
  std::iota(order.begin(), order.end(), EntityId{0});
  const std::size_t k = std::min<std::size_t>(topk, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), [&](EntityId a, EntityId b) {
                      const double sa = scores(0, a), sb = scores(0, b);
                      return sa != sb ? sa > sb : a < b;
                    });
  std::cout << std::setprecision(10);
  for (std::size_t i = 0; i < k; ++i) {
    std::cout << i + 1 << '\t' << data.vocab.entity_name(order[i]) << '\t'
              << scores(0, order[i]) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modality-split multimodal knowledge graph completion"};
  app.require_subcommand(1);
  int threads = 0;
  if (const char* env = std::getenv("MOSE_THREADS")) threads = std::atoi(env);
  app.add_option("--threads", threads, "Worker thread cap (env MOSE_THREADS)");

  fs::path run, data_dir, out_dir;
  std::string config_path, method, inference = "ai", split = "test", grid = "0.5,1,2,4,8,16,32";
  std::string head, relation, out_file;
  std::size_t topk = 10;
  TrainOverrides overrides;

  auto* ingest = app.add_subcommand("ingest", "Parse a dataset into a run directory");
  ingest->add_option("--data", data_dir, "Dataset directory")->required();
  ingest->add_option("--out", run, "Run directory")->required();
  ingest->add_option("--config", config_path, "Config JSON");
  overrides.add_to(ingest);

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth::RandomKgOptions random_opts;
  synth::ComplementaryKgOptions comp_opts;
  auto* synth_random = synth_cmd->add_subcommand("random", "Random multimodal KG");
  synth_random->add_option("--seed", random_opts.seed);
  synth_random->add_option("--out", out_dir)->required();
  synth_random->add_option("--entities", random_opts.num_entities);
  synth_random->add_option("--relations", random_opts.num_relations);
  synth_random->add_option("--triples", random_opts.num_triples);
  synth_random->add_option("--feature-dim", random_opts.feature_dim);
  auto* synth_comp = synth_cmd->add_subcommand("complementary",
                                               "KG with modality-planted relations");
  synth_comp->add_option("--seed", comp_opts.seed);
  synth_comp->add_option("--out", out_dir)->required();
  synth_comp->add_option("--entities", comp_opts.num_entities);
  synth_comp->add_option("--relations", comp_opts.num_relations);
  synth_comp->add_option("--cycle-length", comp_opts.cycle_length);
  synth_comp->add_option("--code-dim", comp_opts.code_dim);
  synth_comp->add_option("--noise-dims", comp_opts.noise_dims);
  synth_comp->add_option("--structure-triples", comp_opts.structure_triples);
  synth_cmd->require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train modality-split embeddings");
  train->add_option("--run", run)->required();
  train->add_option("--config", config_path, "Config JSON overlaid on the run config");
  overrides.add_to(train);

  auto* fit_ens = app.add_subcommand("fit-ensemble", "Fit ensemble weights on valid");
  fit_ens->add_option("--run", run)->required();
  fit_ens->add_option("--method", method)->required()->check(CLI::IsMember({"ai", "bi", "mi"}));

  auto* eval = app.add_subcommand("evaluate", "Filtered ranking metrics");
  eval->add_option("--run", run)->required();
  eval->add_option("--inference", inference);
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "valid", "test"}));

  auto* sweep = app.add_subcommand("sweep-temperature", "Retrain across temperatures");
  sweep->add_option("--run", run)->required();
  sweep->add_option("--grid", grid);
  sweep->add_option("--split", split)->check(CLI::IsMember({"train", "valid", "test"}));

  auto* export_w = app.add_subcommand("export-weights", "Relation weights as TSV");
  export_w->add_option("--run", run)->required();
  export_w->add_option("--out", out_file);

  auto* predict = app.add_subcommand("predict", "Top-k tails for (head, relation)");
  predict->add_option("--run", run)->required();
  predict->add_option("--head", head)->required();
  predict->add_option("--relation", relation)->required();
  predict->add_option("--topk", topk);
  predict->add_option("--inference", inference);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage_error", e.what());
    return 1;
  }

  try {
    kernels::set_num_threads(threads);
    if (*ingest) cmd_ingest(data_dir, run, config_path, overrides);
    else if (*synth_random) synth::generate_random_kg(random_opts, out_dir);
    else if (*synth_comp) synth::generate_complementary_kg(comp_opts, out_dir);
    else if (*train) cmd_train(run, config_path, overrides);
    else if (*fit_ens) cmd_fit_ensemble(run, method);
    else if (*eval) cmd_evaluate(run, inference, split);
    else if (*sweep) cmd_sweep(run, grid, split);
    else if (*export_w) cmd_export_weights(run, out_file);
    else if (*predict) cmd_predict(run, head, relation, topk, inference);
  } catch (const Error& e) {
    report_error(to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    report_error("format_error", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error("error", e.what());
    return 2;
  }
  return 0;
}
