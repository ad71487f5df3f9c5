#include "mose/run.hpp"

#include <algorithm>
#include <fstream>

#include "binary_io.hpp"
#include "mose/error.hpp"
#include "mose/features.hpp"

namespace mose {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kBundleVersion = 1;

std::shared_ptr<const FeatureMatrix> load_optional_features(
    const fs::path& path, std::size_t num_entities) {
  if (!fs::exists(path)) return nullptr;
  auto features = load_feature_file(path);
  validate_features(features, num_entities, path.string());
  return std::make_shared<const FeatureMatrix>(std::move(features));
}

}  // namespace

Dataset load_dataset_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("no dataset directory " + dir.string());
  Dataset data;
  VocabMode mode = VocabMode::kExtend;
  if (fs::exists(dir / "entities.tsv") && fs::exists(dir / "relations.tsv")) {
    data.vocab = read_vocabulary(dir);
    mode = VocabMode::kStrict;
  }
  TripleStore store;
  store.train = parse_triples_file(dir / "train.tsv", data.vocab, mode);
  store.valid = parse_triples_file(dir / "valid.tsv", data.vocab, mode);
  store.test = parse_triples_file(dir / "test.tsv", data.vocab, mode);
  data.store = augment_reciprocals(std::move(store), data.vocab);
  data.features.visual =
      load_optional_features(dir / "visual.msef", data.vocab.num_entities());
  data.features.text =
      load_optional_features(dir / "text.msef", data.vocab.num_entities());
  return data;
}

void write_run_bundle(const Dataset& dataset, const fs::path& run_dir) {
  fs::create_directories(run_dir);
  write_vocabulary(run_dir, dataset.vocab);
  std::ofstream out(run_dir / "bundle.bin", std::ios::binary);
  if (!out) throw FormatError("cannot write " + (run_dir / "bundle.bin").string());
  detail::write_magic(out, "MSEB");
  detail::write_le<std::uint32_t>(out, kBundleVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.vocab.num_entities()));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.vocab.num_relations()));
  for (const auto* split : {&dataset.store.train, &dataset.store.valid, &dataset.store.test}) {
    detail::write_le<std::uint64_t>(out, split->size());
    for (const auto& t : *split) {
      detail::write_le<std::uint32_t>(out, t.head);
      detail::write_le<std::uint32_t>(out, t.relation);
      detail::write_le<std::uint32_t>(out, t.tail);
    }
  }
  if (!out) throw FormatError("write failed for bundle.bin");
  if (dataset.features.visual) write_feature_file(*dataset.features.visual, run_dir / "visual.msef");
  if (dataset.features.text) write_feature_file(*dataset.features.text, run_dir / "text.msef");
}

Dataset load_run_bundle(const fs::path& run_dir) {
  const auto path = run_dir / "bundle.bin";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("no run bundle at " + run_dir.string() + " (run ingest first)");
  const std::string what = path.string();
  detail::expect_magic(in, "MSEB", what);
  if (detail::read_le<std::uint32_t>(in, what) != kBundleVersion) {
    throw FormatError(what + ": unsupported bundle version");
  }
  Dataset data;
  data.vocab = read_vocabulary(run_dir);
  const auto ne = detail::read_le<std::uint32_t>(in, what);
  const auto nr = detail::read_le<std::uint32_t>(in, what);
  if (ne != data.vocab.num_entities() || nr != data.vocab.num_relations()) {
    throw FormatError(what + ": vocabulary size mismatch");
  }
  for (auto* split : {&data.store.train, &data.store.valid, &data.store.test}) {
    const auto count = detail::read_le<std::uint64_t>(in, what);
    split->reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      Triple t;
      t.head = detail::read_le<std::uint32_t>(in, what);
      t.relation = detail::read_le<std::uint32_t>(in, what);
      t.tail = detail::read_le<std::uint32_t>(in, what);
      if (t.head >= ne || t.tail >= ne || t.relation >= 2 * nr) {
        throw FormatError(what + ": triple id out of range");
      }
      split->push_back(t);
    }
  }
  data.store.augmented = true;
  data.features.visual = load_optional_features(run_dir / "visual.msef", ne);
  data.features.text = load_optional_features(run_dir / "text.msef", ne);
  return data;
}

void RunConfig::propagate_seed() {
  train.seed = seed;
  rankboost.seed = seed;
  meta_learner.seed = seed;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  auto& t = j["train"];
  t["dim"] = c.train.dim;
  t["learning_rate"] = c.train.learning_rate;
  t["batch_size"] = c.train.batch_size;
  t["max_epochs"] = c.train.max_epochs;
  t["temperature"] = c.train.temperature;
  t["n3_weight"] = c.train.n3_weight;
  t["tie_relations"] = c.train.tie_relations;
  t["patience"] = c.train.patience;
  t["keep_best"] = c.train.keep_best;
  t["init_scale"] = c.train.init_scale;
  t["modalities"] = nlohmann::ordered_json::array();
  for (auto m : c.train.modalities) t["modalities"].push_back(std::string(to_string(m)));
  for (auto m : kAllModalities) {
    t["loss_terms"][std::string(to_string(m))] = c.train.loss_terms[index_of(m)];
  }
  t["eval_batch_size"] = c.train.eval_batch_size;
  auto& b = j["rankboost"];
  b["max_pairs_per_query"] = c.rankboost.max_pairs_per_query;
  b["epsilon"] = c.rankboost.epsilon;
  auto& m = j["meta_learner"];
  m["hidden"] = c.meta_learner.hidden;
  m["learning_rate"] = c.meta_learner.learning_rate;
  m["epochs"] = c.meta_learner.epochs;
  m["batch_size"] = c.meta_learner.batch_size;
  m["patience"] = c.meta_learner.patience;
  m["init_scale"] = c.meta_learner.init_scale;
  return j;
}

namespace {

template <typename T>
void overlay(const nlohmann::json& obj, const char* key, T& field) {
  if (obj.contains(key)) field = obj.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& obj,
                    std::initializer_list<std::string_view> known,
                    const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config key '" + where + key + "'");
    }
  }
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  try {
    reject_unknown(j, {"seed", "threads", "train", "rankboost", "meta_learner"}, "");
    overlay(j, "seed", c.seed);
    overlay(j, "threads", c.threads);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown(t,
                     {"dim", "learning_rate", "batch_size", "max_epochs", "temperature",
                      "n3_weight", "tie_relations", "patience", "keep_best", "init_scale",
                      "modalities", "loss_terms", "eval_batch_size"},
                     "train.");
      overlay(t, "dim", c.train.dim);
      overlay(t, "learning_rate", c.train.learning_rate);
      overlay(t, "batch_size", c.train.batch_size);
      overlay(t, "max_epochs", c.train.max_epochs);
      overlay(t, "temperature", c.train.temperature);
      overlay(t, "n3_weight", c.train.n3_weight);
      overlay(t, "tie_relations", c.train.tie_relations);
      overlay(t, "patience", c.train.patience);
      overlay(t, "keep_best", c.train.keep_best);
      overlay(t, "init_scale", c.train.init_scale);
      overlay(t, "eval_batch_size", c.train.eval_batch_size);
      if (t.contains("modalities")) {
        c.train.modalities.clear();
        for (const auto& name : t.at("modalities")) {
          c.train.modalities.push_back(parse_modality(name.get<std::string>()));
        }
      }
      if (t.contains("loss_terms")) {
        const auto& lt = t.at("loss_terms");
        reject_unknown(lt, {"structure", "visual", "text"}, "train.loss_terms.");
        for (auto m : kAllModalities) {
          overlay(lt, std::string(to_string(m)).c_str(), c.train.loss_terms[index_of(m)]);
        }
      }
    }
    if (j.contains("rankboost")) {
      const auto& b = j.at("rankboost");
      reject_unknown(b, {"max_pairs_per_query", "epsilon"}, "rankboost.");
      overlay(b, "max_pairs_per_query", c.rankboost.max_pairs_per_query);
      overlay(b, "epsilon", c.rankboost.epsilon);
    }
    if (j.contains("meta_learner")) {
      const auto& m = j.at("meta_learner");
      reject_unknown(m,
                     {"hidden", "learning_rate", "epochs", "batch_size", "patience",
                      "init_scale"},
                     "meta_learner.");
      overlay(m, "hidden", c.meta_learner.hidden);
      overlay(m, "learning_rate", c.meta_learner.learning_rate);
      overlay(m, "epochs", c.meta_learner.epochs);
      overlay(m, "batch_size", c.meta_learner.batch_size);
      overlay(m, "patience", c.meta_learner.patience);
      overlay(m, "init_scale", c.meta_learner.init_scale);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.propagate_seed();
  c.train.validate();
  if (c.meta_learner.hidden < 1) throw ConfigError("meta_learner.hidden must be >= 1");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return run_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
}

void save_run_config(const RunConfig& config, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

InitOptions init_options(const RunConfig& config, const Dataset& dataset) {
  InitOptions init;
  init.seed = config.train.seed;
  init.dim = config.train.dim;
  init.num_entities = dataset.vocab.num_entities();
  init.num_relation_slots = 2 * dataset.vocab.num_relations();
  init.modalities = config.train.modalities;
  init.tie_relations = config.train.tie_relations;
  init.scale = config.train.init_scale;
  return init;
}

}  // namespace mose
