#include "mose/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mose/error.hpp"
#include "mose/features.hpp"
#include "mose/kg.hpp"

namespace mose::synth {

namespace {

std::string entity_name(std::size_t i) { return "e" + std::to_string(i); }

Vocabulary make_vocab(std::size_t num_entities,
                      const std::vector<std::string>& relations) {
  Vocabulary vocab;
  for (std::size_t i = 0; i < num_entities; ++i) vocab.add_entity(entity_name(i));
  for (const auto& r : relations) vocab.add_relation(r);
  return vocab;
}

void write_split(const std::filesystem::path& path, const std::vector<Triple>& t,
                 const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_triples(out, t, vocab);
}

struct Splits {
  std::vector<Triple> train, valid, test;
};

// 80/10/10 with at least one triple in valid and test.
void split_into(std::vector<Triple> triples, Splits& out) {
  const std::size_t n = triples.size();
  const std::size_t n_eval = std::max<std::size_t>(1, n / 10);
  if (n < 2 * n_eval + 1) {
    throw ConfigError("too few triples to fill train/valid/test");
  }
  const std::size_t n_train = n - 2 * n_eval;
  out.train.insert(out.train.end(), triples.begin(), triples.begin() + n_train);
  out.valid.insert(out.valid.end(), triples.begin() + n_train,
                   triples.begin() + n_train + n_eval);
  out.test.insert(out.test.end(), triples.begin() + n_train + n_eval, triples.end());
}

void write_dataset(const std::filesystem::path& dir, const Vocabulary& vocab,
                   const Splits& splits, const FeatureMatrix& visual,
                   const FeatureMatrix& text, const nlohmann::ordered_json& manifest) {
  std::filesystem::create_directories(dir);
  write_split(dir / "train.tsv", splits.train, vocab);
  write_split(dir / "valid.tsv", splits.valid, vocab);
  write_split(dir / "test.tsv", splits.test, vocab);
  write_vocabulary(dir, vocab);
  write_feature_file(visual, dir / "visual.msef");
  write_feature_file(text, dir / "text.msef");
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

FeatureMatrix gaussian_features(std::mt19937_64& rng, std::size_t rows,
                                std::size_t cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  FeatureMatrix f(rows, cols);
  // Stored as float32 on disk; round now so in-memory and on-disk agree.
  for (auto& v : f.data) v = static_cast<float>(normal(rng));
  return f;
}

}  // namespace

void generate_random_kg(const RandomKgOptions& options,
                        const std::filesystem::path& dir) {
  if (options.num_triples == 0) throw ConfigError("num_triples must be > 0");
  if (options.num_entities == 0 || options.num_relations == 0) {
    throw ConfigError("need at least one entity and one relation");
  }
  if (options.feature_dim == 0) throw ConfigError("feature_dim must be > 0");
  const double capacity = static_cast<double>(options.num_entities) *
                          static_cast<double>(options.num_entities) *
                          static_cast<double>(options.num_relations);
  if (static_cast<double>(options.num_triples) > capacity) {
    throw ConfigError("num_triples exceeds entities^2 * relations");
  }

  std::vector<std::string> relations;
  for (std::size_t r = 0; r < options.num_relations; ++r) {
    relations.push_back("r" + std::to_string(r));
  }
  const Vocabulary vocab = make_vocab(options.num_entities, relations);

  std::mt19937_64 rng(options.seed);
  std::vector<Triple> triples;
  const auto total = static_cast<std::uint64_t>(capacity);
  auto decode = [&](std::uint64_t code) {
    const auto ne = options.num_entities;
    Triple t;
    t.tail = static_cast<EntityId>(code % ne);
    code /= ne;
    t.relation = static_cast<RelationId>(code % options.num_relations);
    t.head = static_cast<EntityId>(code / options.num_relations);
    return t;
  };
  if (2 * options.num_triples > total) {
    std::vector<std::uint64_t> codes(total);
    std::iota(codes.begin(), codes.end(), std::uint64_t{0});
    std::shuffle(codes.begin(), codes.end(), rng);
    for (std::size_t i = 0; i < options.num_triples; ++i) triples.push_back(decode(codes[i]));
  } else {
    std::set<std::uint64_t> seen;
    std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
    while (triples.size() < options.num_triples) {
      const auto code = pick(rng);
      if (seen.insert(code).second) triples.push_back(decode(code));
    }
  }

  Splits splits;
  split_into(std::move(triples), splits);
  const auto visual = gaussian_features(rng, options.num_entities, options.feature_dim);
  const auto text = gaussian_features(rng, options.num_entities, options.feature_dim);

  nlohmann::ordered_json manifest;
  manifest["kind"] = "random";
  manifest["seed"] = options.seed;
  manifest["num_entities"] = options.num_entities;
  manifest["num_relations"] = options.num_relations;
  manifest["num_triples"] = options.num_triples;
  manifest["feature_dim"] = options.feature_dim;
  manifest["splits"] = {{"train", splits.train.size()},
                        {"valid", splits.valid.size()},
                        {"test", splits.test.size()}};
  write_dataset(dir, vocab, splits, visual, text, manifest);
}

namespace {

struct PlantedCode {
  std::vector<EntityId> successor;       // relation tail per head
  std::vector<int> rotation;             // integer phase steps per component
  FeatureMatrix features;
};

// Entities are placed on cycles through a random permutation; entity at
// (cycle c, position j) has code a_c * rho^j with rho_k = exp(2 pi i m_k / L).
PlantedCode plant_code(std::mt19937_64& rng, const ComplementaryKgOptions& o) {
  const std::size_t n = o.num_entities;
  const std::size_t len = o.cycle_length;
  const std::size_t k = o.code_dim;
  PlantedCode code;
  std::vector<EntityId> order(n);
  std::iota(order.begin(), order.end(), EntityId{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::uniform_int_distribution<int> step(1, static_cast<int>(len) - 1);
  code.rotation.resize(k);
  for (std::size_t c = 0; c < k; ++c) code.rotation[c] = c == 0 ? 1 : step(rng);

  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t cycles = n / len;
  std::vector<std::vector<double>> base(cycles, std::vector<double>(k));
  for (auto& b : base) {
    for (auto& p : b) p = phase(rng);
  }

  code.successor.resize(n);
  code.features = FeatureMatrix(n, 2 * k + o.noise_dims);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i / len, j = i % len;
    const EntityId e = order[i];
    code.successor[e] = order[c * len + (j + 1) % len];
    auto row = code.features.row(e);
    for (std::size_t d = 0; d < k; ++d) {
      const double angle = base[c][d] + 2.0 * std::numbers::pi *
                                            code.rotation[d] * static_cast<double>(j) /
                                            static_cast<double>(len);
      row[d] = static_cast<float>(std::cos(angle));
      row[k + d] = static_cast<float>(std::sin(angle));
    }
    for (std::size_t d = 0; d < o.noise_dims; ++d) {
      row[2 * k + d] = static_cast<float>(normal(rng));
    }
  }
  return code;
}

}  // namespace

void generate_complementary_kg(const ComplementaryKgOptions& options,
                               const std::filesystem::path& dir) {
  if (options.num_relations < 2) throw ConfigError("need at least 2 relations");
  if (options.cycle_length < 2) throw ConfigError("cycle_length must be >= 2");
  if (options.code_dim < 1) throw ConfigError("code_dim must be >= 1");
  if (options.num_entities < options.cycle_length ||
      options.num_entities % options.cycle_length != 0) {
    throw ConfigError("num_entities must be a positive multiple of cycle_length");
  }
  if (options.num_entities < 10) throw ConfigError("need at least 10 entities");

  std::vector<std::string> relations = {"visual_rel", "text_rel"};
  for (std::size_t r = 2; r < options.num_relations; ++r) {
    relations.push_back("struct_rel" + std::to_string(r - 2));
  }
  const Vocabulary vocab = make_vocab(options.num_entities, relations);

  std::mt19937_64 rng(options.seed);
  const auto visual = plant_code(rng, options);
  const auto text = plant_code(rng, options);

  Splits splits;
  for (RelationId r = 0; r < 2; ++r) {
    const auto& successor = (r == 0 ? visual : text).successor;
    std::vector<Triple> planted;
    for (EntityId e = 0; e < options.num_entities; ++e) {
      planted.push_back({e, r, successor[e]});
    }
    std::shuffle(planted.begin(), planted.end(), rng);
    split_into(std::move(planted), splits);
  }
  // Random structure-only facts, all in train.
  if (options.num_relations > 2 && options.structure_triples > 0) {
    std::set<Triple> taken(splits.train.begin(), splits.train.end());
    std::uniform_int_distribution<EntityId> ent(
        0, static_cast<EntityId>(options.num_entities - 1));
    std::uniform_int_distribution<RelationId> rel(
        2, static_cast<RelationId>(options.num_relations - 1));
    const std::size_t cap = options.num_entities * options.num_entities *
                            (options.num_relations - 2);
    const std::size_t want = std::min(options.structure_triples, cap);
    std::size_t added = 0;
    while (added < want) {
      Triple t{ent(rng), rel(rng), ent(rng)};
      if (taken.insert(t).second) {
        splits.train.push_back(t);
        ++added;
      }
    }
  }

  nlohmann::ordered_json manifest;
  manifest["kind"] = "complementary";
  manifest["seed"] = options.seed;
  manifest["num_entities"] = options.num_entities;
  manifest["num_relations"] = options.num_relations;
  manifest["cycle_length"] = options.cycle_length;
  manifest["code_dim"] = options.code_dim;
  manifest["noise_dims"] = options.noise_dims;
  manifest["visual_relation"] = relations[0];
  manifest["text_relation"] = relations[1];
  manifest["visual_rotation_steps"] = visual.rotation;
  manifest["text_rotation_steps"] = text.rotation;
  manifest["splits"] = {{"train", splits.train.size()},
                        {"valid", splits.valid.size()},
                        {"test", splits.test.size()}};
  write_dataset(dir, vocab, splits, visual.features, text.features, manifest);
}

}  // namespace mose::synth
