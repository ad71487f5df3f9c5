#pragma once

#include <cstdint>
#include <filesystem>

namespace mose::synth {

struct RandomKgOptions {
  std::uint64_t seed = 7;
  std::size_t num_entities = 50;
  std::size_t num_relations = 5;
  std::size_t num_triples = 300;
  std::size_t feature_dim = 16;
};

/// Writes train/valid/test.tsv (80/10/10, no duplicate triples), Gaussian
/// visual.msef / text.msef, entities.tsv, relations.tsv and manifest.json.
void generate_random_kg(const RandomKgOptions& options,
                        const std::filesystem::path& dir);

struct ComplementaryKgOptions {
  std::uint64_t seed = 7;
  std::size_t num_entities = 128;
  /// Relation 0 is planted in visual features, relation 1 in text features,
  /// the rest are random structure-only triples.
  std::size_t num_relations = 3;
  std::size_t cycle_length = 8;
  std::size_t code_dim = 8;       // complex components of the planted code
  std::size_t noise_dims = 0;     // extra Gaussian feature columns
  std::size_t structure_triples = 64;
};

/// Each entity carries a unit-modulus complex code per modality. Entities
/// form cycles under a fixed rotation of the visual code (relation 0) and of
/// an independent text code (relation 1), so tails of the planted relations
/// follow from the features through a linear map.
void generate_complementary_kg(const ComplementaryKgOptions& options,
                               const std::filesystem::path& dir);

}  // namespace mose::synth
