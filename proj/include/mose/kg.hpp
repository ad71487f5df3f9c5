#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mose {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

/// Suffix used when printing the reciprocal of a base relation.
inline constexpr std::string_view kReciprocalSuffix = "^-1";

/// Dense 0-based name <-> id maps for entities and base relations. Ids are
/// assigned in first-insertion order, so identical inputs give identical ids.
class Vocabulary {
 public:
  EntityId add_entity(std::string_view name);
  RelationId add_relation(std::string_view name);

  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;
  EntityId entity_index(std::string_view name) const;
  RelationId relation_index(std::string_view name) const;

  const std::string& entity_name(EntityId id) const;
  const std::string& relation_name(RelationId id) const;

  std::size_t num_entities() const { return entity_names_.size(); }
  std::size_t num_relations() const { return relation_names_.size(); }
  const std::vector<std::string>& entity_names() const { return entity_names_; }
  const std::vector<std::string>& relation_names() const {
    return relation_names_;
  }

  /// Name of a possibly-reciprocal relation slot (r >= |R| prints as
  /// "<base>^-1").
  std::string relation_label(RelationId slot) const;
  /// Inverse of relation_label.
  RelationId relation_slot(std::string_view label) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.entity_names_ == b.entity_names_ &&
           a.relation_names_ == b.relation_names_;
  }

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, EntityId> entity_ids_;
  std::unordered_map<std::string, RelationId> relation_ids_;
};

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

enum class VocabMode { kExtend, kStrict };

/// Parses `head<TAB>relation<TAB>tail` lines. Empty lines are skipped;
/// duplicates are preserved.
std::vector<Triple> parse_triples(std::istream& in, Vocabulary& vocab,
                                  VocabMode mode,
                                  std::string_view source = "<stream>");
std::vector<Triple> parse_triples_file(const std::filesystem::path& path,
                                       Vocabulary& vocab, VocabMode mode);

void write_triples(std::ostream& out, std::span<const Triple> triples,
                   const Vocabulary& vocab);

/// Vocabulary export as `name<TAB>id` per line.
void write_vocabulary(const std::filesystem::path& dir, const Vocabulary& vocab);
/// Reads entities.tsv / relations.tsv written by write_vocabulary. Ids must be
/// dense and listed in order.
Vocabulary read_vocabulary(const std::filesystem::path& dir);

enum class Split { kTrain, kValid, kTest };
std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct TripleStore {
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
  bool augmented = false;

  const std::vector<Triple>& split(Split s) const;
};

/// Adds (t, r + |R|, h) for every (h, r, t) in every split.
TripleStore augment_reciprocals(TripleStore store, const Vocabulary& vocab);

/// Maps a relation slot to its reciprocal slot and back.
inline RelationId reciprocal(RelationId r, std::size_t num_base_relations) {
  const auto n = static_cast<RelationId>(num_base_relations);
  return r < n ? r + n : r - n;
}

/// Known-true tails per (head, relation) over train, valid and test.
class FilterIndex {
 public:
  FilterIndex() = default;
  explicit FilterIndex(const TripleStore& store);

  /// Sorted, deduplicated tails. Empty for absent keys.
  std::span<const EntityId> tails(EntityId head, RelationId relation) const;
  bool contains(EntityId head, RelationId relation, EntityId tail) const;
  std::size_t num_keys() const { return index_.size(); }

 private:
  static std::uint64_t key(EntityId h, RelationId r) {
    return (static_cast<std::uint64_t>(h) << 32) | r;
  }
  std::unordered_map<std::uint64_t, std::vector<EntityId>> index_;
};

FilterIndex build_filter_index(const TripleStore& store);

}  // namespace mose
