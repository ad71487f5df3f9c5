#include "mose/kg.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mose/error.hpp"

namespace mose {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse_error";
    case ErrorKind::kVocabulary: return "vocabulary_error";
    case ErrorKind::kFormat: return "format_error";
    case ErrorKind::kConfig: return "config_error";
    case ErrorKind::kState: return "state_error";
    case ErrorKind::kShape: return "shape_error";
    case ErrorKind::kIndex: return "index_error";
    case ErrorKind::kNumeric: return "numeric_error";
  }
  return "error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kState:
      return 1;
    case ErrorKind::kNumeric:
      return 3;
    default:
      return 2;
  }
}

EntityId Vocabulary::add_entity(std::string_view name) {
  auto [it, inserted] = entity_ids_.try_emplace(
      std::string(name), static_cast<EntityId>(entity_names_.size()));
  if (inserted) entity_names_.emplace_back(name);
  return it->second;
}

RelationId Vocabulary::add_relation(std::string_view name) {
  auto [it, inserted] = relation_ids_.try_emplace(
      std::string(name), static_cast<RelationId>(relation_names_.size()));
  if (inserted) relation_names_.emplace_back(name);
  return it->second;
}

std::optional<EntityId> Vocabulary::find_entity(std::string_view name) const {
  auto it = entity_ids_.find(std::string(name));
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> Vocabulary::find_relation(
    std::string_view name) const {
  auto it = relation_ids_.find(std::string(name));
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

EntityId Vocabulary::entity_index(std::string_view name) const {
  if (auto id = find_entity(name)) return *id;
  throw VocabularyError("unknown entity '" + std::string(name) + "'");
}

RelationId Vocabulary::relation_index(std::string_view name) const {
  if (auto id = find_relation(name)) return *id;
  throw VocabularyError("unknown relation '" + std::string(name) + "'");
}

const std::string& Vocabulary::entity_name(EntityId id) const {
  if (id >= entity_names_.size()) {
    throw IndexError("entity id " + std::to_string(id) + " out of range");
  }
  return entity_names_[id];
}

const std::string& Vocabulary::relation_name(RelationId id) const {
  if (id >= relation_names_.size()) {
    throw IndexError("relation id " + std::to_string(id) + " out of range");
  }
  return relation_names_[id];
}

std::string Vocabulary::relation_label(RelationId slot) const {
  const auto n = relation_names_.size();
  if (slot < n) return relation_names_[slot];
  if (slot < 2 * n) {
    return relation_names_[slot - n] + std::string(kReciprocalSuffix);
  }
  throw IndexError("relation slot " + std::to_string(slot) + " out of range");
}

RelationId Vocabulary::relation_slot(std::string_view label) const {
  if (auto id = find_relation(label)) return *id;
  if (label.ends_with(kReciprocalSuffix)) {
    auto base = label.substr(0, label.size() - kReciprocalSuffix.size());
    if (auto id = find_relation(base)) {
      return *id + static_cast<RelationId>(relation_names_.size());
    }
  }
  throw VocabularyError("unknown relation '" + std::string(label) + "'");
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::vector<Triple> parse_triples(std::istream& in, Vocabulary& vocab,
                                  VocabMode mode, std::string_view source) {
  std::vector<Triple> triples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3) {
      std::ostringstream msg;
      msg << source << ":" << line_no << ": expected 3 tab-separated fields, got "
          << fields.size();
      throw ParseError(msg.str());
    }
    for (auto f : fields) {
      if (f.empty()) {
        throw ParseError(std::string(source) + ":" + std::to_string(line_no) +
                         ": empty field");
      }
    }
    Triple t;
    if (mode == VocabMode::kExtend) {
      t.head = vocab.add_entity(fields[0]);
      t.relation = vocab.add_relation(fields[1]);
      t.tail = vocab.add_entity(fields[2]);
    } else {
      try {
        t.head = vocab.entity_index(fields[0]);
        t.relation = vocab.relation_index(fields[1]);
        t.tail = vocab.entity_index(fields[2]);
      } catch (const VocabularyError& e) {
        throw VocabularyError(std::string(source) + ":" +
                              std::to_string(line_no) + ": " + e.what());
      }
    }
    triples.push_back(t);
  }
  return triples;
}

std::vector<Triple> parse_triples_file(const std::filesystem::path& path,
                                       Vocabulary& vocab, VocabMode mode) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_triples(in, vocab, mode, path.string());
}

void write_triples(std::ostream& out, std::span<const Triple> triples,
                   const Vocabulary& vocab) {
  for (const auto& t : triples) {
    out << vocab.entity_name(t.head) << '\t' << vocab.relation_label(t.relation)
        << '\t' << vocab.entity_name(t.tail) << '\n';
  }
}

namespace {

void write_names(const std::filesystem::path& path,
                 const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << names[i] << '\t' << i << '\n';
  }
}

std::vector<std::string> read_names(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::string> names;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected name<TAB>id");
    }
    if (fields[1] != std::to_string(names.size())) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": ids must be dense and in order");
    }
    names.emplace_back(fields[0]);
  }
  return names;
}

}  // namespace

void write_vocabulary(const std::filesystem::path& dir,
                      const Vocabulary& vocab) {
  write_names(dir / "entities.tsv", vocab.entity_names());
  write_names(dir / "relations.tsv", vocab.relation_names());
}

Vocabulary read_vocabulary(const std::filesystem::path& dir) {
  Vocabulary vocab;
  for (const auto& n : read_names(dir / "entities.tsv")) {
    if (vocab.find_entity(n)) throw ParseError("duplicate entity " + n);
    vocab.add_entity(n);
  }
  for (const auto& n : read_names(dir / "relations.tsv")) {
    if (vocab.find_relation(n)) throw ParseError("duplicate relation " + n);
    vocab.add_relation(n);
  }
  return vocab;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

const std::vector<Triple>& TripleStore::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kValid: return valid;
    case Split::kTest: return test;
  }
  return test;
}

TripleStore augment_reciprocals(TripleStore store, const Vocabulary& vocab) {
  if (store.augmented) throw StateError("triple store already augmented");
  const auto n = vocab.num_relations();
  auto augment = [&](std::vector<Triple>& triples) {
    const auto original = triples.size();
    triples.reserve(2 * original);
    for (std::size_t i = 0; i < original; ++i) {
      const Triple t = triples[i];
      if (t.relation >= n) {
        throw StateError("relation id " + std::to_string(t.relation) +
                         " is not a base relation");
      }
      triples.push_back({t.tail, reciprocal(t.relation, n), t.head});
    }
  };
  augment(store.train);
  augment(store.valid);
  augment(store.test);
  store.augmented = true;
  return store;
}

FilterIndex::FilterIndex(const TripleStore& store) {
  for (const auto* split : {&store.train, &store.valid, &store.test}) {
    for (const auto& t : *split) index_[key(t.head, t.relation)].push_back(t.tail);
  }
  for (auto& [k, tails] : index_) {
    std::sort(tails.begin(), tails.end());
    tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
  }
}

std::span<const EntityId> FilterIndex::tails(EntityId head,
                                             RelationId relation) const {
  auto it = index_.find(key(head, relation));
  if (it == index_.end()) return {};
  return it->second;
}

bool FilterIndex::contains(EntityId head, RelationId relation,
                           EntityId tail) const {
  auto t = tails(head, relation);
  return std::binary_search(t.begin(), t.end(), tail);
}

FilterIndex build_filter_index(const TripleStore& store) {
  if (!store.augmented) {
    throw StateError("filter index requires a reciprocal-augmented store");
  }
  return FilterIndex(store);
}

}  // namespace mose
