#include "mose/params.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mose/error.hpp"
#include "mose/kernels.hpp"

namespace mose {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kStructure: return "structure";
    case Modality::kVisual: return "visual";
    case Modality::kText: return "text";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  for (auto m : kAllModalities) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

const FeatureMatrix* FeatureBank::get(Modality m) const {
  switch (m) {
    case Modality::kVisual: return visual.get();
    case Modality::kText: return text.get();
    default: return nullptr;
  }
}

namespace {

std::vector<Modality> canonical(std::vector<Modality> modalities) {
  std::sort(modalities.begin(), modalities.end());
  modalities.erase(std::unique(modalities.begin(), modalities.end()),
                   modalities.end());
  return modalities;
}

}  // namespace

void ModelParams::build_layout(const std::vector<Modality>& modalities,
                               bool tied, std::size_t cols_visual,
                               std::size_t cols_text) {
  tensors_.clear();
  names_.clear();
  entity_slot_ = {-1, -1, -1};
  relation_slot_ = {-1, -1, -1};
  tied_ = tied;
  const std::size_t width = 2 * dim_;
  for (auto m : modalities) {
    entity_slot_[index_of(m)] = static_cast<int>(tensors_.size());
    switch (m) {
      case Modality::kStructure:
        tensors_.emplace_back(num_entities_, width);
        names_.emplace_back("structure.entities");
        break;
      case Modality::kVisual:
        tensors_.emplace_back(width, cols_visual);
        names_.emplace_back("visual.projection");
        break;
      case Modality::kText:
        tensors_.emplace_back(width, cols_text);
        names_.emplace_back("text.projection");
        break;
    }
  }
  if (tied) {
    const int slot = static_cast<int>(tensors_.size());
    tensors_.emplace_back(num_relation_slots_, width);
    names_.emplace_back("relations.shared");
    for (auto m : modalities) relation_slot_[index_of(m)] = slot;
  } else {
    for (auto m : modalities) {
      relation_slot_[index_of(m)] = static_cast<int>(tensors_.size());
      tensors_.emplace_back(num_relation_slots_, width);
      names_.push_back(std::string(to_string(m)) + ".relations");
    }
  }
}

ModelParams ModelParams::initialize(const InitOptions& options,
                                    const FeatureBank& features) {
  if (options.dim < 1) throw ConfigError("embedding dimension must be >= 1");
  if (options.num_entities == 0) throw ConfigError("no entities");
  if (options.num_relation_slots == 0) throw ConfigError("no relations");
  auto modalities = canonical(options.modalities);
  if (modalities.empty()) throw ConfigError("no modalities requested");
  std::size_t cols[kNumModalities] = {0, 0, 0};
  for (auto m : modalities) {
    if (m == Modality::kStructure) continue;
    const auto* f = features.get(m);
    if (f == nullptr) {
      throw ConfigError(std::string(to_string(m)) +
                        " modality requested without a feature matrix");
    }
    validate_features(*f, options.num_entities,
                      std::string(to_string(m)) + " features");
    cols[index_of(m)] = f->cols;
  }

  ModelParams params;
  params.dim_ = options.dim;
  params.num_entities_ = options.num_entities;
  params.num_relation_slots_ = options.num_relation_slots;
  params.features_ = features;
  params.build_layout(modalities, options.tie_relations,
                      cols[index_of(Modality::kVisual)],
                      cols[index_of(Modality::kText)]);

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& t : params.tensors_) {
    for (auto& v : t.data) v = normal(rng) * options.scale;
  }
  return params;
}

std::vector<std::string> ModelParams::tensor_layout(
    std::vector<Modality> modalities, bool tied) {
  ModelParams layout;
  layout.build_layout(canonical(std::move(modalities)), tied, 0, 0);
  return layout.names_;
}

ModelParams ModelParams::from_tensors(std::size_t dim, std::size_t num_entities,
                                      std::size_t num_relation_slots,
                                      std::vector<Modality> modalities,
                                      bool tied, std::vector<Matrix> tensors,
                                      FeatureBank features) {
  ModelParams params;
  params.dim_ = dim;
  params.num_entities_ = num_entities;
  params.num_relation_slots_ = num_relation_slots;
  modalities = canonical(std::move(modalities));
  // Entity sources come first, one per modality in canonical order.
  if (tensors.size() < modalities.size()) throw FormatError("missing tensors");
  std::size_t cols[kNumModalities] = {0, 0, 0};
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (modalities[i] != Modality::kStructure) {
      cols[index_of(modalities[i])] = tensors[i].cols;
    }
  }
  params.build_layout(modalities, tied, cols[index_of(Modality::kVisual)],
                      cols[index_of(Modality::kText)]);
  if (tensors.size() != params.tensors_.size()) {
    throw FormatError("expected " + std::to_string(params.tensors_.size()) +
                      " tensors, got " + std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!tensors[i].same_shape(params.tensors_[i])) {
      throw FormatError("tensor " + params.names_[i] + " has wrong shape");
    }
  }
  params.tensors_ = std::move(tensors);
  params.bind_features(std::move(features));
  return params;
}

void ModelParams::bind_features(FeatureBank features) {
  for (auto m : modalities()) {
    if (m == Modality::kStructure) continue;
    const auto* f = features.get(m);
    if (f == nullptr) {
      throw ConfigError(std::string(to_string(m)) + " features not bound");
    }
    validate_features(*f, num_entities_,
                      std::string(to_string(m)) + " features");
    if (f->cols != entity_source(m).cols) {
      throw FormatError(std::string(to_string(m)) +
                        " feature width does not match the projection");
    }
  }
  features_ = std::move(features);
}

std::vector<Modality> ModelParams::modalities() const {
  std::vector<Modality> out;
  for (auto m : kAllModalities) {
    if (has(m)) out.push_back(m);
  }
  return out;
}

std::size_t ModelParams::entity_slot(Modality m) const {
  const int slot = entity_slot_[index_of(m)];
  if (slot < 0) {
    throw StateError(std::string(to_string(m)) + " modality is not bound");
  }
  return static_cast<std::size_t>(slot);
}

std::size_t ModelParams::relation_slot(Modality m) const {
  const int slot = relation_slot_[index_of(m)];
  if (slot < 0) {
    throw StateError(std::string(to_string(m)) + " modality is not bound");
  }
  return static_cast<std::size_t>(slot);
}

const Matrix& ModelParams::entity_source(Modality m) const {
  return tensors_[entity_slot(m)];
}
Matrix& ModelParams::entity_source(Modality m) {
  return tensors_[entity_slot(m)];
}
const Matrix& ModelParams::relation_table(Modality m) const {
  return tensors_[relation_slot(m)];
}
Matrix& ModelParams::relation_table(Modality m) {
  return tensors_[relation_slot(m)];
}

Matrix ModelParams::entity_embeddings(Modality m) const {
  const Matrix& source = entity_source(m);
  if (m == Modality::kStructure) return source;
  Matrix out;
  kernels::project(*features_.get(m), source, out);
  return out;
}

std::vector<double> ModelParams::entity_embedding(Modality m,
                                                  EntityId e) const {
  if (e >= num_entities_) {
    throw IndexError("entity id " + std::to_string(e) + " out of range");
  }
  const Matrix& source = entity_source(m);
  if (m == Modality::kStructure) {
    auto row = source.row(e);
    return {row.begin(), row.end()};
  }
  auto f = features_.get(m)->row(e);
  std::vector<double> out(source.rows);
  for (std::size_t j = 0; j < source.rows; ++j) {
    double acc = 0.0;
    auto w = source.row(j);
    for (std::size_t c = 0; c < f.size(); ++c) acc += w[c] * f[c];
    out[j] = acc;
  }
  return out;
}

std::vector<Matrix> ModelParams::zeros_like() const {
  std::vector<Matrix> out;
  out.reserve(tensors_.size());
  for (const auto& t : tensors_) out.emplace_back(t.rows, t.cols);
  return out;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors_) {
    for (double v : t.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace mose
