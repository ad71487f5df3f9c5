#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mose/features.hpp"
#include "mose/kg.hpp"
#include "mose/matrix.hpp"

namespace mose {

enum class Modality : std::uint8_t { kStructure = 0, kVisual = 1, kText = 2 };

inline constexpr std::size_t kNumModalities = 3;
inline constexpr std::array<Modality, kNumModalities> kAllModalities = {
    Modality::kStructure, Modality::kVisual, Modality::kText};

inline std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }
std::string_view to_string(Modality m);
Modality parse_modality(std::string_view name);

/// Frozen visual/text feature rows, shared between parameter snapshots.
struct FeatureBank {
  std::shared_ptr<const FeatureMatrix> visual;
  std::shared_ptr<const FeatureMatrix> text;

  const FeatureMatrix* get(Modality m) const;
};

struct InitOptions {
  std::uint64_t seed = 0;
  std::size_t dim = 200;  // complex dimension d
  std::size_t num_entities = 0;
  std::size_t num_relation_slots = 0;  // 2|R| after augmentation
  std::vector<Modality> modalities{kAllModalities.begin(), kAllModalities.end()};
  bool tie_relations = false;
  double scale = 1e-3;
};

/// All learnable tensors of the modality-split model.
///
/// Complex d-vectors are stored as 2d reals: real parts, then imaginary
/// parts. Structure entities are a free |E| x 2d table; visual and text
/// entities are W_m f_m(e) with W_m of shape 2d x feature_dim. Each modality
/// owns a 2|R| x 2d relation table unless relations are tied, in which case
/// every modality resolves to one shared table.
class ModelParams {
 public:
  ModelParams() = default;

  static ModelParams initialize(const InitOptions& options,
                                const FeatureBank& features);

  bool has(Modality m) const { return entity_slot_[index_of(m)] >= 0; }
  std::vector<Modality> modalities() const;
  bool tied() const { return tied_; }
  std::size_t dim() const { return dim_; }
  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relation_slots() const { return num_relation_slots_; }
  const FeatureBank& features() const { return features_; }

  /// Free table (structure) or projection W (visual/text).
  const Matrix& entity_source(Modality m) const;
  Matrix& entity_source(Modality m);
  const Matrix& relation_table(Modality m) const;
  Matrix& relation_table(Modality m);

  /// Index into tensors() of a modality's entity source / relation table.
  std::size_t entity_slot(Modality m) const;
  std::size_t relation_slot(Modality m) const;

  /// Materialized |E| x 2d embeddings for modality m.
  Matrix entity_embeddings(Modality m) const;
  /// Single row of entity_embeddings; same arithmetic as the batched form.
  std::vector<double> entity_embedding(Modality m, EntityId e) const;

  std::vector<Matrix>& tensors() { return tensors_; }
  const std::vector<Matrix>& tensors() const { return tensors_; }
  const std::vector<std::string>& tensor_names() const { return names_; }
  std::vector<Matrix> zeros_like() const;

  void bind_features(FeatureBank features);
  bool all_finite() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.tensors_ == b.tensors_ && a.names_ == b.names_ &&
           a.entity_slot_ == b.entity_slot_ &&
           a.relation_slot_ == b.relation_slot_;
  }

  /// Tensor names in storage order for a modality set.
  static std::vector<std::string> tensor_layout(std::vector<Modality> modalities,
                                                bool tied);

  /// Rebuilds a parameter set from tensors in tensor_layout order.
  static ModelParams from_tensors(std::size_t dim, std::size_t num_entities,
                                  std::size_t num_relation_slots,
                                  std::vector<Modality> modalities, bool tied,
                                  std::vector<Matrix> tensors,
                                  FeatureBank features);

 private:
  void build_layout(const std::vector<Modality>& modalities, bool tied,
                    std::size_t feature_cols_visual,
                    std::size_t feature_cols_text);

  std::size_t dim_ = 0;
  std::size_t num_entities_ = 0;
  std::size_t num_relation_slots_ = 0;
  bool tied_ = false;
  std::array<int, kNumModalities> entity_slot_{-1, -1, -1};
  std::array<int, kNumModalities> relation_slot_{-1, -1, -1};
  std::vector<Matrix> tensors_;
  std::vector<std::string> names_;
  FeatureBank features_;
};

}  // namespace mose
