#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "mose/kg.hpp"
#include "mose/matrix.hpp"
#include "mose/params.hpp"

namespace mose {

struct TrainConfig {
  std::size_t dim = 200;
  double learning_rate = 0.1;
  std::size_t batch_size = 1000;
  std::size_t max_epochs = 100;
  /// Applied to the visual and text losses only.
  double temperature = 4.0;
  double n3_weight = 0.0;
  bool tie_relations = false;
  std::uint64_t seed = 0;
  /// Non-improving epochs tolerated before stopping; negative disables early
  /// stopping.
  int patience = 10;
  /// Return the best-validation parameters instead of the last ones.
  bool keep_best = true;
  double init_scale = 1e-3;
  std::vector<Modality> modalities{kAllModalities.begin(), kAllModalities.end()};
  /// Per-modality switch for the terms of the summed objective.
  std::array<bool, kNumModalities> loss_terms{true, true, true};
  std::size_t eval_batch_size = 256;

  void validate() const;
  double temperature_for(Modality m) const {
    return m == Modality::kStructure ? 1.0 : temperature;
  }
};

/// softmax(scores / T), max-subtracted.
std::vector<double> softmax_with_temperature(std::span<const double> scores,
                                             double temperature);

struct CeResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d scores
};

/// -log softmax(scores / T)[gold] and its gradient (p - onehot(gold)) / T.
CeResult ce_loss(std::span<const double> scores, EntityId gold,
                 double temperature);

/// Adagrad: acc += g^2; theta -= lr * g / sqrt(acc + eps).
struct AdagradState {
  static constexpr double kEpsilon = 1e-10;
  std::vector<Matrix> accumulators;

  AdagradState() = default;
  explicit AdagradState(const std::vector<Matrix>& like);
  void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
            double learning_rate);
};

struct LossBreakdown {
  std::array<double, kNumModalities> per_modality{0.0, 0.0, 0.0};

  double structure() const { return per_modality[0]; }
  double visual() const { return per_modality[1]; }
  double text() const { return per_modality[2]; }
  double total() const {
    return per_modality[0] + per_modality[1] + per_modality[2];
  }
};

struct BatchGradients {
  LossBreakdown loss;
  std::vector<Matrix> grads;  // mirrors ModelParams::tensors()
};

/// Mean loss over the batch of L_s + L_v^cc + L_t^cc (plus optional N3) and
/// its gradient with respect to every parameter tensor.
BatchGradients compute_batch_gradients(const ModelParams& params,
                                       std::span<const Triple> batch,
                                       const TrainConfig& config);

/// One Adagrad step on the summed loss. Throws NumericError on a non-finite
/// loss or parameter.
LossBreakdown batch_step(std::span<const Triple> batch, ModelParams& params,
                         AdagradState& optimizer, const TrainConfig& config,
                         std::size_t epoch = 0, std::size_t batch_index = 0);

/// Tracks the best metric and decides when to stop.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  /// Returns true if `metric` is a new best.
  bool update(double metric);
  bool should_stop() const { return patience_ >= 0 && bad_epochs_ > patience_; }
  double best() const { return best_; }

 private:
  int patience_;
  int bad_epochs_ = 0;
  double best_ = -1.0;
  bool seen_ = false;
};

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown loss;
  double valid_hits10 = 0.0;
  double wall_time_s = 0.0;
};

/// One JSON object per line: epoch, L_s, L_v, L_t, valid_hits10, wall_time.
void write_epoch_log(std::ostream& out, const EpochLog& log);

struct FitResult {
  ModelParams params;
  AdagradState optimizer;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::string rng_state;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Epoch loop over seeded shuffles of store.train with validation Hits@10
/// (average ensemble) after every epoch.
FitResult fit(const TripleStore& store, const FilterIndex& filter,
              ModelParams params, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

}  // namespace mose
