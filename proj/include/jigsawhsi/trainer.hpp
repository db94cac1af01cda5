#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jigsawhsi/layers.hpp"
#include "jigsawhsi/metrics.hpp"
#include "jigsawhsi/network.hpp"
#include "jigsawhsi/tiler.hpp"

namespace jigsawhsi {

enum class OptimizerKind { SGD, Adam, Adadelta };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-7;
inline constexpr double kAdadeltaRho = 0.95;
inline constexpr double kAdadeltaEpsilon = 1e-7;

/// Per-parameter slots: Adam keeps (m, v), Adadelta (E[g^2], E[dx^2]).
template <class T>
struct OptimizerState {
  std::vector<std::vector<T>> slot1;
  std::vector<std::vector<T>> slot2;
  std::uint64_t steps = 0;
};

/// One update of every parameter from its accumulated gradient.
///
///   SGD       w <- w - lr g
///   Adam      bias-corrected moments, w <- w - lr m^ / (sqrt(v^) + eps)
///   Adadelta  d = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) g, w <- w + lr d
///
/// lr = 0 leaves parameters untouched; lr < 0 is rejected.
template <class T>
void optimizer_step(OptimizerKind kind, OptimizerState<T>& state, std::span<nn::Param<T>* const> params, double lr);

enum class MonitorScope { ValAccuracy, TrainLoss };

std::string_view to_string(MonitorScope scope);
MonitorScope parse_monitor_scope(std::string_view text);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adadelta;
  double learning_rate = 0.1;
  std::size_t batch_size = 106;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  double val_fraction = 0.1;
  std::uint64_t seed = 1337;
  double l2_coeff = 1e-4;
  MonitorScope monitor = MonitorScope::ValAccuracy;
  bool stratified = true;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;  ///< fraction in [0, 1], running over the epoch
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double monitor = 0.0;  ///< value the stopping rule saw
  double elapsed_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
  bool early_stopped = false;
  bool has_validation = false;

  const EpochRecord& at_epoch(std::size_t epoch) const { return epochs.at(epoch - 1); }
  /// epoch,train_loss,train_acc,val_loss,val_acc
  std::string to_csv() const;
};

/// Patience-based stopping. Improvement means beating the best value by more
/// than min_delta; ties keep the earlier epoch.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, bool higher_is_better, double min_delta = 1e-6);

  /// Returns true when `value` is a new best.
  bool update(std::size_t epoch, double value);
  bool should_stop(std::size_t epoch) const { return best_epoch_ != 0 && epoch - best_epoch_ >= patience_; }

  std::size_t best_epoch() const { return best_epoch_; }
  double best_value() const { return best_value_; }

 private:
  std::size_t patience_;
  bool higher_is_better_;
  double min_delta_;
  std::size_t best_epoch_ = 0;
  double best_value_ = 0.0;
};

/// Test seams: replace the monitored value and observe each finished epoch.
struct TrainHooks {
  std::function<double(std::size_t epoch, double measured)> monitor_override;
  std::function<void(std::size_t epoch, const Model<float>& model)> on_epoch_end;
};

/// Trains in place and leaves `model` at its best epoch.
TrainHistory train(Model<float>& model, const TileSet& tiles, const TrainConfig& cfg, const TrainHooks& hooks = {});

struct Evaluation {
  ConfusionMatrix confusion;
  double loss = 0.0;
  double accuracy = 0.0;  ///< fraction
};

/// Inference-mode pass over every tile.
Evaluation evaluate(const Model<float>& model, const TileSet& tiles, std::size_t batch_size = 256);

}  // namespace jigsawhsi
