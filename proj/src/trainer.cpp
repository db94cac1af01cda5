#include "jigsawhsi/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "jigsawhsi/error.hpp"
#include "jigsawhsi/random.hpp"
#include "jigsawhsi/raster_header.hpp"

namespace jigsawhsi {

namespace {

constexpr std::string_view kModule = "trainer";

// Sub-seed streams derived from TrainConfig::seed.
constexpr std::uint64_t kValSplitStream = 11;
constexpr std::uint64_t kDropoutStream = 12;
constexpr std::uint64_t kShuffleStream = 13;

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::SGD: return "SGD";
    case OptimizerKind::Adam: return "Adam";
    case OptimizerKind::Adadelta: return "Adadelta";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view text) {
  const std::string t = lowercase(trim(text));
  if (t == "sgd") return OptimizerKind::SGD;
  if (t == "adam") return OptimizerKind::Adam;
  if (t == "adadelta") return OptimizerKind::Adadelta;
  throw ValidationError(kModule, fmt::format("unknown optimizer '{}' (expected SGD, Adam or Adadelta)", text));
}

std::string_view to_string(MonitorScope scope) {
  return scope == MonitorScope::ValAccuracy ? "val" : "train_loss";
}

MonitorScope parse_monitor_scope(std::string_view text) {
  const std::string t = lowercase(trim(text));
  if (t == "val" || t == "val_accuracy") return MonitorScope::ValAccuracy;
  if (t == "train_loss") return MonitorScope::TrainLoss;
  throw ValidationError(kModule, fmt::format("unknown monitor_scope '{}' (expected val or train_loss)", text));
}

template <class T>
void optimizer_step(OptimizerKind kind, OptimizerState<T>& state, std::span<nn::Param<T>* const> params, double lr) {
  if (!(lr >= 0.0)) throw ValidationError(kModule, fmt::format("learning rate must be non-negative, got {}", lr));
  if (state.steps == 0) {
    state.slot1.clear();
    state.slot2.clear();
    for (const auto* p : params) {
      state.slot1.emplace_back(p->size(), T(0));
      state.slot2.emplace_back(p->size(), T(0));
    }
  }
  if (state.slot1.size() != params.size()) throw ValidationError(kModule, "optimizer state/parameter mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.slot1[i].size() != params[i]->size() || params[i]->grad.size() != params[i]->size()) {
      throw ValidationError(kModule, fmt::format("optimizer state/parameter shape mismatch for {}", params[i]->name));
    }
  }
  ++state.steps;

  switch (kind) {
    case OptimizerKind::SGD: {
      const T rate = static_cast<T>(lr);
      for (auto* p : params)
        for (std::size_t j = 0; j < p->size(); ++j) p->value[j] -= rate * p->grad[j];
      break;
    }
    case OptimizerKind::Adam: {
      const T b1 = static_cast<T>(kAdamBeta1);
      const T b2 = static_cast<T>(kAdamBeta2);
      const T eps = static_cast<T>(kAdamEpsilon);
      const double t = static_cast<double>(state.steps);
      const T correction1 = static_cast<T>(1.0 - std::pow(kAdamBeta1, t));
      const T correction2 = static_cast<T>(1.0 - std::pow(kAdamBeta2, t));
      const T rate = static_cast<T>(lr);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto* p = params[i];
        auto& m = state.slot1[i];
        auto& v = state.slot2[i];
        for (std::size_t j = 0; j < p->size(); ++j) {
          const T g = p->grad[j];
          m[j] = b1 * m[j] + (T(1) - b1) * g;
          v[j] = b2 * v[j] + (T(1) - b2) * g * g;
          const T m_hat = m[j] / correction1;
          const T v_hat = v[j] / correction2;
          p->value[j] -= rate * m_hat / (std::sqrt(v_hat) + eps);
        }
      }
      break;
    }
    case OptimizerKind::Adadelta: {
      const T rho = static_cast<T>(kAdadeltaRho);
      const T eps = static_cast<T>(kAdadeltaEpsilon);
      const T rate = static_cast<T>(lr);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto* p = params[i];
        auto& acc_grad = state.slot1[i];
        auto& acc_delta = state.slot2[i];
        for (std::size_t j = 0; j < p->size(); ++j) {
          const T g = p->grad[j];
          acc_grad[j] = rho * acc_grad[j] + (T(1) - rho) * g * g;
          const T delta = -std::sqrt(acc_delta[j] + eps) / std::sqrt(acc_grad[j] + eps) * g;
          acc_delta[j] = rho * acc_delta[j] + (T(1) - rho) * delta * delta;
          p->value[j] += rate * delta;
        }
      }
      break;
    }
  }
}

template void optimizer_step<float>(OptimizerKind, OptimizerState<float>&, std::span<nn::Param<float>* const>,
                                    double);
template void optimizer_step<double>(OptimizerKind, OptimizerState<double>&, std::span<nn::Param<double>* const>,
                                     double);

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError(kModule, "learning_rate must be a finite non-negative number");
  }
  if (batch_size == 0) throw ValidationError(kModule, "batch_size must be positive");
  if (max_epochs == 0) throw ValidationError(kModule, "max_epochs must be positive");
  if (patience == 0) throw ValidationError(kModule, "patience must be at least 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ValidationError(kModule, "val_fraction must be in [0, 1)");
  if (!(l2_coeff >= 0.0)) throw ValidationError(kModule, "l2 must be non-negative");
  if (monitor == MonitorScope::ValAccuracy && val_fraction == 0.0) {
    throw ValidationError(kModule, "monitor_scope=val needs val_fraction > 0");
  }
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& e : epochs) {
    if (has_validation) {
      out += fmt::format("{},{},{},{},{}\n", e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy);
    } else {
      out += fmt::format("{},{},{},,\n", e.epoch, e.train_loss, e.train_accuracy);
    }
  }
  return out;
}

EarlyStopping::EarlyStopping(std::size_t patience, bool higher_is_better, double min_delta)
    : patience_(patience), higher_is_better_(higher_is_better), min_delta_(min_delta) {
  if (patience == 0) throw ValidationError(kModule, "patience must be at least 1");
}

bool EarlyStopping::update(std::size_t epoch, double value) {
  const bool improved = best_epoch_ == 0 || (higher_is_better_ ? value > best_value_ + min_delta_
                                                               : value < best_value_ - min_delta_);
  if (improved) {
    best_epoch_ = epoch;
    best_value_ = value;
  }
  return improved;
}

Evaluation evaluate(const Model<float>& model, const TileSet& tiles, std::size_t batch_size) {
  if (tiles.empty()) throw ValidationError(kModule, "cannot evaluate on an empty tile set");
  if (tiles.num_classes() != model.spec().num_classes) {
    throw ValidationError(kModule, fmt::format("tiles have {} classes, model has {}", tiles.num_classes(),
                                               model.spec().num_classes));
  }
  Evaluation out{ConfusionMatrix(tiles.num_classes()), 0.0, 0.0};
  double loss = 0.0;
  std::vector<std::size_t> group;
  for (std::size_t start = 0; start < tiles.size(); start += batch_size) {
    const std::size_t end = std::min(tiles.size(), start + batch_size);
    group.clear();
    for (std::size_t i = start; i < end; ++i) group.push_back(i);
    const Batch batch = make_batch(tiles, group);
    const auto probs = model.predict(batch.inputs);
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto row = probs.item(i);
      const std::uint16_t truth = batch.labels[i];
      out.confusion.add(truth, argmax_label(row));
      loss -= std::log(std::max(static_cast<double>(row[truth - 1]),
                                static_cast<double>(std::numeric_limits<float>::min())));
    }
  }
  out.loss = loss / static_cast<double>(tiles.size());
  out.accuracy = static_cast<double>(out.confusion.trace()) / static_cast<double>(out.confusion.total());
  return out;
}

TrainHistory train(Model<float>& model, const TileSet& tiles, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (tiles.empty()) throw ValidationError(kModule, "no training tiles");
  if (tiles.num_classes() != model.spec().num_classes) {
    throw ValidationError(kModule, "tile classes do not match the model head");
  }
  for (std::size_t k = 0; k < tiles.num_classes(); ++k) {
    if (tiles.class_counts()[k] == 0) {
      throw ValidationError(kModule, fmt::format("class {} has no samples in the training portion", k + 1));
    }
  }

  TileSet fit_tiles;
  TileSet val_tiles;
  if (cfg.val_fraction > 0.0) {
    TileSplit split = stratified_split(tiles, 1.0 - cfg.val_fraction, mix_seed(cfg.seed, kValSplitStream),
                                       cfg.stratified);
    fit_tiles = std::move(split.train);
    val_tiles = std::move(split.test);
    if (val_tiles.empty()) throw ValidationError(kModule, "validation split is empty; raise val_fraction");
  } else {
    fit_tiles = tiles;
  }

  TrainHistory history;
  history.has_validation = !val_tiles.empty();
  const bool higher_is_better = cfg.monitor == MonitorScope::ValAccuracy;
  EarlyStopping stopper(cfg.patience, higher_is_better);
  OptimizerState<float> state;
  Rng dropout_rng(mix_seed(cfg.seed, kDropoutStream));
  const auto params = model.parameters();
  std::vector<std::vector<float>> best(params.size());
  const auto started = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& group : batch_plan(fit_tiles.size(), cfg.batch_size, mix_seed(cfg.seed, kShuffleStream), epoch)) {
      const Batch batch = make_batch(fit_tiles, group);
      const auto probs = model.forward(batch.inputs, nn::Mode::Train, dropout_rng);
      const auto loss = model.backward(batch.targets, cfg.l2_coeff);
      optimizer_step<float>(cfg.optimizer, state, params, cfg.learning_rate);
      loss_sum += static_cast<double>(loss.total()) * static_cast<double>(group.size());
      for (std::size_t i = 0; i < group.size(); ++i) {
        if (argmax_label(probs.item(i)) == batch.labels[i]) ++correct;
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(fit_tiles.size());
    record.train_accuracy = static_cast<double>(correct) / static_cast<double>(fit_tiles.size());
    if (history.has_validation) {
      const Evaluation val = evaluate(model, val_tiles);
      record.val_loss = val.loss;
      record.val_accuracy = val.accuracy;
    }
    double monitored = cfg.monitor == MonitorScope::ValAccuracy ? record.val_accuracy : record.train_loss;
    if (hooks.monitor_override) monitored = hooks.monitor_override(epoch, monitored);
    record.monitor = monitored;
    record.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.epochs.push_back(record);

    if (stopper.update(epoch, monitored)) {
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model);
    history.stopped_epoch = epoch;
    if (stopper.should_stop(epoch)) {
      history.early_stopped = true;
      break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  history.best_epoch = stopper.best_epoch();
  return history;
}

}  // namespace jigsawhsi
