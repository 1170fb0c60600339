#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pointgrow/adam.hpp"
#include "pointgrow/loss.hpp"
#include "pointgrow/toynet.hpp"
#include "pointgrow/weak_label.hpp"

namespace pointgrow {

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 8;
  int epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Epochs without validation-mIoU improvement tolerated before decaying.
  int patience = 10;
  double factor = 0.1;
  std::uint64_t seed = 0;
  int threads = 1;
};

void validate(const TrainConfig& config);

struct TrainSample {
  const RasterImage* image = nullptr;
  const PseudoMask* target = nullptr;
};

struct EvalSample {
  const RasterImage* image = nullptr;
  const ClassMask* ground_truth = nullptr;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_miou = 0.0;
  double lr = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

std::string epoch_log_jsonl(const std::vector<EpochLog>& log);

/// Everything needed to resume or reproduce: weights, optimizer moments,
/// schedule position and the shuffling generator.
struct TrainingState {
  ToyNet net;
  AdamState adam;
  std::uint64_t epoch = 0;
  double lr = 0.0;
  std::string rng_state;

  friend bool operator==(const TrainingState&, const TrainingState&) = default;
};

struct TrainResult {
  std::vector<EpochLog> log;
  TrainingState final_state;
  TrainingState best_state;
  double best_val_miou = 0.0;
  int best_epoch = 0;
};

/// Reduce-on-plateau, maximizing the monitored metric.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor);
  /// Returns the learning rate to use for the next epoch.
  double observe(double metric);
  double lr() const { return lr_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double best_;
  int bad_epochs_ = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(ToyNet net, const std::vector<TrainSample>& train_set,
                  const std::vector<EvalSample>& val_set, const ClassWeights& weights,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Argmax predictions pooled into one confusion matrix.
ConfusionMatrix evaluate(const ToyNet& net, const std::vector<EvalSample>& samples,
                         int batch_size = 8, int threads = 1);

/// "TNCK" binary checkpoint, little-endian IEEE-754 doubles.
inline constexpr std::uint16_t kCheckpointVersion = 1;
Bytes serialize_checkpoint(const TrainingState& state);
TrainingState deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
TrainingState load_checkpoint(const std::filesystem::path& path);

}  // namespace pointgrow
