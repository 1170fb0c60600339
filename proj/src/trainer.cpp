#include "pointgrow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "pointgrow/binary_io.hpp"
#include "pointgrow/error.hpp"

namespace pointgrow {

void validate(const TrainConfig& config) {
  if (!(config.lr >= 0.0) || !std::isfinite(config.lr)) {
    fail(ErrorCode::kInvalidArgument, "learning rate must be finite and >= 0");
  }
  if (config.batch_size < 1) fail(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  if (config.epochs < 0) fail(ErrorCode::kInvalidArgument, "epoch count must be >= 0");
  if (!(config.factor > 0.0 && config.factor < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "scheduler factor must lie in (0, 1)");
  }
  if (config.patience < 0) fail(ErrorCode::kInvalidArgument, "patience must be >= 0");
  if (config.threads < 1) fail(ErrorCode::kInvalidArgument, "thread count must be >= 1");
}

std::string epoch_log_jsonl(const std::vector<EpochLog>& log) {
  std::string out;
  for (const EpochLog& e : log) {
    nlohmann::ordered_json line;
    line["epoch"] = e.epoch;
    line["train_loss"] = e.train_loss;
    line["val_miou"] = e.val_miou;
    line["lr"] = e.lr;
    out += line.dump() + "\n";
  }
  return out;
}

PlateauScheduler::PlateauScheduler(double lr, int patience, double factor)
    : lr_(lr), patience_(patience), factor_(factor),
      best_(-std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::observe(double metric) {
  if (metric > best_) {
    best_ = metric;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ > patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
  }
  return lr_;
}

namespace {

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 rng_from_string(const std::string& text) {
  std::mt19937_64 rng;
  std::istringstream in(text);
  in >> rng;
  if (!in) fail(ErrorCode::kInvalidArgument, "corrupt generator state");
  return rng;
}

}  // namespace

ConfusionMatrix evaluate(const ToyNet& net, const std::vector<EvalSample>& samples,
                         int batch_size, int threads) {
  if (samples.empty()) fail(ErrorCode::kEmpty, "nothing to evaluate");
  ConfusionMatrix cm(net.num_classes());
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const RasterImage*> images;
    for (std::size_t i = start; i < end; ++i) images.push_back(samples[i].image);
    const Tensor4 probs = net_forward(net, images_to_tensor(images), nullptr, threads);
    for (std::size_t i = start; i < end; ++i) {
      cm.accumulate(argmax_mask(probs, static_cast<int>(i - start)), *samples[i].ground_truth);
    }
  }
  return cm;
}

TrainResult train(ToyNet net, const std::vector<TrainSample>& train_set,
                  const std::vector<EvalSample>& val_set, const ClassWeights& weights,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  validate(config);
  if (train_set.empty()) fail(ErrorCode::kEmpty, "training split is empty");
  if (val_set.empty()) fail(ErrorCode::kEmpty, "validation split is empty");
  if (weights.w.size() != static_cast<std::size_t>(net.num_classes())) {
    fail(ErrorCode::kDimensionMismatch, "class weights do not match the network's class count");
  }

  std::mt19937_64 rng(config.seed);
  AdamState adam(net.parameter_count());
  AdamConfig adam_config{config.lr, config.beta1, config.beta2, config.eps};
  PlateauScheduler scheduler(config.lr, config.patience, config.factor);

  TrainResult result;
  result.best_val_miou = -1.0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double epoch_lr = adam_config.lr;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<const RasterImage*> images;
      std::vector<ClassMask> labels;
      std::vector<const PseudoMask*> masks;
      for (std::size_t k = start; k < end; ++k) {
        const TrainSample& s = train_set[order[k]];
        images.push_back(s.image);
        labels.push_back(s.target->wl);
        masks.push_back(s.target);
      }
      ForwardCache cache;
      const Tensor4 probs = net_forward(net, images_to_tensor(images), &cache, config.threads);
      const Tensor4 targets = one_hot(labels, net.num_classes());
      const SupervisionMaskBatch m = stack_supervision(masks);
      const LossValue loss = masked_loss_forward(probs, targets, m, weights);
      if (!std::isfinite(loss.total)) {
        fail(ErrorCode::kNonFinite, "non-finite loss at epoch " + std::to_string(epoch));
      }
      for (double li : loss.per_sample) loss_sum += li;
      const std::vector<double> grads = net_backward(
          net, cache, masked_loss_backward(probs, targets, m, weights), config.threads);
      adam_step(net.params(), grads, adam, adam_config);
    }

    const double val_miou =
        miou_micro(evaluate(net, val_set, config.batch_size, config.threads), 0);
    EpochLog entry{epoch, loss_sum / double(train_set.size()), val_miou, epoch_lr};
    result.log.push_back(entry);
    adam_config.lr = scheduler.observe(val_miou);

    TrainingState state{net, adam, static_cast<std::uint64_t>(epoch), adam_config.lr,
                        rng_to_string(rng)};
    if (val_miou > result.best_val_miou) {
      result.best_val_miou = val_miou;
      result.best_epoch = epoch;
      result.best_state = state;
    }
    result.final_state = std::move(state);
    if (on_epoch) on_epoch(entry);
  }

  if (config.epochs == 0) {
    result.final_state = {net, adam, 0, config.lr, rng_to_string(rng)};
    result.best_state = result.final_state;
    result.best_val_miou = miou_micro(evaluate(net, val_set, config.batch_size, config.threads), 0);
  }
  return result;
}

namespace {
constexpr std::string_view kCheckpointMagic = "TNCK";
}  // namespace

Bytes serialize_checkpoint(const TrainingState& state) {
  const ToyNet& net = state.net;
  ByteWriter out;
  out.put_magic(kCheckpointMagic);
  out.put_u16(kCheckpointVersion);
  out.put_u32(ToyNet::kInputChannels);
  out.put_u32(ToyNet::kHidden1);
  out.put_u32(ToyNet::kHidden2);
  out.put_u32(static_cast<std::uint32_t>(net.num_classes()));
  out.put_u64(net.parameter_count());
  out.put_f64s(net.params());
  out.put_f64s(state.adam.m);
  out.put_f64s(state.adam.v);
  out.put_u64(state.adam.step);
  out.put_u64(state.epoch);
  out.put_f64(state.lr);
  out.put_string(state.rng_state);
  return out.take();
}

TrainingState deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (!in.magic_matches(kCheckpointMagic)) fail(ErrorCode::kBadMagic, "not a TNCK checkpoint");
  const std::uint16_t version = in.u16();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kBadVersion, "checkpoint version " + std::to_string(version) +
                                     " is not supported (expected " +
                                     std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t in_channels = in.u32();
  const std::uint32_t hidden1 = in.u32();
  const std::uint32_t hidden2 = in.u32();
  const std::uint32_t classes = in.u32();
  if (in_channels != ToyNet::kInputChannels || hidden1 != ToyNet::kHidden1 ||
      hidden2 != ToyNet::kHidden2 || classes < 1 || classes > 256) {
    fail(ErrorCode::kDimensionMismatch, "checkpoint architecture does not match ToyNet");
  }
  TrainingState state{ToyNet(static_cast<int>(classes)), AdamState{}, 0, 0.0, {}};
  const std::uint64_t count = in.u64();
  if (count != state.net.parameter_count()) {
    fail(ErrorCode::kDimensionMismatch, "checkpoint parameter count does not match");
  }
  state.adam = AdamState(count);
  in.f64s(state.net.params());
  in.f64s(state.adam.m);
  in.f64s(state.adam.v);
  state.adam.step = in.u64();
  state.epoch = in.u64();
  state.lr = in.f64();
  state.rng_state = in.string();
  if (!in.at_end()) fail(ErrorCode::kInvalidArgument, "trailing bytes after checkpoint");
  if (!state.rng_state.empty()) rng_from_string(state.rng_state);
  return state;
}

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(state));
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace pointgrow
