#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pointgrow/raster.hpp"
#include "pointgrow/tensor.hpp"

namespace pointgrow {

/// Shape of one 3x3, stride 1, zero-padded convolution inside the flat
/// parameter vector: weights [out][in][3][3] followed by bias [out].
struct ConvShape {
  int in = 0;
  int out = 0;
  std::size_t offset = 0;

  std::size_t weight_count() const { return static_cast<std::size_t>(out) * in * 9; }
  std::size_t bias_offset() const { return offset + weight_count(); }
  std::size_t size() const { return weight_count() + static_cast<std::size_t>(out); }

  friend bool operator==(const ConvShape&, const ConvShape&) = default;
};

/// conv(3->16) ReLU conv(16->32) ReLU conv(32->C) softmax.
class ToyNet {
 public:
  static constexpr int kInputChannels = 3;
  static constexpr int kHidden1 = 16;
  static constexpr int kHidden2 = 32;

  explicit ToyNet(int num_classes = 5);

  /// Kaiming-uniform (fan-in) hidden layers, zero biases, zero final layer.
  static ToyNet initialized(int num_classes, std::uint64_t seed);

  int num_classes() const { return num_classes_; }
  const std::array<ConvShape, 3>& layers() const { return layers_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  friend bool operator==(const ToyNet&, const ToyNet&) = default;

 private:
  int num_classes_;
  std::array<ConvShape, 3> layers_;
  std::vector<double> params_;
};

struct ForwardCache {
  Tensor4 input;
  Tensor4 hidden1;  // post-ReLU
  Tensor4 hidden2;  // post-ReLU
  Tensor4 probabilities;
};

/// Input (N, 3, H, W) with values in [0, 1].
Tensor4 net_forward(const ToyNet& net, const Tensor4& images, ForwardCache* cache = nullptr,
                    int threads = 1);

/// Gradient of the loss w.r.t. every parameter, given dL/d(probabilities).
std::vector<double> net_backward(const ToyNet& net, const ForwardCache& cache,
                                 const Tensor4& grad_probabilities, int threads = 1);

/// Scales 8-bit RGB to [0, 1] and stacks to (N, 3, H, W).
Tensor4 images_to_tensor(const std::vector<const RasterImage*>& images);

/// Per-pixel argmax (ties to the smallest class) of sample i.
ClassMask argmax_mask(const Tensor4& probabilities, int i);

}  // namespace pointgrow
