#include "pointgrow/toynet.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>

#include "pointgrow/error.hpp"
#include "pointgrow/parallel.hpp"

namespace pointgrow {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using TapMap = Eigen::Map<const RowMatrix, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

// Convolutions run on a zero-padded copy of the input, (h + 2) x (w + 2) per
// channel. Output pixel (y, x) is computed at padded-row position y * (w + 2) + x,
// so each of the nine kernel taps is one GEMM over a contiguous slice of the
// padded planes. The two trailing positions per row are scratch and discarded.
struct PaddedPlanes {
  int channels = 0;
  int h = 0;
  int w = 0;
  std::vector<double> data;

  PaddedPlanes(int c, int h_, int w_)
      : channels(c), h(h_), w(w_),
        // +2 keeps the last tap's slice of the last channel in bounds.
        data(static_cast<std::size_t>(c) * plane() + 2, 0.0) {}

  int stride() const { return w + 2; }
  std::size_t plane() const { return static_cast<std::size_t>(h + 2) * (w + 2); }
  Eigen::Index span() const { return static_cast<Eigen::Index>(h) * stride(); }
  static std::size_t tap_offset(int ky, int kx, int stride) {
    return static_cast<std::size_t>(ky) * stride + kx;
  }

  void load(const double* in) {
    for (int c = 0; c < channels; ++c) {
      for (int y = 0; y < h; ++y) {
        const double* src = in + (static_cast<std::size_t>(c) * h + y) * w;
        std::copy(src, src + w, data.data() + c * plane() + (y + 1) * stride() + 1);
      }
    }
  }
  ConstStridedMap slice(std::size_t offset) const {
    return ConstStridedMap(data.data() + offset, channels, span(),
                           Eigen::OuterStride<>(static_cast<Eigen::Index>(plane())));
  }
  StridedMap slice(std::size_t offset) {
    return StridedMap(data.data() + offset, channels, span(),
                      Eigen::OuterStride<>(static_cast<Eigen::Index>(plane())));
  }
};

// Weights of tap (ky, kx) as an out x in matrix inside the [out][in][3][3] layout.
TapMap tap_weights(const ToyNet& net, const ConvShape& layer, int tap) {
  return TapMap(net.params().data() + layer.offset + tap, layer.out, layer.in,
                Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(layer.in * 9, 9));
}

ConstVectorMap bias(const ToyNet& net, const ConvShape& layer) {
  return ConstVectorMap(net.params().data() + layer.bias_offset(), layer.out);
}

void conv_forward(const ToyNet& net, const ConvShape& layer, const double* in, int h, int w,
                  double* out, bool relu) {
  PaddedPlanes padded(layer.in, h, w);
  padded.load(in);
  RowMatrix acc = RowMatrix::Zero(layer.out, padded.span());
  for (int tap = 0; tap < 9; ++tap) {
    acc.noalias() +=
        tap_weights(net, layer, tap) * padded.slice(PaddedPlanes::tap_offset(tap / 3, tap % 3, padded.stride()));
  }
  const ConstVectorMap b = bias(net, layer);
  for (int o = 0; o < layer.out; ++o) {
    for (int y = 0; y < h; ++y) {
      const double* src = acc.row(o).data() + y * padded.stride();
      double* dst = out + (static_cast<std::size_t>(o) * h + y) * w;
      for (int x = 0; x < w; ++x) {
        const double v = src[x] + b[o];
        dst[x] = relu ? std::max(v, 0.0) : v;
      }
    }
  }
}

// Accumulates weight/bias gradients for one sample and, when grad_in is
// non-null, writes dL/d(input) (before any upstream activation mask).
void conv_backward(const ToyNet& net, const ConvShape& layer, const double* in,
                   const RowMatrix& grad_out, int h, int w, double* grads, double* grad_in) {
  PaddedPlanes padded(layer.in, h, w);
  padded.load(in);
  const int stride = padded.stride();
  RowMatrix dy = RowMatrix::Zero(layer.out, padded.span());
  for (int o = 0; o < layer.out; ++o) {
    for (int y = 0; y < h; ++y) {
      std::copy(grad_out.row(o).data() + y * w, grad_out.row(o).data() + (y + 1) * w,
                dy.row(o).data() + y * stride);
    }
  }

  VectorMap db(grads + layer.bias_offset(), layer.out);
  db += grad_out.rowwise().sum();
  RowMatrix dw_tap(layer.out, layer.in);
  PaddedPlanes grad_padded(grad_in != nullptr ? layer.in : 0, h, w);
  for (int tap = 0; tap < 9; ++tap) {
    const std::size_t offset = PaddedPlanes::tap_offset(tap / 3, tap % 3, stride);
    dw_tap.noalias() = dy * padded.slice(offset).transpose();
    for (int o = 0; o < layer.out; ++o) {
      double* dst = grads + layer.offset + static_cast<std::size_t>(o) * layer.in * 9 + tap;
      for (int i = 0; i < layer.in; ++i) dst[static_cast<std::size_t>(i) * 9] += dw_tap(o, i);
    }
    if (grad_in != nullptr) {
      grad_padded.slice(offset).noalias() += tap_weights(net, layer, tap).transpose() * dy;
    }
  }
  if (grad_in == nullptr) return;
  for (int c = 0; c < layer.in; ++c) {
    for (int y = 0; y < h; ++y) {
      const double* src = grad_padded.data.data() + c * grad_padded.plane() + (y + 1) * stride + 1;
      std::copy(src, src + w, grad_in + (static_cast<std::size_t>(c) * h + y) * w);
    }
  }
}

void check_input(const Tensor4& images) {
  if (images.c != ToyNet::kInputChannels || images.n < 1 || images.h < 1 || images.w < 1 ||
      images.data.size() != static_cast<std::size_t>(images.n) * images.sample_size()) {
    fail(ErrorCode::kDimensionMismatch, "network input must have shape (N, 3, H, W)");
  }
}

}  // namespace

ToyNet::ToyNet(int num_classes) : num_classes_(num_classes) {
  if (num_classes < 1) fail(ErrorCode::kInvalidArgument, "class count must be positive");
  layers_[0] = {kInputChannels, kHidden1, 0};
  layers_[1] = {kHidden1, kHidden2, layers_[0].offset + layers_[0].size()};
  layers_[2] = {kHidden2, num_classes, layers_[1].offset + layers_[1].size()};
  params_.assign(layers_[2].offset + layers_[2].size(), 0.0);
}

ToyNet ToyNet::initialized(int num_classes, std::uint64_t seed) {
  ToyNet net(num_classes);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < 2; ++l) {
    const ConvShape& layer = net.layers_[static_cast<std::size_t>(l)];
    const double bound = std::sqrt(6.0 / (layer.in * 9.0));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < layer.weight_count(); ++i) net.params_[layer.offset + i] = dist(rng);
  }
  return net;
}

Tensor4 net_forward(const ToyNet& net, const Tensor4& images, ForwardCache* cache, int threads) {
  check_input(images);
  const int n = images.n, h = images.h, w = images.w;
  const auto& layers = net.layers();
  Tensor4 hidden1(n, layers[0].out, h, w);
  Tensor4 hidden2(n, layers[1].out, h, w);
  Tensor4 probs(n, layers[2].out, h, w);
  const std::size_t plane = probs.plane();

  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t s) {
    const int i = static_cast<int>(s);
    conv_forward(net, layers[0], images.sample(i).data(), h, w, hidden1.sample(i).data(), true);
    conv_forward(net, layers[1], hidden1.sample(i).data(), h, w, hidden2.sample(i).data(), true);
    double* logits = probs.sample(i).data();
    conv_forward(net, layers[2], hidden2.sample(i).data(), h, w, logits, false);
    const int c = layers[2].out;
    for (std::size_t p = 0; p < plane; ++p) {
      double peak = logits[p];
      for (int k = 1; k < c; ++k) peak = std::max(peak, logits[k * plane + p]);
      double sum = 0.0;
      for (int k = 0; k < c; ++k) {
        const double e = std::exp(logits[k * plane + p] - peak);
        logits[k * plane + p] = e;
        sum += e;
      }
      for (int k = 0; k < c; ++k) logits[k * plane + p] /= sum;
    }
  });

  for (double v : probs.data) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, "network produced a non-finite output");
  }
  if (cache != nullptr) {
    cache->input = images;
    cache->hidden1 = std::move(hidden1);
    cache->hidden2 = std::move(hidden2);
    cache->probabilities = probs;
  }
  return probs;
}

std::vector<double> net_backward(const ToyNet& net, const ForwardCache& cache,
                                 const Tensor4& grad_probabilities, int threads) {
  const auto& layers = net.layers();
  const Tensor4& probs = cache.probabilities;
  if (!grad_probabilities.same_shape(probs) || probs.c != net.num_classes() ||
      cache.hidden1.c != layers[0].out || cache.hidden2.c != layers[1].out ||
      cache.input.n != probs.n || cache.input.h != probs.h || cache.input.w != probs.w) {
    fail(ErrorCode::kDimensionMismatch, "backward cache does not match the network or gradient");
  }
  const int n = probs.n, h = probs.h, w = probs.w, c = probs.c;
  const std::size_t plane = probs.plane();
  const auto cols = static_cast<Eigen::Index>(plane);

  std::vector<std::vector<double>> per_sample(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t s) {
    const int i = static_cast<int>(s);
    std::vector<double>& grads = per_sample[s];
    grads.assign(net.parameter_count(), 0.0);

    // Softmax: dz_k = p_k (dp_k - sum_j p_j dp_j).
    const double* p = probs.sample(i).data();
    const double* dp = grad_probabilities.sample(i).data();
    RowMatrix dlogits(c, cols);
    for (std::size_t px = 0; px < plane; ++px) {
      double dot = 0.0;
      for (int k = 0; k < c; ++k) dot += p[k * plane + px] * dp[k * plane + px];
      for (int k = 0; k < c; ++k) {
        dlogits(k, static_cast<Eigen::Index>(px)) = p[k * plane + px] * (dp[k * plane + px] - dot);
      }
    }

    RowMatrix dhidden2(layers[1].out, cols);
    conv_backward(net, layers[2], cache.hidden2.sample(i).data(), dlogits, h, w, grads.data(),
                  dhidden2.data());
    const double* a2 = cache.hidden2.sample(i).data();
    for (Eigen::Index k = 0; k < dhidden2.size(); ++k) {
      if (a2[k] <= 0.0) dhidden2.data()[k] = 0.0;
    }

    RowMatrix dhidden1(layers[0].out, cols);
    conv_backward(net, layers[1], cache.hidden1.sample(i).data(), dhidden2, h, w, grads.data(),
                  dhidden1.data());
    const double* a1 = cache.hidden1.sample(i).data();
    for (Eigen::Index k = 0; k < dhidden1.size(); ++k) {
      if (a1[k] <= 0.0) dhidden1.data()[k] = 0.0;
    }

    conv_backward(net, layers[0], cache.input.sample(i).data(), dhidden1, h, w, grads.data(),
                  nullptr);
  });

  std::vector<double> total(net.parameter_count(), 0.0);
  for (const std::vector<double>& g : per_sample) {
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += g[k];
  }
  return total;
}

Tensor4 images_to_tensor(const std::vector<const RasterImage*>& images) {
  if (images.empty()) fail(ErrorCode::kEmpty, "no images to stack");
  const int h = images.front()->height;
  const int w = images.front()->width;
  Tensor4 out(static_cast<int>(images.size()), 3, h, w);
  const std::size_t plane = out.plane();
  for (int i = 0; i < out.n; ++i) {
    const RasterImage& img = *images[static_cast<std::size_t>(i)];
    if (img.width != w || img.height != h) {
      fail(ErrorCode::kDimensionMismatch, "images in a batch must share dimensions");
    }
    double* dst = out.sample(i).data();
    for (std::size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < 3; ++c) dst[c * plane + p] = img.data[3 * p + c] / 255.0;
    }
  }
  return out;
}

ClassMask argmax_mask(const Tensor4& probabilities, int i) {
  ClassMask mask(probabilities.w, probabilities.h, probabilities.c);
  const std::size_t plane = probabilities.plane();
  const double* p = probabilities.sample(i).data();
  for (std::size_t px = 0; px < plane; ++px) {
    int best = 0;
    for (int k = 1; k < probabilities.c; ++k) {
      if (p[k * plane + px] > p[best * plane + px]) best = k;
    }
    mask.classes[px] = static_cast<std::uint8_t>(best);
  }
  return mask;
}

}  // namespace pointgrow
