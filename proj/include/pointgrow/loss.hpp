#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointgrow/raster.hpp"
#include "pointgrow/tensor.hpp"
#include "pointgrow/weak_label.hpp"

namespace pointgrow {

/// Per-pixel binary supervision, shape (N, H, W), broadcast over classes.
struct SupervisionMaskBatch {
  int n = 0, h = 0, w = 0;
  std::vector<std::uint8_t> m;
};

struct ClassWeights {
  std::vector<double> w;
  double eps = 1e-6;
};

struct LossValue {
  double total = 0.0;
  std::vector<double> per_sample;
};

/// Numerically stable per-pixel softmax over the class axis.
Tensor4 softmax(const Tensor4& logits);

Tensor4 one_hot(const std::vector<ClassMask>& masks, int num_classes);
SupervisionMaskBatch stack_supervision(const std::vector<const PseudoMask*>& masks);

/// w_c = 1 / max(freq_c, eps), freq over all supervised pixels.
ClassWeights class_weights(const std::vector<PseudoMask>& pseudo_masks, int num_classes,
                           double eps = 1e-6);

/// l_i = (1/C) sum_c w_c * sum_px m (wl - pl)^2 / max(sum_px m, 1);  L = mean_i l_i.
LossValue masked_loss_forward(const Tensor4& pl, const Tensor4& wl,
                              const SupervisionMaskBatch& m, const ClassWeights& w);
/// dL/dpl = -2 m w_c (wl - pl) / (N C max(sum_px m, 1)).
Tensor4 masked_loss_backward(const Tensor4& pl, const Tensor4& wl,
                             const SupervisionMaskBatch& m, const ClassWeights& w);

/// Row = ground truth class, column = predicted class.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(int c = 0)
      : num_classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}
  std::uint64_t at(int gt, int pred) const {
    return counts[static_cast<std::size_t>(gt) * num_classes + pred];
  }
  std::uint64_t total() const;
  void accumulate(const ClassMask& pred, const ClassMask& gt);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

ConfusionMatrix confusion_matrix(const ClassMask& pred, const ClassMask& gt, int num_classes);

/// Pooled Jaccard over all classes except ignore_index; 1.0 when nothing is
/// left to compare.
double miou_micro(const ClassMask& pred, const ClassMask& gt, int num_classes, int ignore_index);
double miou_micro(const ConfusionMatrix& confusion, int ignore_index);
std::vector<double> per_class_iou(const ConfusionMatrix& confusion);

/// {"miou": x, "per_class_iou": [...], "confusion": [[...]]}
std::string metrics_json(const ConfusionMatrix& confusion, int ignore_index);

}  // namespace pointgrow
