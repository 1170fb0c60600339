#include "pointgrow/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "pointgrow/error.hpp"

namespace pointgrow {
namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, std::string(what) + " contains a non-finite value");
  }
}

void check_loss_shapes(const Tensor4& pl, const Tensor4& wl, const SupervisionMaskBatch& m,
                       const ClassWeights& w) {
  if (!pl.same_shape(wl)) fail(ErrorCode::kDimensionMismatch, "prediction and label shapes differ");
  if (m.n != pl.n || m.h != pl.h || m.w != pl.w ||
      m.m.size() != static_cast<std::size_t>(m.n) * m.h * m.w) {
    fail(ErrorCode::kDimensionMismatch, "supervision mask shape differs from the prediction");
  }
  if (w.w.size() != static_cast<std::size_t>(pl.c)) {
    fail(ErrorCode::kDimensionMismatch, "class weight count differs from the class count");
  }
  if (pl.n < 1 || pl.c < 1) fail(ErrorCode::kEmpty, "empty batch");
  require_finite(pl.data, "prediction");
  require_finite(wl.data, "label");
  require_finite(w.w, "class weights");
}

std::size_t supervised_count(const SupervisionMaskBatch& m, int i) {
  const std::size_t plane = static_cast<std::size_t>(m.h) * m.w;
  const auto first = m.m.begin() + static_cast<std::ptrdiff_t>(i * plane);
  return static_cast<std::size_t>(
      std::count_if(first, first + static_cast<std::ptrdiff_t>(plane), [](auto v) { return v != 0; }));
}

}  // namespace

Tensor4 softmax(const Tensor4& logits) {
  require_finite(logits.data, "logits");
  Tensor4 out(logits.n, logits.c, logits.h, logits.w);
  const std::size_t plane = logits.plane();
  for (int i = 0; i < logits.n; ++i) {
    const double* in = logits.sample(i).data();
    double* o = out.sample(i).data();
    for (std::size_t p = 0; p < plane; ++p) {
      double peak = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < logits.c; ++c) peak = std::max(peak, in[c * plane + p]);
      double sum = 0.0;
      for (int c = 0; c < logits.c; ++c) {
        const double e = std::exp(in[c * plane + p] - peak);
        o[c * plane + p] = e;
        sum += e;
      }
      for (int c = 0; c < logits.c; ++c) o[c * plane + p] /= sum;
    }
  }
  return out;
}

Tensor4 one_hot(const std::vector<ClassMask>& masks, int num_classes) {
  if (masks.empty()) fail(ErrorCode::kEmpty, "no masks to encode");
  const int h = masks.front().height;
  const int w = masks.front().width;
  Tensor4 out(static_cast<int>(masks.size()), num_classes, h, w);
  for (int i = 0; i < out.n; ++i) {
    const ClassMask& mask = masks[static_cast<std::size_t>(i)];
    if (mask.width != w || mask.height != h) {
      fail(ErrorCode::kDimensionMismatch, "masks in a batch must share dimensions");
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int cls = mask.at(x, y);
        if (cls >= num_classes) fail(ErrorCode::kInvalidClass, "class id exceeds class count");
        out.at(i, cls, y, x) = 1.0;
      }
    }
  }
  return out;
}

SupervisionMaskBatch stack_supervision(const std::vector<const PseudoMask*>& masks) {
  if (masks.empty()) fail(ErrorCode::kEmpty, "no masks to stack");
  SupervisionMaskBatch out{static_cast<int>(masks.size()), masks.front()->wl.height,
                           masks.front()->wl.width, {}};
  out.m.reserve(static_cast<std::size_t>(out.n) * out.h * out.w);
  for (const PseudoMask* pm : masks) {
    if (pm->wl.width != out.w || pm->wl.height != out.h) {
      fail(ErrorCode::kDimensionMismatch, "masks in a batch must share dimensions");
    }
    out.m.insert(out.m.end(), pm->m.begin(), pm->m.end());
  }
  return out;
}

ClassWeights class_weights(const std::vector<PseudoMask>& pseudo_masks, int num_classes,
                           double eps) {
  if (num_classes < 1) fail(ErrorCode::kInvalidArgument, "class count must be positive");
  if (!(eps > 0.0)) fail(ErrorCode::kInvalidArgument, "eps must be positive");
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(num_classes), 0);
  std::uint64_t total = 0;
  for (const PseudoMask& pm : pseudo_masks) {
    for (std::size_t i = 0; i < pm.m.size(); ++i) {
      if (pm.m[i] == 0) continue;
      if (pm.wl.classes[i] >= num_classes) fail(ErrorCode::kInvalidClass, "label exceeds class count");
      ++counts[pm.wl.classes[i]];
      ++total;
    }
  }
  if (total == 0) fail(ErrorCode::kEmpty, "no supervised pixels to compute class weights from");
  ClassWeights out{std::vector<double>(counts.size()), eps};
  for (std::size_t c = 0; c < counts.size(); ++c) {
    out.w[c] = 1.0 / std::max(double(counts[c]) / double(total), eps);
  }
  return out;
}

LossValue masked_loss_forward(const Tensor4& pl, const Tensor4& wl,
                              const SupervisionMaskBatch& m, const ClassWeights& w) {
  check_loss_shapes(pl, wl, m, w);
  const std::size_t plane = pl.plane();
  LossValue out{0.0, std::vector<double>(static_cast<std::size_t>(pl.n), 0.0)};
  for (int i = 0; i < pl.n; ++i) {
    const double norm = double(std::max<std::size_t>(supervised_count(m, i), 1));
    const double* p = pl.sample(i).data();
    const double* t = wl.sample(i).data();
    const std::uint8_t* mask = m.m.data() + static_cast<std::size_t>(i) * plane;
    double li = 0.0;
    for (int c = 0; c < pl.c; ++c) {
      double sq = 0.0;
      for (std::size_t px = 0; px < plane; ++px) {
        if (mask[px] == 0) continue;
        const double d = t[c * plane + px] - p[c * plane + px];
        sq += d * d;
      }
      li += w.w[static_cast<std::size_t>(c)] * sq / norm;
    }
    out.per_sample[static_cast<std::size_t>(i)] = li / pl.c;
  }
  double sum = 0.0;
  for (double li : out.per_sample) sum += li;
  out.total = sum / pl.n;
  return out;
}

Tensor4 masked_loss_backward(const Tensor4& pl, const Tensor4& wl,
                             const SupervisionMaskBatch& m, const ClassWeights& w) {
  check_loss_shapes(pl, wl, m, w);
  const std::size_t plane = pl.plane();
  Tensor4 grad(pl.n, pl.c, pl.h, pl.w);
  for (int i = 0; i < pl.n; ++i) {
    const double norm = double(std::max<std::size_t>(supervised_count(m, i), 1));
    const double* p = pl.sample(i).data();
    const double* t = wl.sample(i).data();
    double* g = grad.sample(i).data();
    const std::uint8_t* mask = m.m.data() + static_cast<std::size_t>(i) * plane;
    for (int c = 0; c < pl.c; ++c) {
      const double scale = -2.0 * w.w[static_cast<std::size_t>(c)] / (double(pl.n) * pl.c * norm);
      for (std::size_t px = 0; px < plane; ++px) {
        if (mask[px] == 0) continue;
        g[c * plane + px] = scale * (t[c * plane + px] - p[c * plane + px]);
      }
    }
  }
  return grad;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t sum = 0;
  for (std::uint64_t v : counts) sum += v;
  return sum;
}

void ConfusionMatrix::accumulate(const ClassMask& pred, const ClassMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    fail(ErrorCode::kDimensionMismatch, "prediction and ground truth dimensions differ");
  }
  for (std::size_t i = 0; i < gt.classes.size(); ++i) {
    const int g = gt.classes[i];
    const int p = pred.classes[i];
    if (g >= num_classes || p >= num_classes) {
      fail(ErrorCode::kInvalidClass, "class id exceeds confusion matrix size");
    }
    ++counts[static_cast<std::size_t>(g) * num_classes + p];
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.num_classes != num_classes) {
    fail(ErrorCode::kDimensionMismatch, "confusion matrices differ in class count");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

ConfusionMatrix confusion_matrix(const ClassMask& pred, const ClassMask& gt, int num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.accumulate(pred, gt);
  return cm;
}

double miou_micro(const ConfusionMatrix& cm, int ignore_index) {
  const int c = cm.num_classes;
  if (ignore_index < 0 || ignore_index >= c) {
    fail(ErrorCode::kOutOfRange, "ignore index outside the class range");
  }
  std::uint64_t intersection = 0;
  std::uint64_t unions = 0;
  for (int k = 0; k < c; ++k) {
    if (k == ignore_index) continue;
    std::uint64_t row = 0, col = 0;
    for (int j = 0; j < c; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    const std::uint64_t tp = cm.at(k, k);
    intersection += tp;
    unions += row + col - tp;
  }
  return unions == 0 ? 1.0 : double(intersection) / double(unions);
}

double miou_micro(const ClassMask& pred, const ClassMask& gt, int num_classes, int ignore_index) {
  return miou_micro(confusion_matrix(pred, gt, num_classes), ignore_index);
}

std::vector<double> per_class_iou(const ConfusionMatrix& cm) {
  const int c = cm.num_classes;
  std::vector<double> out(static_cast<std::size_t>(c));
  for (int k = 0; k < c; ++k) {
    std::uint64_t row = 0, col = 0;
    for (int j = 0; j < c; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    const std::uint64_t u = row + col - cm.at(k, k);
    out[static_cast<std::size_t>(k)] =
        u == 0 ? std::numeric_limits<double>::quiet_NaN() : double(cm.at(k, k)) / double(u);
  }
  return out;
}

std::string metrics_json(const ConfusionMatrix& cm, int ignore_index) {
  nlohmann::ordered_json doc;
  doc["miou"] = miou_micro(cm, ignore_index);
  doc["per_class_iou"] = per_class_iou(cm);  // NaN (empty union) serializes as null
  auto rows = nlohmann::ordered_json::array();
  for (int g = 0; g < cm.num_classes; ++g) {
    auto row = nlohmann::ordered_json::array();
    for (int p = 0; p < cm.num_classes; ++p) row.push_back(cm.at(g, p));
    rows.push_back(std::move(row));
  }
  doc["confusion"] = std::move(rows);
  return doc.dump(2) + "\n";
}

}  // namespace pointgrow
