#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mtlsar/network.hpp"
#include "mtlsar/tensor.hpp"

namespace mtlsar {

/// Floor applied to probabilities before taking logs.
inline constexpr double kLogFloor = 1e-12;

struct LossValue {
  double rec = 0.0;
  double seg = 0.0;
  double total = 0.0;
  double lambda_rec = 1.0;
  double lambda_seg = 1.0;
};

struct RecognitionLoss {
  double value = 0.0;
  Tensor grad_logits;  // (batch, C, 1, 1): (p - y) / batch
};

/// Batch-mean cross-entropy of softmax outputs `probs` (batch, C, 1, 1)
/// against class indices. The gradient is with respect to the pre-softmax
/// logits (fused softmax + cross-entropy).
RecognitionLoss recognition_loss(const Tensor& probs, std::span<const std::size_t> labels);

struct SegmentationLoss {
  double value = 0.0;
  Tensor grad_logits;  // (p - s) / (pixels * batch)
};

/// Per-pixel softmax over the V channels of `logits` (batch, V, h, w), then
/// cross-entropy averaged over the h*w pixels of each chip and over the batch.
/// `masks` holds batch*h*w class indices in row-major order.
SegmentationLoss segmentation_loss(const Tensor& logits, std::span<const std::uint8_t> masks);

/// lambda_rec * rec + lambda_seg * seg.
double joint_loss(double rec, double seg, double lambda_rec, double lambda_seg);

/// Step-decay learning-rate schedule: lr(epoch) = lr0 * decay^floor(epoch / period).
struct SgdState {
  double initial_lr = 0.001;
  double decay = 0.1;
  std::size_t period = 5;  // 0 keeps the rate constant
  std::size_t epoch = 0;

  double lr() const { return lr_at(epoch); }
  double lr_at(std::size_t e) const;
};

/// w <- w - lr * dL/dw for every listed tensor.
void sgd_step(std::span<const ParamRef> params, double lr);

/// Convenience: steps every learnable tensor of the network and invalidates
/// outstanding forward caches.
void sgd_step(MtlNetwork& net, double lr);

/// argmax over channels per pixel; (batch*h*w) labels.
std::vector<std::uint8_t> predict_masks(const Tensor& seg_logits);

/// argmax per row of (batch, C, 1, 1).
std::vector<std::size_t> predict_labels(const Tensor& class_probs);

}  // namespace mtlsar
