#include "mtlsar/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtlsar/error.hpp"

namespace mtlsar {

RecognitionLoss recognition_loss(const Tensor& probs, std::span<const std::size_t> labels) {
  const Shape& s = probs.shape();
  require(s.h == 1 && s.w == 1, "recognition_loss: probabilities must be (batch, C, 1, 1)");
  require(labels.size() == s.n, "recognition_loss: label count does not match batch");
  const auto batch = static_cast<double>(s.n);

  RecognitionLoss out;
  out.grad_logits = Tensor(s);
  double total = 0.0;
  for (std::size_t b = 0; b < s.n; ++b) {
    if (labels[b] >= s.c) {
      throw Error(ErrorKind::data, "recognition_loss: label " + std::to_string(labels[b]) + " >= C = " +
                                       std::to_string(s.c));
    }
    const double p_true = probs(b, labels[b], 0, 0);
    total -= std::log(std::max(p_true, kLogFloor));
    for (std::size_t c = 0; c < s.c; ++c) {
      const double target = c == labels[b] ? 1.0 : 0.0;
      out.grad_logits(b, c, 0, 0) = (probs(b, c, 0, 0) - target) / batch;
    }
  }
  out.value = total / batch;
  return out;
}

SegmentationLoss segmentation_loss(const Tensor& logits, std::span<const std::uint8_t> masks) {
  const Shape& s = logits.shape();
  require(s.c >= 2, "segmentation_loss: need at least two segmentation classes");
  const std::size_t pixels = s.plane();
  require(masks.size() == s.n * pixels, "segmentation_loss: mask size does not match logits " + s.str());
  const double scale = 1.0 / (static_cast<double>(pixels) * static_cast<double>(s.n));

  SegmentationLoss out;
  out.grad_logits = Tensor(s);
  std::vector<double> probs(s.c);
  double total = 0.0;
  for (std::size_t b = 0; b < s.n; ++b) {
    const double* base = logits.plane(b, 0);
    double* grad = out.grad_logits.plane(b, 0);
    for (std::size_t i = 0; i < pixels; ++i) {
      const std::uint8_t label = masks[b * pixels + i];
      if (label >= s.c) {
        throw Error(ErrorKind::data, "segmentation_loss: mask value " + std::to_string(label) +
                                         " out of range for V = " + std::to_string(s.c));
      }
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < s.c; ++c) peak = std::max(peak, base[c * pixels + i]);
      double sum = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) {
        probs[c] = std::exp(base[c * pixels + i] - peak);
        sum += probs[c];
      }
      for (std::size_t c = 0; c < s.c; ++c) {
        probs[c] /= sum;
        grad[c * pixels + i] = (probs[c] - (c == label ? 1.0 : 0.0)) * scale;
      }
      // log-sum-exp form: exact even where the softmax underflows.
      total += std::log(sum) - (base[label * pixels + i] - peak);
    }
  }
  out.value = total * scale;
  return out;
}

double joint_loss(double rec, double seg, double lambda_rec, double lambda_seg) {
  require(lambda_rec >= 0.0 && lambda_seg >= 0.0, "joint_loss: weights must be non-negative");
  return lambda_rec * rec + lambda_seg * seg;
}

double SgdState::lr_at(std::size_t e) const {
  if (period == 0) return initial_lr;
  const double steps = static_cast<double>(e / period);
  // Dividing by an integral factor (10 for decay 0.1) yields exactly the
  // decimal rates 1e-4, 1e-5, ... instead of accumulating rounding.
  const double factor = std::round(1.0 / decay);
  if (decay > 0.0 && decay < 1.0 && std::abs(1.0 / decay - factor) < 1e-9) {
    return initial_lr / std::pow(factor, steps);
  }
  return initial_lr * std::pow(decay, steps);
}

void sgd_step(std::span<const ParamRef> params, double lr) {
  for (const ParamRef& p : params) {
    require(p.value.size() == p.grad.size(), "sgd_step: parameter/gradient size mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
  }
}

void sgd_step(MtlNetwork& net, double lr) {
  const auto params = net.parameters();
  sgd_step(params, lr);
  net.mark_updated();
}

std::vector<std::uint8_t> predict_masks(const Tensor& seg_logits) {
  const Shape& s = seg_logits.shape();
  const std::size_t pixels = s.plane();
  std::vector<std::uint8_t> out(s.n * pixels);
  for (std::size_t b = 0; b < s.n; ++b) {
    const double* base = seg_logits.plane(b, 0);
    for (std::size_t i = 0; i < pixels; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < s.c; ++c) {
        if (base[c * pixels + i] > base[best * pixels + i]) best = c;
      }
      out[b * pixels + i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

std::vector<std::size_t> predict_labels(const Tensor& class_probs) {
  const Shape& s = class_probs.shape();
  std::vector<std::size_t> out(s.n);
  for (std::size_t b = 0; b < s.n; ++b) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < s.c; ++c) {
      if (class_probs(b, c, 0, 0) > class_probs(b, best, 0, 0)) best = c;
    }
    out[b] = best;
  }
  return out;
}

}  // namespace mtlsar
