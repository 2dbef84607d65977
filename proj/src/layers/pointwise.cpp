#include <algorithm>
#include <cmath>
#include <limits>

#include "mtlsar/error.hpp"
#include "mtlsar/layers.hpp"

namespace mtlsar {

Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  require(grad_out.shape() == input.shape(), "relu_backward: gradient shape does not match forward input");
  Tensor grad_in(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) grad_in[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return grad_in;
}

Tensor maxpool_forward(const Tensor& x, PoolIndices* indices, PoolEdge edge) {
  const Shape& s = x.shape();
  if (edge == PoolEdge::strict) {
    require(s.h % 2 == 0 && s.w % 2 == 0, "maxpool_forward: spatial size " + s.str() + " is not divisible by 2");
  }
  require(s.h >= 2 && s.w >= 2, "maxpool_forward: input smaller than the 2x2 window");
  const Shape out_shape{s.n, s.c, s.h / 2, s.w / 2};
  Tensor y(out_shape);
  std::vector<std::size_t> argmax(out_shape.count());

  std::size_t out_index = 0;
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (b * s.c + c) * s.plane();
      for (std::size_t oy = 0; oy < out_shape.h; ++oy) {
        for (std::size_t ox = 0; ox < out_shape.w; ++ox, ++out_index) {
          // Row-major scan with strict '>' keeps the smallest flat index on ties.
          std::size_t best = base + (2 * oy) * s.w + 2 * ox;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = base + (2 * oy + dy) * s.w + 2 * ox + dx;
              if (x[idx] > x[best]) best = idx;
            }
          }
          y[out_index] = x[best];
          argmax[out_index] = best;
        }
      }
    }
  }
  if (indices != nullptr) {
    indices->input_shape = s;
    indices->output_shape = out_shape;
    indices->argmax = std::move(argmax);
  }
  return y;
}

Tensor maxpool_backward(const Tensor& grad_out, const PoolIndices& indices) {
  require(grad_out.shape() == indices.output_shape, "maxpool_backward: gradient shape does not match forward");
  require(indices.argmax.size() == grad_out.size(), "maxpool_backward: corrupted index cache");
  Tensor grad_in(indices.input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const std::size_t target = indices.argmax[i];
    require(target < grad_in.size(), "maxpool_backward: stored index out of bounds");
    grad_in[target] += grad_out[i];
  }
  return grad_in;
}

std::vector<double> softmax(std::span<const double> logits) {
  require(logits.size() >= 2, "softmax needs at least two classes");
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    require(std::isfinite(v), "softmax: non-finite logit");
    peak = std::max(peak, v);
  }
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - peak);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

std::vector<double> softmax_rows(std::span<const double> logits, std::size_t cols) {
  require(cols >= 2 && logits.size() % cols == 0, "softmax_rows: bad row length");
  std::vector<double> out;
  out.reserve(logits.size());
  for (std::size_t r = 0; r < logits.size() / cols; ++r) {
    const auto row = softmax(logits.subspan(r * cols, cols));
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

}  // namespace mtlsar
