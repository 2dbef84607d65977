#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mtlsar/tensor.hpp"

namespace mtlsar {

enum class Mode { train, eval };

/// Deliberate defects for mutation-testing the gradient checker. Process-wide.
enum class Fault { none, conv_backward_sign };
void set_fault(Fault fault);
Fault active_fault();

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip).

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);
std::size_t tconv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

struct ConvParams {
  Tensor weight;  // (out_ch, in_ch, kh, kw)
  std::vector<double> bias;
  std::size_t stride = 1;
  std::size_t pad = 0;
  Tensor grad_weight;
  std::vector<double> grad_bias;

  /// Zero-initialised parameters and gradients.
  static ConvParams make(std::size_t out_ch, std::size_t in_ch, std::size_t kh, std::size_t kw,
                         std::size_t stride = 1, std::size_t pad = 0);

  std::size_t out_channels() const { return weight.shape().n; }
  std::size_t in_channels() const { return weight.shape().c; }
  void zero_grad();
};

struct ConvCache {
  Tensor input;
  Shape output_shape;
};

/// y_j = sum_i x_i (*) w_ij + b_j. `cache` may be null when no backward pass follows.
Tensor conv_forward(const Tensor& x, const ConvParams& p, ConvCache* cache = nullptr);

/// Returns dL/dx and accumulates dL/dw, dL/db into `p`.
Tensor conv_backward(const Tensor& grad_out, const ConvCache& cache, ConvParams& p);

// ---------------------------------------------------------------------------
// Transposed convolution: the adjoint of the strided convolution that shares
// its kernel tensor, plus a bias.

struct TransposedConvParams {
  Tensor weight;  // (in_ch, out_ch, kh, kw)
  std::vector<double> bias;
  std::size_t stride = 2;  // up-sampling factor
  std::size_t pad = 0;
  Tensor grad_weight;
  std::vector<double> grad_bias;

  static TransposedConvParams make(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                                   std::size_t stride = 2, std::size_t pad = 0);

  std::size_t in_channels() const { return weight.shape().n; }
  std::size_t out_channels() const { return weight.shape().c; }
  void zero_grad();
};

struct TransposedConvCache {
  Tensor input;
  Shape output_shape;
};

Tensor tconv_forward(const Tensor& x, const TransposedConvParams& p, TransposedConvCache* cache = nullptr);
Tensor tconv_backward(const Tensor& grad_out, const TransposedConvCache& cache, TransposedConvParams& p);

// ---------------------------------------------------------------------------
// Batch normalisation over (batch, rows, cols) per channel.

struct BNParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  double eps = 1e-5;
  double momentum = 0.9;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool has_running_stats = false;
  std::vector<double> grad_gamma;
  std::vector<double> grad_beta;

  /// gamma = 1, beta = 0, statistics unset.
  static BNParams make(std::size_t channels, double eps = 1e-5, double momentum = 0.9);

  std::size_t channels() const { return gamma.size(); }
  void zero_grad();
};

struct BNCache {
  Mode mode = Mode::train;
  Tensor normalized;           // x_hat
  std::vector<double> inv_std;  // 1 / sqrt(var + eps), per channel
};

/// Train mode normalises with batch statistics and folds them into the
/// running estimates (the first call seeds them). Eval mode uses the running
/// estimates and throws if none exist yet.
Tensor bn_forward(const Tensor& x, BNParams& p, Mode mode, BNCache* cache = nullptr);
Tensor bn_backward(const Tensor& grad_out, const BNCache& cache, BNParams& p);

// ---------------------------------------------------------------------------
// ReLU. The subgradient at exactly zero is zero.

Tensor relu_forward(const Tensor& x);
/// `input` is the tensor that was passed to relu_forward.
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

// ---------------------------------------------------------------------------
// 2x2 max pooling with stride 2.

enum class PoolEdge {
  strict,  // odd rows/cols are an error
  floor,   // a trailing odd row/col is dropped and receives no gradient
};

struct PoolIndices {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::size_t> argmax;  // flat input offset per output element
};

/// Ties resolve to the smallest flat input index in the window.
Tensor maxpool_forward(const Tensor& x, PoolIndices* indices = nullptr, PoolEdge edge = PoolEdge::strict);
Tensor maxpool_backward(const Tensor& grad_out, const PoolIndices& indices);

// ---------------------------------------------------------------------------

/// Numerically stable softmax (max-subtracted).
std::vector<double> softmax(std::span<const double> logits);

/// Row-wise softmax over a (rows, cols) row-major matrix.
std::vector<double> softmax_rows(std::span<const double> logits, std::size_t cols);

}  // namespace mtlsar
