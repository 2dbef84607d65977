#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtlsar/layers.hpp"
#include "mtlsar/rng.hpp"
#include "mtlsar/tensor.hpp"

namespace mtlsar {

/// Topology and hyperparameters of the shared-encoder / dual-decoder network.
struct NetworkConfig {
  std::size_t input_h = 88;
  std::size_t input_w = 88;
  std::size_t num_classes = 10;
  std::size_t num_seg_classes = 2;

  std::array<std::size_t, 3> encoder_channels{16, 32, 64};
  std::array<std::size_t, 3> encoder_kernels{5, 5, 3};
  std::size_t recognition_channels = 128;
  std::size_t recognition_kernel = 3;
  std::size_t fusion_kernel = 3;    // decoder conv after each skip concat
  std::size_t upsample_kernel = 2;  // transposed conv, factor 2
  std::string skip_fusion = "concat";

  double lambda_rec = 1.0;
  double lambda_seg = 1.0;
  double weight_std = 0.01;
  double bias_init = 0.1;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;

  double lr = 0.001;
  double lr_decay = 0.1;
  std::size_t lr_decay_period = 5;  // epochs; 0 disables decay

  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;

  /// Throws Error(invalid_argument) naming the first violated constraint.
  void validate() const;

  bool operator==(const NetworkConfig&) const = default;
};

struct EncoderStage {
  BNParams bn;
  ConvParams conv;
};

struct DecoderStage {
  TransposedConvParams up;
  BNParams bn;  // normalizes the concatenated [up, skip] channels
  ConvParams fuse;
};

/// Named view of one learnable tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

/// Non-learnable persistent state (BN running statistics).
struct BufferRef {
  std::string name;
  std::span<double> value;
};

struct EncoderCache {
  struct Stage {
    BNCache bn;
    ConvCache conv;
    Tensor pre_activation;
    Tensor skip;  // post-ReLU, pre-pool feature handed to the segmentation decoder
    PoolIndices pool;
  };
  std::array<Stage, 3> stages;
  Tensor features;  // output of the last pool
};

struct RecognitionCache {
  BNCache bn;
  ConvCache conv;
  Tensor pre_activation;
  PoolIndices pool;
  BNCache classifier_bn;
  ConvCache classifier;
  Shape classifier_shape;
};

struct SegmentationCache {
  struct Stage {
    TransposedConvCache up;
    std::size_t up_channels = 0;
    BNCache bn;
    ConvCache fuse;
  };
  std::array<Stage, 3> stages;
  BNCache classifier_bn;
  ConvCache classifier;
};

struct ForwardCache {
  Mode mode = Mode::train;
  std::uint64_t parameter_version = 0;
  bool valid = false;
  EncoderCache encoder;
  RecognitionCache recognition;
  SegmentationCache segmentation;
};

struct ForwardOutput {
  Tensor class_logits;  // (batch, C, 1, 1)
  Tensor class_probs;   // (batch, C, 1, 1), rows sum to 1
  Tensor seg_logits;    // (batch, V, h, w)
};

class MtlNetwork {
 public:
  /// Gaussian(0, weight_std) kernels, constant bias_init biases, BN gamma = 1,
  /// beta = 0 with unset running statistics. Draw order is fixed.
  static MtlNetwork build(const NetworkConfig& config, Rng& rng);

  const NetworkConfig& config() const noexcept { return config_; }
  NetworkConfig& mutable_config() noexcept { return config_; }

  /// Runs the encoder once and feeds its features to both decoders.
  ForwardOutput forward(const Tensor& x, Mode mode, ForwardCache* cache = nullptr);

  Tensor encode(const Tensor& x, Mode mode, EncoderCache* cache = nullptr);
  Tensor recognize(const Tensor& features, Mode mode, RecognitionCache* cache = nullptr);
  Tensor segment(const Tensor& features, const EncoderCache& encoder, Mode mode,
                 SegmentationCache* cache = nullptr);

  /// Back-propagates both heads. Gradients are accumulated into the
  /// parameter records; call zero_grad() first for a fresh batch.
  /// `grad_class_logits` is (batch, C, 1, 1); `grad_seg_logits` matches seg_logits.
  void backward(const ForwardCache& cache, const Tensor& grad_class_logits, const Tensor& grad_seg_logits);

  void zero_grad();

  std::vector<ParamRef> parameters();
  std::vector<BufferRef> buffers();

  /// Every batch-norm layer in a fixed order, paired with its name.
  std::vector<std::pair<std::string, BNParams*>> norm_layers();
  std::size_t parameter_count();

  /// Bumped by every optimiser step; caches from older parameters are rejected.
  std::uint64_t parameter_version() const noexcept { return parameter_version_; }
  void mark_updated() noexcept { ++parameter_version_; }

  // Every convolution is preceded by batch normalization.
  std::array<EncoderStage, 3> encoder;
  BNParams recognition_bn;
  ConvParams recognition_conv;
  BNParams classifier_bn;
  ConvParams recognition_classifier;
  std::array<DecoderStage, 3> decoder;
  BNParams segmentation_bn;
  ConvParams segmentation_classifier;

 private:
  NetworkConfig config_;
  std::uint64_t parameter_version_ = 0;
};

/// Spatial sizes after each encoder pool, e.g. {44, 22, 11} for 88 rows.
std::array<std::size_t, 3> encoder_spatial_sizes(std::size_t input);

}  // namespace mtlsar
