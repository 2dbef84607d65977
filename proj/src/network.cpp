#include "mtlsar/network.hpp"

#include <algorithm>

#include "mtlsar/error.hpp"

namespace mtlsar {

namespace {

const char* const kStageNames[3] = {"1", "2", "3"};

void init_conv(ConvParams& p, const NetworkConfig& config, Rng& rng) {
  p.weight = gaussian_fill(p.weight.shape(), 0.0, config.weight_std, rng);
  std::fill(p.bias.begin(), p.bias.end(), config.bias_init);
}

void init_tconv(TransposedConvParams& p, const NetworkConfig& config, Rng& rng) {
  p.weight = gaussian_fill(p.weight.shape(), 0.0, config.weight_std, rng);
  std::fill(p.bias.begin(), p.bias.end(), config.bias_init);
}

void add_conv(std::vector<ParamRef>& out, const std::string& name, ConvParams& p) {
  out.push_back({name + ".weight", p.weight.values(), p.grad_weight.values()});
  out.push_back({name + ".bias", p.bias, p.grad_bias});
}

void add_tconv(std::vector<ParamRef>& out, const std::string& name, TransposedConvParams& p) {
  out.push_back({name + ".weight", p.weight.values(), p.grad_weight.values()});
  out.push_back({name + ".bias", p.bias, p.grad_bias});
}

void add_bn(std::vector<ParamRef>& out, const std::string& name, BNParams& p) {
  out.push_back({name + ".gamma", p.gamma, p.grad_gamma});
  out.push_back({name + ".beta", p.beta, p.grad_beta});
}

}  // namespace

std::array<std::size_t, 3> encoder_spatial_sizes(std::size_t input) {
  return {input / 2, input / 4, input / 8};
}

void NetworkConfig::validate() const {
  require(input_h % 8 == 0 && input_w % 8 == 0, "input size must be divisible by 8 (three 2x2 pools)");
  require(input_h >= 16 && input_w >= 16, "input size must be at least 16x16");
  require(num_classes >= 2, "num_classes must be >= 2");
  require(num_seg_classes >= 2, "num_seg_classes must be >= 2");
  for (std::size_t i = 0; i < 3; ++i) {
    require(encoder_channels[i] >= 1, "encoder channel counts must be >= 1");
    require(encoder_kernels[i] % 2 == 1, "encoder kernel sizes must be odd ('same' padding)");
  }
  require(recognition_channels >= 1, "recognition_channels must be >= 1");
  require(recognition_kernel % 2 == 1, "recognition_kernel must be odd");
  require(fusion_kernel % 2 == 1, "fusion_kernel must be odd");
  require(upsample_kernel >= 2 && upsample_kernel % 2 == 0, "upsample_kernel must be even and >= 2");
  require(skip_fusion == "concat", "skip_fusion must be \"concat\"");
  require(lambda_rec >= 0.0 && lambda_seg >= 0.0, "loss weights must be non-negative");
  require(weight_std >= 0.0, "weight_std must be non-negative");
  require(bn_eps > 0.0, "bn_eps must be positive");
  require(bn_momentum > 0.0 && bn_momentum < 1.0, "bn_momentum must lie in (0, 1)");
  require(lr >= 0.0, "lr must be non-negative");
  require(lr_decay > 0.0, "lr_decay must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
}

MtlNetwork MtlNetwork::build(const NetworkConfig& config, Rng& rng) {
  config.validate();
  MtlNetwork net;
  net.config_ = config;

  std::size_t in_ch = 1;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t k = config.encoder_kernels[i];
    net.encoder[i].bn = BNParams::make(in_ch, config.bn_eps, config.bn_momentum);
    net.encoder[i].conv = ConvParams::make(config.encoder_channels[i], in_ch, k, k, 1, k / 2);
    in_ch = config.encoder_channels[i];
  }

  const std::size_t rk = config.recognition_kernel;
  const auto bn = [&](std::size_t channels) {
    return BNParams::make(channels, config.bn_eps, config.bn_momentum);
  };
  net.recognition_bn = bn(in_ch);
  net.recognition_conv = ConvParams::make(config.recognition_channels, in_ch, rk, rk, 1, rk / 2);
  net.classifier_bn = bn(config.recognition_channels);
  net.recognition_classifier = ConvParams::make(config.num_classes, config.recognition_channels, 1, 1);

  // Decoder stage i up-samples to the resolution of encoder stage 2 - i and
  // fuses with that stage's skip feature.
  const std::size_t uk = config.upsample_kernel;
  const std::size_t fk = config.fusion_kernel;
  std::size_t dec_in = in_ch;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t skip_ch = config.encoder_channels[2 - i];
    net.decoder[i].up = TransposedConvParams::make(dec_in, skip_ch, uk, uk, 2, (uk - 2) / 2);
    net.decoder[i].bn = bn(2 * skip_ch);
    net.decoder[i].fuse = ConvParams::make(skip_ch, 2 * skip_ch, fk, fk, 1, fk / 2);
    dec_in = skip_ch;
  }
  net.segmentation_bn = bn(dec_in);
  net.segmentation_classifier = ConvParams::make(config.num_seg_classes, dec_in, 1, 1);

  for (auto& stage : net.encoder) init_conv(stage.conv, config, rng);
  init_conv(net.recognition_conv, config, rng);
  init_conv(net.recognition_classifier, config, rng);
  for (auto& stage : net.decoder) {
    init_tconv(stage.up, config, rng);
    init_conv(stage.fuse, config, rng);
  }
  init_conv(net.segmentation_classifier, config, rng);
  return net;
}

Tensor MtlNetwork::encode(const Tensor& x, Mode mode, EncoderCache* cache) {
  Tensor h = x;
  for (std::size_t i = 0; i < 3; ++i) {
    EncoderStage& stage = encoder[i];
    EncoderCache::Stage* sc = cache != nullptr ? &cache->stages[i] : nullptr;
    Tensor normalized = bn_forward(h, stage.bn, mode, sc != nullptr ? &sc->bn : nullptr);
    Tensor pre = conv_forward(normalized, stage.conv, sc != nullptr ? &sc->conv : nullptr);
    Tensor activated = relu_forward(pre);
    h = maxpool_forward(activated, sc != nullptr ? &sc->pool : nullptr);
    if (sc != nullptr) {
      sc->pre_activation = std::move(pre);
      sc->skip = std::move(activated);
    }
  }
  if (cache != nullptr) cache->features = h;
  return h;
}

Tensor MtlNetwork::recognize(const Tensor& features, Mode mode, RecognitionCache* cache) {
  const bool keep = cache != nullptr;
  Tensor normalized = bn_forward(features, recognition_bn, mode, keep ? &cache->bn : nullptr);
  Tensor pre = conv_forward(normalized, recognition_conv, keep ? &cache->conv : nullptr);
  Tensor pooled = maxpool_forward(relu_forward(pre), keep ? &cache->pool : nullptr, PoolEdge::floor);
  pooled = bn_forward(pooled, classifier_bn, mode, keep ? &cache->classifier_bn : nullptr);
  Tensor scores = conv_forward(pooled, recognition_classifier, keep ? &cache->classifier : nullptr);

  // Global average over the remaining spatial grid.
  const Shape& s = scores.shape();
  Tensor logits(s.n, s.c, 1, 1);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const double* plane = scores.plane(b, c);
      double sum = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) sum += plane[i];
      logits(b, c, 0, 0) = sum / static_cast<double>(s.plane());
    }
  }
  if (cache != nullptr) {
    cache->pre_activation = std::move(pre);
    cache->classifier_shape = s;
  }
  return logits;
}

Tensor MtlNetwork::segment(const Tensor& features, const EncoderCache& enc, Mode mode, SegmentationCache* cache) {
  Tensor h = features;
  for (std::size_t i = 0; i < 3; ++i) {
    DecoderStage& stage = decoder[i];
    SegmentationCache::Stage* sc = cache != nullptr ? &cache->stages[i] : nullptr;
    Tensor up = tconv_forward(h, stage.up, sc != nullptr ? &sc->up : nullptr);
    const Tensor& skip = enc.stages[2 - i].skip;
    require(up.shape().h == skip.shape().h && up.shape().w == skip.shape().w,
            "segmentation decoder: up-sampled " + up.shape().str() + " does not align with skip " +
                skip.shape().str());
    if (sc != nullptr) sc->up_channels = up.shape().c;
    Tensor fused = bn_forward(concat_channels(up, skip), stage.bn, mode, sc != nullptr ? &sc->bn : nullptr);
    h = conv_forward(fused, stage.fuse, sc != nullptr ? &sc->fuse : nullptr);
  }
  h = bn_forward(h, segmentation_bn, mode, cache != nullptr ? &cache->classifier_bn : nullptr);
  return conv_forward(h, segmentation_classifier, cache != nullptr ? &cache->classifier : nullptr);
}

ForwardOutput MtlNetwork::forward(const Tensor& x, Mode mode, ForwardCache* cache) {
  const Shape& s = x.shape();
  require(s.c == 1 && s.h == config_.input_h && s.w == config_.input_w,
          "network input " + s.str() + " does not match configured (batch, 1, " + std::to_string(config_.input_h) +
              ", " + std::to_string(config_.input_w) + ")");

  EncoderCache local_encoder;
  EncoderCache& enc = cache != nullptr ? cache->encoder : local_encoder;
  Tensor features = encode(x, mode, &enc);

  ForwardOutput out;
  out.class_logits = recognize(features, mode, cache != nullptr ? &cache->recognition : nullptr);
  out.seg_logits = segment(features, enc, mode, cache != nullptr ? &cache->segmentation : nullptr);

  const std::size_t classes = config_.num_classes;
  out.class_probs = Tensor(s.n, classes, 1, 1);
  const auto probs = softmax_rows(out.class_logits.values(), classes);
  std::copy(probs.begin(), probs.end(), out.class_probs.data());

  if (cache != nullptr) {
    cache->mode = mode;
    cache->parameter_version = parameter_version_;
    cache->valid = true;
  }
  return out;
}

void MtlNetwork::backward(const ForwardCache& cache, const Tensor& grad_class_logits, const Tensor& grad_seg_logits) {
  require(cache.valid, "backward: cache was not filled by forward");
  if (cache.parameter_version != parameter_version_) {
    fail("backward: stale cache (parameters changed since the forward pass)");
  }
  const Tensor& features = cache.encoder.features;
  const std::size_t batch = features.shape().n;
  require(grad_class_logits.shape() == Shape{batch, config_.num_classes, 1, 1},
          "backward: class gradient has shape " + grad_class_logits.shape().str());

  // Recognition head.
  const Shape& cs = cache.recognition.classifier_shape;
  Tensor grad_scores(cs);
  for (std::size_t b = 0; b < cs.n; ++b) {
    for (std::size_t c = 0; c < cs.c; ++c) {
      const double g = grad_class_logits(b, c, 0, 0) / static_cast<double>(cs.plane());
      double* plane = grad_scores.plane(b, c);
      std::fill_n(plane, cs.plane(), g);
    }
  }
  Tensor g = conv_backward(grad_scores, cache.recognition.classifier, recognition_classifier);
  g = bn_backward(g, cache.recognition.classifier_bn, classifier_bn);
  g = maxpool_backward(g, cache.recognition.pool);
  g = relu_backward(g, cache.recognition.pre_activation);
  g = conv_backward(g, cache.recognition.conv, recognition_conv);
  Tensor grad_features = bn_backward(g, cache.recognition.bn, recognition_bn);

  // Segmentation head; skip gradients are collected per encoder stage.
  std::array<Tensor, 3> grad_skip;
  Tensor d = conv_backward(grad_seg_logits, cache.segmentation.classifier, segmentation_classifier);
  d = bn_backward(d, cache.segmentation.classifier_bn, segmentation_bn);
  for (std::size_t i = 3; i-- > 0;) {
    const auto& sc = cache.segmentation.stages[i];
    Tensor grad_concat = conv_backward(d, sc.fuse, decoder[i].fuse);
    grad_concat = bn_backward(grad_concat, sc.bn, decoder[i].bn);
    auto [grad_up, grad_sk] = split_channels(grad_concat, sc.up_channels);
    grad_skip[2 - i] = std::move(grad_sk);
    d = tconv_backward(grad_up, sc.up, decoder[i].up);
  }
  add_inplace(grad_features, d);

  // Shared encoder receives the sum of both task errors.
  Tensor grad = std::move(grad_features);
  for (std::size_t i = 3; i-- > 0;) {
    const auto& sc = cache.encoder.stages[i];
    Tensor grad_act = maxpool_backward(grad, sc.pool);
    add_inplace(grad_act, grad_skip[i]);
    Tensor grad_pre = relu_backward(grad_act, sc.pre_activation);
    Tensor grad_norm = conv_backward(grad_pre, sc.conv, encoder[i].conv);
    grad = bn_backward(grad_norm, sc.bn, encoder[i].bn);
  }
}

void MtlNetwork::zero_grad() {
  for (auto& [name, bn] : norm_layers()) bn->zero_grad();
  for (auto& stage : encoder) stage.conv.zero_grad();
  recognition_conv.zero_grad();
  recognition_classifier.zero_grad();
  for (auto& stage : decoder) {
    stage.up.zero_grad();
    stage.fuse.zero_grad();
  }
  segmentation_classifier.zero_grad();
}

std::vector<std::pair<std::string, BNParams*>> MtlNetwork::norm_layers() {
  std::vector<std::pair<std::string, BNParams*>> out;
  for (std::size_t i = 0; i < 3; ++i) out.emplace_back(std::string("encoder") + kStageNames[i] + ".bn", &encoder[i].bn);
  out.emplace_back("recognition.bn", &recognition_bn);
  out.emplace_back("recognition.classifier_bn", &classifier_bn);
  for (std::size_t i = 0; i < 3; ++i) out.emplace_back(std::string("decoder") + kStageNames[i] + ".bn", &decoder[i].bn);
  out.emplace_back("segmentation.bn", &segmentation_bn);
  return out;
}

std::vector<ParamRef> MtlNetwork::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string base = std::string("encoder") + kStageNames[i];
    add_bn(out, base + ".bn", encoder[i].bn);
    add_conv(out, base + ".conv", encoder[i].conv);
  }
  add_bn(out, "recognition.bn", recognition_bn);
  add_conv(out, "recognition.conv", recognition_conv);
  add_bn(out, "recognition.classifier_bn", classifier_bn);
  add_conv(out, "recognition.classifier", recognition_classifier);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string base = std::string("decoder") + kStageNames[i];
    add_tconv(out, base + ".up", decoder[i].up);
    add_bn(out, base + ".bn", decoder[i].bn);
    add_conv(out, base + ".fuse", decoder[i].fuse);
  }
  add_bn(out, "segmentation.bn", segmentation_bn);
  add_conv(out, "segmentation.classifier", segmentation_classifier);
  return out;
}

std::vector<BufferRef> MtlNetwork::buffers() {
  std::vector<BufferRef> out;
  for (auto& [name, bn] : norm_layers()) {
    out.push_back({name + ".running_mean", bn->running_mean});
    out.push_back({name + ".running_var", bn->running_var});
  }
  return out;
}

std::size_t MtlNetwork::parameter_count() {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.value.size();
  return total;
}

}  // namespace mtlsar
