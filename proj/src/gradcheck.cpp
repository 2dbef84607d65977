#include "mtlsar/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "mtlsar/error.hpp"
#include "mtlsar/loss.hpp"

namespace mtlsar {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

std::vector<LayerKind> all_layer_kinds() {
  return {LayerKind::conv,    LayerKind::tconv,      LayerKind::batchnorm, LayerKind::relu,
          LayerKind::maxpool, LayerKind::softmax_ce, LayerKind::seg_loss};
}

std::string layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv:
      return "conv";
    case LayerKind::tconv:
      return "tconv";
    case LayerKind::batchnorm:
      return "batchnorm";
    case LayerKind::relu:
      return "relu";
    case LayerKind::maxpool:
      return "maxpool";
    case LayerKind::softmax_ce:
      return "softmax_ce";
    case LayerKind::seg_loss:
      return "seg_loss";
  }
  return "conv";
}

NetworkConfig miniature_config() {
  NetworkConfig c;
  c.input_h = 16;
  c.input_w = 16;
  c.num_classes = 3;
  c.num_seg_classes = 2;
  c.encoder_channels = {4, 8, 8};
  c.recognition_channels = 8;
  c.weight_std = 0.3;
  c.batch_size = 2;
  return c;
}

Fault parse_fault(const std::string& name) {
  if (name.empty() || name == "none") return Fault::none;
  if (name == "conv_backward_sign") return Fault::conv_backward_sign;
  fail("unknown fault '" + name + "' (expected none or conv_backward_sign)");
}

namespace {

using Clock = std::chrono::steady_clock;

struct Tally {
  std::size_t checked = 0;
  double max_err = 0.0;
};

// Central differences of `loss` over every coordinate of `values`.
void compare(std::span<double> values, std::span<const double> analytic, const std::function<double()>& loss,
             double h, Tally& tally) {
  require(values.size() == analytic.size(), "gradcheck: gradient size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double plus = loss();
    values[i] = saved - h;
    const double minus = loss();
    values[i] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    tally.max_err = std::max(tally.max_err, relative_error(analytic[i], numeric));
    ++tally.checked;
  }
}

Tensor random_tensor(Shape s, Rng& rng, double std = 1.0) {
  Tensor t(s);
  for (double& v : t.values()) v = rng.gaussian(0.0, std);
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

void fill_gaussian(std::vector<double>& v, Rng& rng, double mean = 0.0, double std = 1.0) {
  for (double& x : v) x = rng.gaussian(mean, std);
}

void conv_instance(Rng& rng, double h, Tally& t) {
  const std::size_t kh = pick(rng, 1, 3), kw = pick(rng, 1, 3);
  const std::size_t stride = pick(rng, 1, 2);
  const std::size_t pad = pick(rng, 0, std::min(kh, kw) - 1);
  const std::size_t out_ch = pick(rng, 1, 3), in_ch = pick(rng, 1, 3);
  ConvParams p = ConvParams::make(out_ch, in_ch, kh, kw, stride, pad);
  for (double& v : p.weight.values()) v = rng.gaussian();
  fill_gaussian(p.bias, rng);
  Tensor x = random_tensor({pick(rng, 1, 2), p.in_channels(), pick(rng, kh, kh + 4), pick(rng, kw, kw + 4)}, rng);
  ConvCache cache;
  const Tensor y = conv_forward(x, p, &cache);
  const Tensor r = random_tensor(y.shape(), rng);
  p.zero_grad();
  const Tensor dx = conv_backward(r, cache, p);
  auto loss = [&] { return inner_product(conv_forward(x, p), r); };
  compare(x.values(), dx.values(), loss, h, t);
  compare(p.weight.values(), p.grad_weight.values(), loss, h, t);
  compare(p.bias, p.grad_bias, loss, h, t);
}

void tconv_instance(Rng& rng, double h, Tally& t) {
  const std::size_t kh = pick(rng, 1, 4), kw = pick(rng, 1, 4);
  const std::size_t stride = pick(rng, 1, 3);
  const std::size_t pad = pick(rng, 0, (std::min(kh, kw) - 1) / 2);
  const std::size_t in_ch = pick(rng, 1, 3), out_ch = pick(rng, 1, 3);
  TransposedConvParams p = TransposedConvParams::make(in_ch, out_ch, kh, kw, stride, pad);
  for (double& v : p.weight.values()) v = rng.gaussian();
  fill_gaussian(p.bias, rng);
  Tensor x = random_tensor({pick(rng, 1, 2), p.in_channels(), pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
  TransposedConvCache cache;
  const Tensor y = tconv_forward(x, p, &cache);
  const Tensor r = random_tensor(y.shape(), rng);
  p.zero_grad();
  const Tensor dx = tconv_backward(r, cache, p);
  auto loss = [&] { return inner_product(tconv_forward(x, p), r); };
  compare(x.values(), dx.values(), loss, h, t);
  compare(p.weight.values(), p.grad_weight.values(), loss, h, t);
  compare(p.bias, p.grad_bias, loss, h, t);
}

void bn_instance(Rng& rng, double h, Tally& t) {
  const std::size_t c = pick(rng, 1, 3);
  std::size_t n = pick(rng, 1, 3), rows = pick(rng, 1, 4), cols = pick(rng, 1, 4);
  if (n * rows * cols < 2) cols = 2;
  BNParams p = BNParams::make(c);
  for (double& g : p.gamma) g = rng.uniform(0.5, 1.5);
  fill_gaussian(p.beta, rng);
  Tensor x = random_tensor({n, c, rows, cols}, rng, 2.0);
  for (double& v : x.values()) v += 0.5;
  BNCache cache;
  const Tensor y = bn_forward(x, p, Mode::train, &cache);
  const Tensor r = random_tensor(y.shape(), rng);
  p.zero_grad();
  const Tensor dx = bn_backward(r, cache, p);
  auto loss = [&] { return inner_product(bn_forward(x, p, Mode::train), r); };
  compare(x.values(), dx.values(), loss, h, t);
  compare(p.gamma, p.grad_gamma, loss, h, t);
  compare(p.beta, p.grad_beta, loss, h, t);
}

void relu_instance(Rng& rng, double h, Tally& t) {
  Tensor x(Shape{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)});
  // Keep every input away from the kink so the finite-difference step never crosses it.
  for (double& v : x.values()) {
    do {
      v = rng.gaussian();
    } while (std::abs(v) < 1e-2);
  }
  const Tensor r = random_tensor(x.shape(), rng);
  const Tensor dx = relu_backward(r, x);
  auto loss = [&] { return inner_product(relu_forward(x), r); };
  compare(x.values(), dx.values(), loss, h, t);
}

void maxpool_instance(Rng& rng, double h, Tally& t) {
  const bool strict = rng.uniform() < 0.5;
  const std::size_t rows = strict ? 2 * pick(rng, 1, 3) : pick(rng, 2, 7);
  const std::size_t cols = strict ? 2 * pick(rng, 1, 3) : pick(rng, 2, 7);
  Tensor x(Shape{pick(rng, 1, 2), pick(rng, 1, 2), rows, cols});
  // Distinct values at least 1e-2 apart: no window has a near tie.
  std::vector<std::size_t> rank(x.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  for (std::size_t i = rank.size(); i > 1; --i) std::swap(rank[i - 1], rank[pick(rng, 0, i - 1)]);
  for (std::size_t i = 0; i < rank.size(); ++i) x[i] = 0.01 * static_cast<double>(rank[i]) - 0.5;
  const PoolEdge edge = strict ? PoolEdge::strict : PoolEdge::floor;
  PoolIndices idx;
  const Tensor y = maxpool_forward(x, &idx, edge);
  const Tensor r = random_tensor(y.shape(), rng);
  const Tensor dx = maxpool_backward(r, idx);
  auto loss = [&] { return inner_product(maxpool_forward(x, nullptr, edge), r); };
  compare(x.values(), dx.values(), loss, h, t);
}

Tensor probs_of(const Tensor& logits) {
  Tensor p(logits.shape());
  const auto rows = softmax_rows(logits.values(), logits.shape().c);
  std::copy(rows.begin(), rows.end(), p.values().begin());
  return p;
}

void softmax_ce_instance(Rng& rng, double h, Tally& t) {
  const std::size_t n = pick(rng, 1, 4);
  const std::size_t c = pick(rng, 2, 6);
  Tensor logits = random_tensor({n, c, 1, 1}, rng, 2.0);
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) l = pick(rng, 0, c - 1);
  const RecognitionLoss rec = recognition_loss(probs_of(logits), labels);
  auto loss = [&] { return recognition_loss(probs_of(logits), labels).value; };
  compare(logits.values(), rec.grad_logits.values(), loss, h, t);
}

void seg_loss_instance(Rng& rng, double h, Tally& t) {
  const std::size_t n = pick(rng, 1, 2);
  const std::size_t v = pick(rng, 2, 4);
  Tensor logits = random_tensor({n, v, pick(rng, 1, 5), pick(rng, 1, 5)}, rng, 2.0);
  std::vector<std::uint8_t> masks(n * logits.shape().plane());
  for (auto& m : masks) m = static_cast<std::uint8_t>(pick(rng, 0, v - 1));
  const SegmentationLoss seg = segmentation_loss(logits, masks);
  auto loss = [&] { return segmentation_loss(logits, masks).value; };
  compare(logits.values(), seg.grad_logits.values(), loss, h, t);
}

// Activation pattern of every ReLU and pooling switch; finite differences are
// only meaningful while it stays fixed.
std::vector<std::size_t> switch_pattern(const ForwardCache& cache) {
  std::vector<std::size_t> out;
  auto relu_bits = [&](const Tensor& pre) {
    for (double v : pre.values()) out.push_back(v > 0.0 ? 1 : 0);
  };
  for (const auto& s : cache.encoder.stages) {
    relu_bits(s.pre_activation);
    out.insert(out.end(), s.pool.argmax.begin(), s.pool.argmax.end());
  }
  relu_bits(cache.recognition.pre_activation);
  out.insert(out.end(), cache.recognition.pool.argmax.begin(), cache.recognition.pool.argmax.end());
  return out;
}

class FaultGuard {
 public:
  explicit FaultGuard(Fault f) : previous_(active_fault()) { set_fault(f); }
  ~FaultGuard() { set_fault(previous_); }
  FaultGuard(const FaultGuard&) = delete;
  FaultGuard& operator=(const FaultGuard&) = delete;

 private:
  Fault previous_;
};

}  // namespace

GradcheckEntry check_layer(LayerKind kind, std::size_t instances, std::uint64_t seed, double step,
                           double tolerance) {
  const auto start = Clock::now();
  Tally tally;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng(Rng::derive(seed, 100 * static_cast<std::uint64_t>(kind) + i));
    switch (kind) {
      case LayerKind::conv:
        conv_instance(rng, step, tally);
        break;
      case LayerKind::tconv:
        tconv_instance(rng, step, tally);
        break;
      case LayerKind::batchnorm:
        bn_instance(rng, step, tally);
        break;
      case LayerKind::relu:
        relu_instance(rng, step, tally);
        break;
      case LayerKind::maxpool:
        maxpool_instance(rng, step, tally);
        break;
      case LayerKind::softmax_ce:
        softmax_ce_instance(rng, step, tally);
        break;
      case LayerKind::seg_loss:
        seg_loss_instance(rng, step, tally);
        break;
    }
  }
  GradcheckEntry e;
  e.name = layer_kind_name(kind);
  e.instances = instances;
  e.checked = tally.checked;
  e.max_rel_error = tally.max_err;
  e.passed = tally.checked > 0 && tally.max_err < tolerance;
  e.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return e;
}

GradcheckEntry check_network(const NetworkConfig& config, std::size_t batch, std::uint64_t seed, double step,
                             double tolerance) {
  const auto start = Clock::now();
  config.validate();
  Rng rng(seed);
  MtlNetwork net = MtlNetwork::build(config, rng);
  Tensor x(batch, 1, config.input_h, config.input_w);
  for (double& v : x.values()) v = rng.uniform();
  std::vector<std::size_t> labels(batch);
  for (auto& l : labels) l = pick(rng, 0, config.num_classes - 1);
  std::vector<std::uint8_t> masks(batch * config.input_h * config.input_w);
  for (auto& m : masks) m = static_cast<std::uint8_t>(pick(rng, 0, config.num_seg_classes - 1));

  ForwardCache cache;
  auto evaluate = [&](ForwardCache* c) {
    const ForwardOutput out = net.forward(x, Mode::train, c);
    const double rec = recognition_loss(out.class_probs, labels).value;
    const double seg = segmentation_loss(out.seg_logits, masks).value;
    return joint_loss(rec, seg, config.lambda_rec, config.lambda_seg);
  };

  net.zero_grad();
  {
    const ForwardOutput out = net.forward(x, Mode::train, &cache);
    RecognitionLoss rec = recognition_loss(out.class_probs, labels);
    SegmentationLoss seg = segmentation_loss(out.seg_logits, masks);
    for (double& g : rec.grad_logits.values()) g *= config.lambda_rec;
    for (double& g : seg.grad_logits.values()) g *= config.lambda_seg;
    net.backward(cache, rec.grad_logits, seg.grad_logits);
  }
  const auto reference = switch_pattern(cache);

  GradcheckEntry e;
  e.name = "network";
  e.instances = 1;
  ForwardCache probe;
  for (const ParamRef& p : net.parameters()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double plus = evaluate(&probe);
      bool stable = switch_pattern(probe) == reference;
      p.value[i] = saved - step;
      const double minus = evaluate(&probe);
      stable = stable && switch_pattern(probe) == reference;
      p.value[i] = saved;
      if (!stable) {
        ++e.skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * step);
      e.max_rel_error = std::max(e.max_rel_error, relative_error(p.grad[i], numeric));
      ++e.checked;
    }
  }
  e.passed = e.checked > 0 && e.max_rel_error < tolerance && e.skipped * 100 <= e.checked + e.skipped;
  e.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return e;
}

bool GradcheckReport::passed() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

std::string GradcheckReport::text() const {
  std::ostringstream out;
  for (const auto& e : entries) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-10s instances=%-3zu checked=%-6zu skipped=%-3zu max_rel_err=%.3e  %s\n",
                  e.name.c_str(), e.instances, e.checked, e.skipped, e.max_rel_error, e.passed ? "PASS" : "FAIL");
    out << line;
  }
  out << (passed() ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return out.str();
}

std::string GradcheckReport::json() const {
  nlohmann::ordered_json j;
  j["passed"] = passed();
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json row;
    row["layer"] = e.name;
    row["instances"] = e.instances;
    row["checked"] = e.checked;
    row["skipped"] = e.skipped;
    row["max_rel_error"] = e.max_rel_error;
    row["passed"] = e.passed;
    j["entries"].push_back(row);
  }
  return j.dump(2) + "\n";
}

GradcheckReport run_gradcheck(const GradcheckOptions& options, std::uint64_t seed) {
  require(options.step > 0.0 && options.tolerance > 0.0, "gradcheck: step and tolerance must be positive");
  FaultGuard guard(options.fault);
  GradcheckReport report;
  if (options.layers) {
    for (LayerKind kind : all_layer_kinds()) {
      report.entries.push_back(check_layer(kind, options.instances, seed, options.step, options.tolerance));
    }
  }
  if (options.network) {
    report.entries.push_back(check_network(options.network_config, options.network_batch, seed, options.step,
                                           options.tolerance));
  }
  return report;
}

}  // namespace mtlsar
