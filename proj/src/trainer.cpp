#include "mtlsar/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <thread>

#include "mtlsar/error.hpp"

namespace mtlsar {

namespace {

constexpr std::uint64_t kAugmentStream = 1;
constexpr std::uint64_t kShuffleStream = 1000;

Split checked_split(const Dataset& dataset, const RunConfig& config) {
  const NetworkConfig& net = config.network;
  if (dataset.class_names.size() != net.num_classes) {
    throw Error(ErrorKind::data, "dataset has " + std::to_string(dataset.class_names.size()) +
                                     " classes but the config expects num_classes = " +
                                     std::to_string(net.num_classes));
  }
  require(net.input_h == net.input_w, "prepare_data: square inputs only");
  Split split = make_eoc_splits(dataset, parse_scenario(config.scenario));
  for (const auto* part : {&split.train, &split.test}) {
    for (const Sample& s : *part) {
      if (s.mask.h < net.input_h || s.mask.w < net.input_w) {
        throw Error(ErrorKind::data, "chip of " + std::to_string(s.mask.h) + "x" + std::to_string(s.mask.w) +
                                         " is smaller than the network input");
      }
      for (std::uint8_t v : s.mask.labels) {
        if (v >= net.num_seg_classes) throw Error(ErrorKind::data, "mask label exceeds num_seg_classes");
      }
    }
  }
  return split;
}

}  // namespace

PreparedData prepare_data(const Dataset& dataset, const RunConfig& config) {
  const NetworkConfig& net = config.network;
  const Split split = checked_split(dataset, config);
  PreparedData out;
  out.class_names = dataset.class_names;
  Rng rng(Rng::derive(net.seed, kAugmentStream));
  const std::size_t crops = std::max<std::size_t>(config.crops_per_chip, 1);
  for (std::size_t c = 0; c < net.num_classes; ++c) {
    std::vector<Sample> sources;
    for (const Sample& s : split.train) {
      if (s.label == c) sources.push_back(s);
    }
    if (sources.empty()) continue;
    auto crops_c = augment_to_quota(sources, crops, config.class_quota, net.input_h, rng);
    for (auto& s : crops_c) out.train.push_back(std::move(s));
  }
  for (const Sample& s : split.test) out.test.push_back(center_crop_sample(s, net.input_h));
  return out;
}

std::vector<Sample> prepare_test(const Dataset& dataset, const RunConfig& config) {
  const Split split = checked_split(dataset, config);
  std::vector<Sample> out;
  for (const Sample& s : split.test) out.push_back(center_crop_sample(s, config.network.input_h));
  return out;
}

Tensor stack_images(std::span<const Sample> samples) {
  require(!samples.empty(), "stack_images: empty batch");
  const Shape& s0 = samples.front().image.shape();
  Tensor out(samples.size(), 1, s0.h, s0.w);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require(samples[i].image.shape() == s0, "stack_images: samples differ in size");
    std::copy(samples[i].image.values().begin(), samples[i].image.values().end(), out.plane(i, 0));
  }
  return out;
}

std::vector<std::uint8_t> stack_masks(std::span<const Sample> samples) {
  std::vector<std::uint8_t> out;
  for (const Sample& s : samples) out.insert(out.end(), s.mask.labels.begin(), s.mask.labels.end());
  return out;
}

std::vector<std::size_t> stack_labels(std::span<const Sample> samples) {
  std::vector<std::size_t> out;
  for (const Sample& s : samples) out.push_back(s.label);
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::derive(seed, kShuffleStream + epoch));
  for (std::size_t i = count; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

EpochSummary train_epoch(MtlNetwork& net, std::span<const Sample> samples, std::size_t epoch) {
  require(!samples.empty(), "train_epoch: no training samples");
  const NetworkConfig& cfg = net.config();
  const auto start = std::chrono::steady_clock::now();
  SgdState sgd{cfg.lr, cfg.lr_decay, cfg.lr_decay_period, epoch};
  const double lr = sgd.lr();
  const auto order = epoch_order(samples.size(), cfg.seed, epoch);
  const std::size_t batch = std::max<std::size_t>(cfg.batch_size, 1);

  EpochSummary sum;
  sum.epoch = epoch;
  sum.lr = lr;
  std::size_t correct = 0;
  std::size_t pixels = 0;
  std::size_t pixels_correct = 0;
  std::vector<Sample> chunk;
  ForwardCache cache;
  for (std::size_t begin = 0; begin < order.size(); begin += batch) {
    const std::size_t end = std::min(order.size(), begin + batch);
    chunk.clear();
    for (std::size_t i = begin; i < end; ++i) chunk.push_back(samples[order[i]]);
    const Tensor x = stack_images(chunk);
    const auto labels = stack_labels(chunk);
    const auto masks = stack_masks(chunk);

    net.zero_grad();
    const ForwardOutput out = net.forward(x, Mode::train, &cache);
    RecognitionLoss rec = recognition_loss(out.class_probs, labels);
    SegmentationLoss seg = segmentation_loss(out.seg_logits, masks);
    for (double& g : rec.grad_logits.values()) g *= cfg.lambda_rec;
    for (double& g : seg.grad_logits.values()) g *= cfg.lambda_seg;
    net.backward(cache, rec.grad_logits, seg.grad_logits);
    sgd_step(net, lr);

    const auto n = static_cast<double>(chunk.size());
    sum.loss_rec += rec.value * n;
    sum.loss_seg += seg.value * n;
    sum.loss += joint_loss(rec.value, seg.value, cfg.lambda_rec, cfg.lambda_seg) * n;
    const auto predicted = predict_labels(out.class_probs);
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i] ? 1 : 0;
    const auto predicted_masks = predict_masks(out.seg_logits);
    for (std::size_t i = 0; i < masks.size(); ++i) pixels_correct += predicted_masks[i] == masks[i] ? 1 : 0;
    pixels += masks.size();
  }
  const auto total = static_cast<double>(samples.size());
  sum.loss /= total;
  sum.loss_rec /= total;
  sum.loss_seg /= total;
  sum.train_accuracy = static_cast<double>(correct) / total;
  sum.train_pixel_accuracy = static_cast<double>(pixels_correct) / static_cast<double>(pixels);
  sum.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sum;
}

std::size_t default_threads() {
  std::size_t n = std::max<std::size_t>(std::thread::hardware_concurrency(), 1);
  if (const char* env = std::getenv("MTLSAR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) n = std::min(n, static_cast<std::size_t>(v));
  }
  return n;
}

EvalResults evaluate(const MtlNetwork& net, std::span<const Sample> samples,
                     const std::vector<std::string>& class_names, const std::string& scenario,
                     std::size_t overlays, std::size_t threads) {
  EvalResults results;
  results.scenario = scenario;
  results.class_names = class_names;
  results.seg_classes = net.config().num_seg_classes;
  results.records.resize(samples.size());
  if (samples.empty()) return results;

  const std::size_t workers = std::min(samples.size(), threads == 0 ? default_threads() : threads);
  const std::size_t batch = std::max<std::size_t>(net.config().batch_size, 1);

  // Eval-mode outputs are per-sample, so the split across workers and batches
  // does not change any record.
  auto work = [&](std::size_t first, std::size_t last) {
    MtlNetwork local = net;
    for (std::size_t begin = first; begin < last; begin += batch) {
      const std::size_t end = std::min(last, begin + batch);
      const auto chunk = samples.subspan(begin, end - begin);
      const ForwardOutput out = local.forward(stack_images(chunk), Mode::eval);
      const auto labels = predict_labels(out.class_probs);
      const auto masks = predict_masks(out.seg_logits);
      std::size_t offset = 0;
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        EvalRecord& r = results.records[begin + i];
        r.true_label = chunk[i].label;
        r.predicted_label = labels[i];
        r.true_mask = chunk[i].mask;
        r.predicted_mask = Mask(chunk[i].mask.h, chunk[i].mask.w);
        std::copy_n(masks.begin() + static_cast<std::ptrdiff_t>(offset), r.predicted_mask.labels.size(),
                    r.predicted_mask.labels.begin());
        offset += r.predicted_mask.labels.size();
        if (begin + i < overlays) r.image = chunk[i].image;
      }
    }
  };

  if (workers <= 1) {
    work(0, samples.size());
    return results;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t per = (samples.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t first = w * per;
    const std::size_t last = std::min(samples.size(), first + per);
    if (first >= last) break;
    pool.emplace_back([&, w, first, last] {
      try {
        work(first, last);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

std::string epoch_log_header() { return "epoch,lr,loss,loss_rec,loss_seg,train_acc,train_pixel_acc"; }

std::string epoch_log_row(const EpochSummary& e) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", e.epoch, e.lr, e.loss, e.loss_rec,
                e.loss_seg, e.train_accuracy, e.train_pixel_accuracy);
  return buf;
}

}  // namespace mtlsar
