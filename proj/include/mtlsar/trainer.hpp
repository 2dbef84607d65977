#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtlsar/config.hpp"
#include "mtlsar/data.hpp"
#include "mtlsar/loss.hpp"
#include "mtlsar/metrics.hpp"
#include "mtlsar/network.hpp"

namespace mtlsar {

/// Training and test samples at network input size.
struct PreparedData {
  std::vector<std::string> class_names;
  std::vector<Sample> train;  // random crops of the scenario's training chips
  std::vector<Sample> test;   // central crops of the scenario's test chips
};

/// Splits by scenario, draws crops_per_chip crops per training chip (topped
/// up to class_quota when set) and centre-crops the test chips. Chips must be
/// at least as large as the network input. Throws Error(data) when the
/// dataset does not match the configured class count.
PreparedData prepare_data(const Dataset& dataset, const RunConfig& config);

/// Central crops of the scenario's test chips only.
std::vector<Sample> prepare_test(const Dataset& dataset, const RunConfig& config);

/// Stacks samples [begin, end) into a (n, 1, h, w) batch plus flat masks.
Tensor stack_images(std::span<const Sample> samples);
std::vector<std::uint8_t> stack_masks(std::span<const Sample> samples);
std::vector<std::size_t> stack_labels(std::span<const Sample> samples);

struct EpochSummary {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // sample-weighted means over the epoch
  double loss_rec = 0.0;
  double loss_seg = 0.0;
  double train_accuracy = 0.0;        // train-mode predictions made before each step
  double train_pixel_accuracy = 0.0;
  double seconds = 0.0;
};

/// One pass over `samples` in a shuffled order drawn from (seed, epoch), with
/// mini-batches of config.batch_size and plain SGD at the scheduled rate.
EpochSummary train_epoch(MtlNetwork& net, std::span<const Sample> samples, std::size_t epoch);

/// Shuffle order used by train_epoch.
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch);

/// Eval-mode predictions, split across `threads` workers (0 = MTLSAR_THREADS
/// or hardware concurrency). The first `overlays` records keep their image.
EvalResults evaluate(const MtlNetwork& net, std::span<const Sample> samples,
                     const std::vector<std::string>& class_names, const std::string& scenario,
                     std::size_t overlays = 0, std::size_t threads = 0);

/// Worker count from MTLSAR_THREADS, else hardware concurrency, at least 1.
std::size_t default_threads();

/// "epoch,lr,loss,loss_rec,loss_seg,train_acc,train_pixel_acc"
std::string epoch_log_header();
std::string epoch_log_row(const EpochSummary& e);

}  // namespace mtlsar
