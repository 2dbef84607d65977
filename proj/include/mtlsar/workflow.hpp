#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "mtlsar/baselines.hpp"
#include "mtlsar/config.hpp"
#include "mtlsar/gradcheck.hpp"
#include "mtlsar/trainer.hpp"

namespace mtlsar {

/// Accepts either a dataset directory or the path of its manifest.csv.
std::string manifest_path(const std::string& dataset);

/// Writes the corpus (images/, masks/, manifest.csv) and generator.json.
Dataset run_generate(const SyntheticSpec& spec, const std::string& out_dir, std::uint64_t seed);

struct TrainOutcome {
  std::size_t epochs_run = 0;
  std::size_t epochs_done = 0;  // including epochs restored from a checkpoint
  EpochSummary last;
  double test_recognition = 0.0;
  double test_pixel_accuracy = 0.0;
  std::size_t test_samples = 0;
};

using EpochCallback = std::function<void(const EpochSummary&)>;

/// Writes config.json, train_log.csv, timing.csv, checkpoint.bin and
/// validation.json (test-split metrics of the final network) under out_dir.
/// With `resume_checkpoint` the network, class list and epoch counter come
/// from the checkpoint and training continues up to config.epochs.
TrainOutcome run_train(const RunConfig& config, const std::string& dataset, const std::string& out_dir,
                       const std::string& resume_checkpoint = {}, const EpochCallback& on_epoch = {});

/// Evaluates a checkpoint on the test split of `scenario` (empty = the
/// scenario stored in the checkpoint) and emits the metric report.
EvalResults run_eval(const std::string& checkpoint, const std::string& dataset, const std::string& scenario,
                     const std::string& out_dir);

/// Runs a classical segmenter over the test split of `scenario`, or over
/// every sample when `scenario` is empty, and writes baseline.csv.
BaselineReport run_baseline(const std::string& method, const std::string& dataset, const std::string& scenario,
                            const std::string& out_dir);

/// Options JSON keys: instances, step, tolerance, layers, network, batch,
/// inject_fault. Unknown keys are rejected.
GradcheckOptions parse_gradcheck_options(const std::string& json_text);

}  // namespace mtlsar
