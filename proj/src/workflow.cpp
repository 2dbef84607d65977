#include "mtlsar/workflow.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "mtlsar/checkpoint.hpp"
#include "mtlsar/error.hpp"

namespace mtlsar {

namespace fs = std::filesystem;

namespace {

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::io, "cannot create directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

class LineFile {
 public:
  LineFile(const std::string& path, const std::string& header) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorKind::io, "cannot write " + path);
    line(header);
  }
  void line(const std::string& text) {
    out_ << text << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorKind::io, "write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

bool same_topology(const NetworkConfig& a, const NetworkConfig& b) {
  return a.input_h == b.input_h && a.input_w == b.input_w && a.num_classes == b.num_classes &&
         a.num_seg_classes == b.num_seg_classes && a.encoder_channels == b.encoder_channels &&
         a.encoder_kernels == b.encoder_kernels && a.recognition_channels == b.recognition_channels &&
         a.recognition_kernel == b.recognition_kernel && a.fusion_kernel == b.fusion_kernel &&
         a.upsample_kernel == b.upsample_kernel && a.skip_fusion == b.skip_fusion;
}

std::string display_scenario(const std::string& name) { return scenario_name(parse_scenario(name)); }

}  // namespace

std::string manifest_path(const std::string& dataset) {
  if (fs::is_directory(dataset)) return join(dataset, "manifest.csv");
  return dataset;
}

Dataset run_generate(const SyntheticSpec& spec, const std::string& out_dir, std::uint64_t seed) {
  Dataset dataset = generate_corpus(spec, seed);
  make_dir(out_dir);
  export_dataset(dataset, out_dir);
  write_text_file(join(out_dir, "generator.json"), synthetic_spec_json(spec));
  return dataset;
}

TrainOutcome run_train(const RunConfig& config, const std::string& dataset, const std::string& out_dir,
                       const std::string& resume_checkpoint, const EpochCallback& on_epoch) {
  config.network.validate();
  require(config.network.epochs >= 1, "epochs must be >= 1");

  MtlNetwork net;
  std::vector<std::string> known_classes;
  std::size_t start = 0;
  if (!resume_checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(resume_checkpoint);
    if (!same_topology(ck.config.network, config.network)) {
      throw Error(ErrorKind::data, "checkpoint " + resume_checkpoint + " was built for a different network layout");
    }
    net = std::move(ck.network);
    net.mutable_config() = config.network;
    known_classes = std::move(ck.class_names);
    start = ck.epochs_done;
  } else {
    Rng rng(Rng::derive(config.network.seed, 2));
    net = MtlNetwork::build(config.network, rng);
  }

  const Dataset data = load_manifest(manifest_path(dataset), known_classes);
  const PreparedData prepared = prepare_data(data, config);
  if (prepared.train.empty()) {
    throw Error(ErrorKind::data, "no training samples for scenario " + display_scenario(config.scenario));
  }

  make_dir(out_dir);
  write_text_file(join(out_dir, "config.json"), run_config_json(config));
  LineFile log(join(out_dir, "train_log.csv"), epoch_log_header());
  LineFile timing(join(out_dir, "timing.csv"), "epoch,seconds");

  TrainOutcome outcome;
  for (std::size_t e = start; e < config.network.epochs; ++e) {
    outcome.last = train_epoch(net, prepared.train, e);
    log.line(epoch_log_row(outcome.last));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.3f", e, outcome.last.seconds);
    timing.line(buf);
    ++outcome.epochs_run;
    if (on_epoch) on_epoch(outcome.last);
  }
  outcome.epochs_done = std::max(start, config.network.epochs);
  save_checkpoint(join(out_dir, "checkpoint.bin"), net, config, prepared.class_names, outcome.epochs_done);

  const EvalResults results =
      evaluate(net, prepared.test, prepared.class_names, display_scenario(config.scenario));
  outcome.test_samples = results.records.size();
  if (!results.records.empty()) {
    outcome.test_recognition = results_confusion(results).recognition_ratio();
    outcome.test_pixel_accuracy = results_pixel_matrix(results).overall();
    write_text_file(join(out_dir, "validation.json"), summary_json(results, 0));
  }
  return outcome;
}

EvalResults run_eval(const std::string& checkpoint, const std::string& dataset, const std::string& scenario,
                     const std::string& out_dir) {
  Checkpoint ck = load_checkpoint(checkpoint);
  RunConfig config = ck.config;
  if (!scenario.empty()) config.scenario = scenario;
  const std::string name = display_scenario(config.scenario);

  const Dataset data = load_manifest(manifest_path(dataset), ck.class_names);
  const std::vector<Sample> test = prepare_test(data, config);
  if (test.empty()) throw Error(ErrorKind::data, "no test samples for scenario " + name);

  EvalResults results = evaluate(ck.network, test, ck.class_names, name, config.overlays);
  emit_report(results, out_dir);
  return results;
}

BaselineReport run_baseline(const std::string& method, const std::string& dataset, const std::string& scenario,
                            const std::string& out_dir) {
  const BaselineMethod m = parse_baseline_method(method);
  Dataset data = load_manifest(manifest_path(dataset));
  if (!scenario.empty()) {
    Split split = make_eoc_splits(data, parse_scenario(scenario));
    data.samples = std::move(split.test);
    if (data.samples.empty()) throw Error(ErrorKind::data, "no test samples for scenario " + display_scenario(scenario));
  }
  BaselineReport report = evaluate_baseline(m, data);
  make_dir(out_dir);
  write_text_file(join(out_dir, "baseline.csv"), baseline_report_csv(report));
  return report;
}

GradcheckOptions parse_gradcheck_options(const std::string& json_text) {
  GradcheckOptions options;
  if (json_text.empty()) return options;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("gradcheck options: ") + e.what());
  }
  require(j.is_object(), "gradcheck options must be a JSON object");
  const char* const valid = "instances, step, tolerance, layers, network, batch, inject_fault";
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "instances") {
        options.instances = value.get<std::size_t>();
      } else if (key == "step") {
        options.step = value.get<double>();
      } else if (key == "tolerance") {
        options.tolerance = value.get<double>();
      } else if (key == "layers") {
        options.layers = value.get<bool>();
      } else if (key == "network") {
        options.network = value.get<bool>();
      } else if (key == "batch") {
        options.network_batch = value.get<std::size_t>();
      } else if (key == "inject_fault") {
        options.fault = parse_fault(value.get<std::string>());
      } else {
        fail("unknown gradcheck option '" + key + "'; valid keys: " + valid);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("gradcheck options: ") + e.what());
  }
  require(options.instances >= 1, "gradcheck instances must be >= 1");
  require(options.step > 0.0, "gradcheck step must be positive");
  require(options.tolerance > 0.0, "gradcheck tolerance must be positive");
  require(options.network_batch >= 1, "gradcheck batch must be >= 1");
  return options;
}

}  // namespace mtlsar
