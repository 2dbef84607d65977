// Command-line front end. Talks to the library only through mtlsar.h.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtlsar/mtlsar.h"

namespace {

using json = nlohmann::ordered_json;

struct UsageError {
  std::string message;
};

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError{"cannot read config file " + path};
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw UsageError{"config file " + path + ": " + e.what()};
  }
  if (!j.is_object()) throw UsageError{"config file " + path + " must hold a JSON object"};
  return j;
}

template <typename T>
void override_key(json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

int report(mtlsar_status status) {
  if (status != MTLSAR_OK) std::fprintf(stderr, "error: %s\n", mtlsar_last_error());
  return static_cast<int>(status);
}

void print_epoch(const mtlsar_epoch* e, void*) {
  std::printf("epoch %zu  lr %g  loss %.5f (rec %.5f, seg %.5f)  train acc %.2f%%  pixel acc %.2f%%  %.1fs\n",
              e->epoch, e->lr, e->loss, e->loss_rec, e->loss_seg, 100.0 * e->train_accuracy,
              100.0 * e->train_pixel_accuracy, e->seconds);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task SAR target recognition and segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mtlsar_version()));

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lambda_rec;
  std::optional<double> lambda_seg;
  std::optional<std::size_t> classes;
  std::optional<std::string> scenario;
  std::string method;
  std::string dataset;
  std::string checkpoint;
  std::string resume;
  std::string fault;

  const std::vector<std::string> scenarios{"soc", "eoc-d", "eoc-c", "eoc-v"};

  auto* generate = app.add_subcommand("generate", "Write a synthetic chip corpus");
  generate->add_option("--config", config_path, "Generator spec (JSON)");
  generate->add_option("--out", out_dir, "Output dataset directory")->required();
  generate->add_option("--seed", seed, "Corpus seed (default 0)");
  generate->add_option("--classes", classes, "Number of target classes");

  auto* train = app.add_subcommand("train", "Train the multi-task network");
  train->add_option("dataset", dataset, "Dataset directory or manifest.csv")->required();
  train->add_option("--config", config_path, "Run configuration (JSON)");
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--seed", seed, "Initialisation, augmentation and shuffle seed");
  train->add_option("--epochs", epochs, "Total epochs");
  train->add_option("--batch-size", batch_size, "Mini-batch size");
  train->add_option("--lambda-rec", lambda_rec, "Recognition loss weight");
  train->add_option("--lambda-seg", lambda_seg, "Segmentation loss weight");
  train->add_option("--classes", classes, "Number of target classes");
  train->add_option("--scenario", scenario, "Train/test split")->check(CLI::IsMember(scenarios, CLI::ignore_case));
  train->add_option("--resume", resume, "Continue from a checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and write the metric report");
  eval->add_option("checkpoint", checkpoint, "checkpoint.bin from a training run")->required();
  eval->add_option("dataset", dataset, "Dataset directory or manifest.csv")->required();
  eval->add_option("--out", out_dir, "Report directory")->required();
  eval->add_option("--scenario", scenario, "Test split (default: the training scenario)")
      ->check(CLI::IsMember(scenarios, CLI::ignore_case));

  auto* baseline = app.add_subcommand("baseline", "Classical segmentation baselines");
  baseline->add_option("dataset", dataset, "Dataset directory or manifest.csv")->required();
  baseline->add_option("--method", method, "otsu, canny or ground-truth")->required();
  baseline->add_option("--out", out_dir, "Output directory")->required();
  baseline->add_option("--scenario", scenario, "Restrict to a scenario's test split")
      ->check(CLI::IsMember(scenarios, CLI::ignore_case));

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference verification of every backward pass");
  gradcheck->add_option("--config", config_path, "Options (JSON)");
  gradcheck->add_option("--seed", seed, "Seed for the random instances (default 0)");
  gradcheck->add_option("--out", out_dir, "Directory for gradcheck.json");
  gradcheck->add_option("--inject-fault", fault, "Deliberate backward-pass fault (conv_backward_sign)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return MTLSAR_USAGE;
  }

  try {
    json config = read_config(config_path);

    if (generate->parsed()) {
      override_key(config, "num_classes", classes);
      std::size_t samples = 0;
      const int rc = report(mtlsar_generate(config.dump().c_str(), out_dir.c_str(), seed.value_or(0), &samples));
      if (rc == 0) std::printf("wrote %zu chips to %s\n", samples, out_dir.c_str());
      return rc;
    }

    if (train->parsed()) {
      override_key(config, "seed", seed);
      override_key(config, "epochs", epochs);
      override_key(config, "batch_size", batch_size);
      override_key(config, "lambda_rec", lambda_rec);
      override_key(config, "lambda_seg", lambda_seg);
      override_key(config, "num_classes", classes);
      override_key(config, "scenario", scenario);
      mtlsar_train_result result{};
      const int rc = report(mtlsar_train(config.dump().c_str(), dataset.c_str(), out_dir.c_str(),
                                         resume.empty() ? nullptr : resume.c_str(), print_epoch, nullptr, &result));
      if (rc == 0 && result.test_samples > 0) {
        std::printf("test: %zu chips, recognition %.2f%%, pixel accuracy %.2f%%\n", result.test_samples,
                    100.0 * result.test_recognition, 100.0 * result.test_pixel_accuracy);
      }
      return rc;
    }

    if (eval->parsed()) {
      double rec = 0.0;
      double pix = 0.0;
      const int rc = report(mtlsar_eval(checkpoint.c_str(), dataset.c_str(), scenario ? scenario->c_str() : nullptr,
                                        out_dir.c_str(), &rec, &pix));
      if (rc == 0) std::printf("recognition %.2f%%, pixel accuracy %.2f%%\n", 100.0 * rec, 100.0 * pix);
      return rc;
    }

    if (baseline->parsed()) {
      double pix = 0.0;
      const int rc = report(mtlsar_baseline(method.c_str(), dataset.c_str(), scenario ? scenario->c_str() : nullptr,
                                            out_dir.c_str(), &pix));
      if (rc == 0) std::printf("%s pixel accuracy %.2f%%\n", method.c_str(), 100.0 * pix);
      return rc;
    }

    if (!fault.empty()) config["inject_fault"] = fault;
    char* text = nullptr;
    char* report_json = nullptr;
    const mtlsar_status status = mtlsar_gradcheck(config.dump().c_str(), seed.value_or(0), &text, &report_json);
    if (text != nullptr) std::fputs(text, stdout);
    int rc = report(status);
    if (report_json != nullptr && !out_dir.empty()) {
      const std::string path = out_dir + "/gradcheck.json";
      std::error_code ec;
      std::filesystem::create_directories(out_dir, ec);
      std::ofstream out(path, std::ios::binary);
      out << report_json;
      if (!out) {
        std::fprintf(stderr, "error: cannot write %s\n", path.c_str());
        if (rc == 0) rc = MTLSAR_DATA;
      }
    }
    mtlsar_string_free(text);
    mtlsar_string_free(report_json);
    return rc;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return MTLSAR_USAGE;
  }
}
