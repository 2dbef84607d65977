// Exercises the shared library through its C interface only.
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "mtlsar/mtlsar.h"
#include "scratch.hpp"

namespace {

const char* kSpec = R"({"num_classes": 3, "chip_size": 24, "groups": [
  {"depression_deg": 17, "variant": "base", "variant_index": 0, "per_class": 3, "split": "train"},
  {"depression_deg": 15, "variant": "base", "variant_index": 0, "per_class": 2, "split": "test"}]})";

const char* kConfig = R"({"input_h": 16, "input_w": 16, "num_classes": 3, "encoder_channels": [3, 4, 4],
  "recognition_channels": 4, "batch_size": 4, "lr": 0.05, "weight_std": 0.1, "epochs": 2, "crops_per_chip": 2,
  "overlays": 1})";

void count_epochs(const mtlsar_epoch* e, void* user) {
  auto* seen = static_cast<std::vector<std::size_t>*>(user);
  seen->push_back(e->epoch);
}

}  // namespace

TEST_CASE("status codes and messages") {
  CHECK(std::strlen(mtlsar_version()) > 0);
  mtlsar_network* net = nullptr;
  CHECK(mtlsar_network_create(R"({"no_such_key": 1})", &net) == MTLSAR_USAGE);
  CHECK(net == nullptr);
  CHECK(std::string(mtlsar_last_error()).find("no_such_key") != std::string::npos);
  mtlsar_dataset* ds = nullptr;
  CHECK(mtlsar_dataset_load("/nonexistent/dataset", &ds) == MTLSAR_DATA);
  CHECK(mtlsar_network_create(nullptr, nullptr) == MTLSAR_USAGE);

  char* keys = nullptr;
  REQUIRE(mtlsar_config_keys(&keys) == MTLSAR_OK);
  CHECK(std::string(keys).find("lambda_seg") != std::string::npos);
  mtlsar_string_free(keys);
}

TEST_CASE("network handles") {
  mtlsar_network* net = nullptr;
  REQUIRE(mtlsar_network_create(kConfig, &net) == MTLSAR_OK);
  CHECK(mtlsar_network_num_classes(net) == 3);
  CHECK(mtlsar_network_input_size(net) == 16);
  CHECK(mtlsar_network_parameter_count(net) > 0);
  char* json = nullptr;
  REQUIRE(mtlsar_network_config(net, &json) == MTLSAR_OK);
  CHECK(std::string(json).find("\"batch_size\": 4") != std::string::npos);
  mtlsar_string_free(json);

  std::vector<double> images(16 * 16, 0.5);
  std::vector<double> probs(3);
  // Untrained: no batch statistics yet.
  CHECK(mtlsar_network_predict(net, images.data(), 1, probs.data(), nullptr) != MTLSAR_OK);
  mtlsar_network_release(net);
}

TEST_CASE("generate, train, predict, eval, baseline") {
  ScratchDir dir("capi");
  const std::string data = dir / "data";
  std::size_t generated = 0;
  REQUIRE(mtlsar_generate(kSpec, data.c_str(), 3, &generated) == MTLSAR_OK);
  CHECK(generated == 15);

  mtlsar_dataset* ds = nullptr;
  REQUIRE(mtlsar_dataset_load(data.c_str(), &ds) == MTLSAR_OK);
  CHECK(mtlsar_dataset_size(ds) == 15);
  CHECK(mtlsar_dataset_num_classes(ds) == 3);
  std::size_t h = 0, w = 0, label = 99;
  const double* image = nullptr;
  const std::uint8_t* mask = nullptr;
  REQUIRE(mtlsar_dataset_sample(ds, 0, &h, &w, &label, &image, &mask) == MTLSAR_OK);
  CHECK(h == 24);
  CHECK(w == 24);
  CHECK(label < 3);
  CHECK(image[0] >= 0.0);
  CHECK(mtlsar_dataset_sample(ds, 15, &h, &w, &label, &image, &mask) == MTLSAR_USAGE);
  mtlsar_dataset_release(ds);

  std::vector<std::size_t> seen;
  mtlsar_train_result result{};
  const std::string run = dir / "run";
  REQUIRE(mtlsar_train(kConfig, data.c_str(), run.c_str(), nullptr, count_epochs, &seen, &result) == MTLSAR_OK);
  CHECK(seen == std::vector<std::size_t>{0, 1});
  CHECK(result.epochs_run == 2);
  CHECK(result.test_samples == 6);

  const std::string ckpt = run + "/checkpoint.bin";
  mtlsar_network* net = nullptr;
  REQUIRE(mtlsar_network_load(ckpt.c_str(), &net) == MTLSAR_OK);
  std::vector<double> images(2 * 16 * 16, 0.2);
  std::vector<double> probs(2 * 3);
  std::vector<std::uint8_t> masks(2 * 16 * 16);
  REQUIRE(mtlsar_network_predict(net, images.data(), 2, probs.data(), masks.data()) == MTLSAR_OK);
  CHECK(std::abs(probs[0] + probs[1] + probs[2] - 1.0) < 1e-12);
  mtlsar_network_release(net);

  double rec = -1.0, pix = -1.0;
  const std::string eval = dir / "eval";
  REQUIRE(mtlsar_eval(ckpt.c_str(), data.c_str(), nullptr, eval.c_str(), &rec, &pix) == MTLSAR_OK);
  CHECK(rec == result.test_recognition);
  CHECK(pix == result.test_pixel_accuracy);

  const std::string base = dir / "base";
  REQUIRE(mtlsar_baseline("ground-truth", data.c_str(), nullptr, base.c_str(), &pix) == MTLSAR_OK);
  CHECK(pix == 1.0);
  CHECK(mtlsar_baseline("sobel", data.c_str(), nullptr, base.c_str(), &pix) == MTLSAR_USAGE);
}

TEST_CASE("gradcheck through the C interface") {
  char* text = nullptr;
  char* json = nullptr;
  REQUIRE(mtlsar_gradcheck(R"({"instances": 2, "network": false})", 1, &text, &json) == MTLSAR_OK);
  CHECK(std::string(text).find("conv") != std::string::npos);
  mtlsar_string_free(text);
  mtlsar_string_free(json);
  REQUIRE(mtlsar_gradcheck(R"({"instances": 2, "network": false, "inject_fault": "conv_backward_sign"})", 1, &text,
                           &json) == MTLSAR_VERIFY);
  mtlsar_string_free(text);
  mtlsar_string_free(json);
}
