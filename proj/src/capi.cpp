#include "mtlsar/mtlsar.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include "mtlsar/checkpoint.hpp"
#include "mtlsar/error.hpp"
#include "mtlsar/workflow.hpp"

struct mtlsar_dataset {
  mtlsar::Dataset data;
};

struct mtlsar_network {
  mtlsar::RunConfig config;
  std::vector<std::string> class_names;
  std::size_t epochs_done = 0;
  mtlsar::MtlNetwork net;
};

namespace {

thread_local std::string last_error;

mtlsar_status status_of(mtlsar::ErrorKind kind) {
  switch (kind) {
    case mtlsar::ErrorKind::invalid_argument:
      return MTLSAR_USAGE;
    case mtlsar::ErrorKind::verification:
      return MTLSAR_VERIFY;
    default:
      return MTLSAR_DATA;
  }
}

template <typename F>
mtlsar_status guarded(F&& body) {
  last_error.clear();
  try {
    return body();
  } catch (const mtlsar::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return MTLSAR_DATA;
}

std::string text(const char* s) { return s != nullptr ? s : ""; }

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (p == nullptr) mtlsar::fail(std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* mtlsar_version(void) { return "0.1.0"; }

const char* mtlsar_last_error(void) { return last_error.c_str(); }

void mtlsar_string_free(char* s) { std::free(s); }

mtlsar_status mtlsar_dataset_load(const char* path, mtlsar_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto handle = std::make_unique<mtlsar_dataset>();
    handle->data = mtlsar::load_manifest(mtlsar::manifest_path(path));
    *out = handle.release();
    return MTLSAR_OK;
  });
}

void mtlsar_dataset_release(mtlsar_dataset* dataset) { delete dataset; }

size_t mtlsar_dataset_size(const mtlsar_dataset* dataset) {
  return dataset != nullptr ? dataset->data.samples.size() : 0;
}

size_t mtlsar_dataset_num_classes(const mtlsar_dataset* dataset) {
  return dataset != nullptr ? dataset->data.class_names.size() : 0;
}

const char* mtlsar_dataset_class_name(const mtlsar_dataset* dataset, size_t index) {
  if (dataset == nullptr || index >= dataset->data.class_names.size()) return nullptr;
  return dataset->data.class_names[index].c_str();
}

mtlsar_status mtlsar_dataset_sample(const mtlsar_dataset* dataset, size_t index, size_t* height, size_t* width,
                                    size_t* label, const double** image, const uint8_t** mask) {
  return guarded([&] {
    need(dataset, "dataset");
    mtlsar::require(index < dataset->data.samples.size(), "sample index " + std::to_string(index) + " out of range");
    const mtlsar::Sample& s = dataset->data.samples[index];
    if (height != nullptr) *height = s.mask.h;
    if (width != nullptr) *width = s.mask.w;
    if (label != nullptr) *label = s.label;
    if (image != nullptr) *image = s.image.data();
    if (mask != nullptr) *mask = s.mask.labels.data();
    return MTLSAR_OK;
  });
}

mtlsar_status mtlsar_network_create(const char* config_json, mtlsar_network** out) {
  return guarded([&] {
    need(out, "out");
    auto handle = std::make_unique<mtlsar_network>();
    handle->config = mtlsar::parse_run_config(text(config_json));
    mtlsar::Rng rng(mtlsar::Rng::derive(handle->config.network.seed, 2));
    handle->net = mtlsar::MtlNetwork::build(handle->config.network, rng);
    for (std::size_t c = 0; c < handle->config.network.num_classes; ++c) {
      handle->class_names.push_back("class" + std::to_string(c));
    }
    *out = handle.release();
    return MTLSAR_OK;
  });
}

mtlsar_status mtlsar_network_load(const char* checkpoint_path, mtlsar_network** out) {
  return guarded([&] {
    need(checkpoint_path, "checkpoint_path");
    need(out, "out");
    mtlsar::Checkpoint ck = mtlsar::load_checkpoint(checkpoint_path);
    auto handle = std::make_unique<mtlsar_network>();
    handle->config = std::move(ck.config);
    handle->class_names = std::move(ck.class_names);
    handle->epochs_done = ck.epochs_done;
    handle->net = std::move(ck.network);
    *out = handle.release();
    return MTLSAR_OK;
  });
}

mtlsar_status mtlsar_network_save(mtlsar_network* network, const char* checkpoint_path) {
  return guarded([&] {
    need(network, "network");
    need(checkpoint_path, "checkpoint_path");
    mtlsar::save_checkpoint(checkpoint_path, network->net, network->config, network->class_names,
                            network->epochs_done);
    return MTLSAR_OK;
  });
}

void mtlsar_network_release(mtlsar_network* network) { delete network; }

mtlsar_status mtlsar_network_config(const mtlsar_network* network, char** json) {
  return guarded([&] {
    need(network, "network");
    need(json, "json");
    *json = copy_string(mtlsar::run_config_json(network->config));
    return MTLSAR_OK;
  });
}

size_t mtlsar_network_parameter_count(mtlsar_network* network) {
  return network != nullptr ? network->net.parameter_count() : 0;
}

size_t mtlsar_network_num_classes(const mtlsar_network* network) {
  return network != nullptr ? network->config.network.num_classes : 0;
}

size_t mtlsar_network_input_size(const mtlsar_network* network) {
  return network != nullptr ? network->config.network.input_h : 0;
}

mtlsar_status mtlsar_network_predict(mtlsar_network* network, const double* images, size_t batch,
                                     double* class_probs, uint8_t* masks) {
  return guarded([&] {
    need(network, "network");
    need(images, "images");
    mtlsar::require(batch >= 1, "batch must be >= 1");
    const mtlsar::NetworkConfig& cfg = network->config.network;
    mtlsar::Tensor x(batch, 1, cfg.input_h, cfg.input_w);
    std::copy_n(images, x.size(), x.data());
    const mtlsar::ForwardOutput out = network->net.forward(x, mtlsar::Mode::eval);
    if (class_probs != nullptr) std::copy_n(out.class_probs.data(), out.class_probs.size(), class_probs);
    if (masks != nullptr) {
      const auto labels = mtlsar::predict_masks(out.seg_logits);
      std::copy(labels.begin(), labels.end(), masks);
    }
    return MTLSAR_OK;
  });
}

mtlsar_status mtlsar_generate(const char* spec_json, const char* out_dir, uint64_t seed, size_t* samples) {
  return guarded([&] {
    need(out_dir, "out_dir");
    const mtlsar::SyntheticSpec spec = mtlsar::parse_synthetic_spec(text(spec_json));
    const mtlsar::Dataset d = mtlsar::run_generate(spec, out_dir, seed);
    if (samples != nullptr) *samples = d.samples.size();
    return MTLSAR_OK;
  });
}

mtlsar_status mtlsar_train(const char* config_json, const char* dataset, const char* out_dir,
                           const char* resume_checkpoint, mtlsar_epoch_fn on_epoch, void* user,
                           mtlsar_train_result* result) {
  return guarded([&] {
    need(dataset, "dataset");
    need(out_dir, "out_dir");
    const std::string resume = text(resume_checkpoint);
    mtlsar::RunConfig base;
    if (!resume.empty()) base = mtlsar::load_checkpoint(resume).config;
    const mtlsar::RunConfig config = mtlsar::parse_run_config(text(config_json), base);

    mtlsar::EpochCallback callback;
    if (on_epoch != nullptr) {
      callback = [&](const mtlsar::EpochSummary& s) {
        const mtlsar_epoch e{s.epoch, s.lr, s.loss, s.loss_rec, s.loss_seg, s.train_accuracy, s.train_pixel_accuracy,
                             s.seconds};
        on_epoch(&e, user);
      };
    }
    const mtlsar::TrainOutcome o = mtlsar::run_train(config, dataset, out_dir, resume, callback);
    if (result != nullptr) {
      *result = mtlsar_train_result{o.epochs_run, o.epochs_done, o.test_samples, o.test_recognition,
                                    o.test_pixel_accuracy};
    }
    return MTLSAR_OK;
  });
}

mtlsar_status mtlsar_eval(const char* checkpoint_path, const char* dataset, const char* scenario,
                          const char* out_dir, double* recognition, double* pixel_accuracy) {
  return guarded([&] {
    need(checkpoint_path, "checkpoint_path");
    need(dataset, "dataset");
    need(out_dir, "out_dir");
    const mtlsar::EvalResults r = mtlsar::run_eval(checkpoint_path, dataset, text(scenario), out_dir);
    if (recognition != nullptr) *recognition = mtlsar::results_confusion(r).recognition_ratio();
    if (pixel_accuracy != nullptr) *pixel_accuracy = mtlsar::results_pixel_matrix(r).overall();
    return MTLSAR_OK;
  });
}

mtlsar_status mtlsar_baseline(const char* method, const char* dataset, const char* scenario, const char* out_dir,
                              double* pixel_accuracy) {
  return guarded([&] {
    need(method, "method");
    need(dataset, "dataset");
    need(out_dir, "out_dir");
    const mtlsar::BaselineReport r = mtlsar::run_baseline(method, dataset, text(scenario), out_dir);
    if (pixel_accuracy != nullptr) *pixel_accuracy = r.rows.back().overall_accuracy();
    return MTLSAR_OK;
  });
}

mtlsar_status mtlsar_gradcheck(const char* options_json, uint64_t seed, char** report_text, char** report_json) {
  return guarded([&] {
    const mtlsar::GradcheckOptions options = mtlsar::parse_gradcheck_options(text(options_json));
    const mtlsar::GradcheckReport report = mtlsar::run_gradcheck(options, seed);
    if (report_text != nullptr) *report_text = copy_string(report.text());
    if (report_json != nullptr) *report_json = copy_string(report.json());
    if (!report.passed()) {
      last_error = "gradient check failed";
      return MTLSAR_VERIFY;
    }
    return MTLSAR_OK;
  });
}

mtlsar_status mtlsar_config_keys(char** keys) {
  return guarded([&] {
    need(keys, "keys");
    std::string joined;
    for (const auto& k : mtlsar::run_config_keys()) joined += (joined.empty() ? "" : ",") + k;
    *keys = copy_string(joined);
    return MTLSAR_OK;
  });
}

}  // extern "C"
