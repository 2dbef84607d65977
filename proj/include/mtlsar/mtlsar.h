/* C interface to the mtlsar library.
 *
 * Every handle is opaque and owned by the caller once returned; release it
 * with the matching *_release function. Functions returning mtlsar_status
 * leave a message in mtlsar_last_error() when they fail. Strings returned
 * through char** out-parameters are heap allocated and must be freed with
 * mtlsar_string_free().
 */
#ifndef MTLSAR_H
#define MTLSAR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(MTLSAR_BUILDING)
#define MTLSAR_API __declspec(dllexport)
#else
#define MTLSAR_API __declspec(dllimport)
#endif
#else
#define MTLSAR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as process exit codes for the command-line tool. */
typedef enum mtlsar_status {
  MTLSAR_OK = 0,
  MTLSAR_USAGE = 1,  /* bad argument, option or configuration */
  MTLSAR_DATA = 2,   /* unreadable, malformed or inconsistent data */
  MTLSAR_VERIFY = 3  /* a numerical verification failed */
} mtlsar_status;

typedef struct mtlsar_dataset mtlsar_dataset;
typedef struct mtlsar_network mtlsar_network;

typedef struct mtlsar_epoch {
  size_t epoch;
  double lr;
  double loss;
  double loss_rec;
  double loss_seg;
  double train_accuracy;
  double train_pixel_accuracy;
  double seconds;
} mtlsar_epoch;

typedef void (*mtlsar_epoch_fn)(const mtlsar_epoch* epoch, void* user);

typedef struct mtlsar_train_result {
  size_t epochs_run;
  size_t epochs_done;
  size_t test_samples;
  double test_recognition;  /* fractions in [0, 1]; 0 when test_samples is 0 */
  double test_pixel_accuracy;
} mtlsar_train_result;

MTLSAR_API const char* mtlsar_version(void);

/* Message of the last failure on the calling thread, "" if none. */
MTLSAR_API const char* mtlsar_last_error(void);

MTLSAR_API void mtlsar_string_free(char* s);

/* ---- datasets --------------------------------------------------------- */

/* `path` is a dataset directory or its manifest.csv. */
MTLSAR_API mtlsar_status mtlsar_dataset_load(const char* path, mtlsar_dataset** out);
MTLSAR_API void mtlsar_dataset_release(mtlsar_dataset* dataset);
MTLSAR_API size_t mtlsar_dataset_size(const mtlsar_dataset* dataset);
MTLSAR_API size_t mtlsar_dataset_num_classes(const mtlsar_dataset* dataset);

/* Borrowed pointer, valid while the dataset lives. */
MTLSAR_API const char* mtlsar_dataset_class_name(const mtlsar_dataset* dataset, size_t index);

/* Row-major image (values in [0, 1]) and mask pointers stay valid while the
 * dataset lives. Any output pointer may be NULL. */
MTLSAR_API mtlsar_status mtlsar_dataset_sample(const mtlsar_dataset* dataset, size_t index, size_t* height,
                                               size_t* width, size_t* label, const double** image,
                                               const uint8_t** mask);

/* ---- networks --------------------------------------------------------- */

/* Builds a freshly initialised network. `config_json` is a run-config object
 * applied over the defaults; NULL or "" keeps every default. */
MTLSAR_API mtlsar_status mtlsar_network_create(const char* config_json, mtlsar_network** out);
MTLSAR_API mtlsar_status mtlsar_network_load(const char* checkpoint_path, mtlsar_network** out);
MTLSAR_API mtlsar_status mtlsar_network_save(mtlsar_network* network, const char* checkpoint_path);
MTLSAR_API void mtlsar_network_release(mtlsar_network* network);

/* Resolved run configuration as JSON. */
MTLSAR_API mtlsar_status mtlsar_network_config(const mtlsar_network* network, char** json);
MTLSAR_API size_t mtlsar_network_parameter_count(mtlsar_network* network);
MTLSAR_API size_t mtlsar_network_num_classes(const mtlsar_network* network);
MTLSAR_API size_t mtlsar_network_input_size(const mtlsar_network* network);

/* Eval-mode forward pass over `batch` square chips of input_size^2 values.
 * Writes batch x num_classes probabilities and batch x input_size^2 mask
 * labels; either output may be NULL. Needs batch-norm statistics, so the
 * network must have been trained or loaded from a trained checkpoint. */
MTLSAR_API mtlsar_status mtlsar_network_predict(mtlsar_network* network, const double* images, size_t batch,
                                                double* class_probs, uint8_t* masks);

/* ---- workflows -------------------------------------------------------- */

/* Synthetic corpus from a generator spec (NULL or "" = defaults). */
MTLSAR_API mtlsar_status mtlsar_generate(const char* spec_json, const char* out_dir, uint64_t seed,
                                         size_t* samples);

/* Trains on `dataset` and writes config.json, train_log.csv, timing.csv,
 * checkpoint.bin and validation.json under out_dir. When `resume_checkpoint`
 * is set the configuration patch is applied over the checkpoint's stored
 * configuration instead of the defaults. `on_epoch` and `result` may be NULL. */
MTLSAR_API mtlsar_status mtlsar_train(const char* config_json, const char* dataset, const char* out_dir,
                                      const char* resume_checkpoint, mtlsar_epoch_fn on_epoch, void* user,
                                      mtlsar_train_result* result);

/* Evaluates a checkpoint on a scenario's test split (NULL or "" = the
 * scenario it was trained for) and writes the metric report. */
MTLSAR_API mtlsar_status mtlsar_eval(const char* checkpoint_path, const char* dataset, const char* scenario,
                                     const char* out_dir, double* recognition, double* pixel_accuracy);

/* Classical segmentation baseline ("otsu", "canny", "ground-truth"); writes
 * baseline.csv. A NULL or empty scenario evaluates every sample. */
MTLSAR_API mtlsar_status mtlsar_baseline(const char* method, const char* dataset, const char* scenario,
                                         const char* out_dir, double* pixel_accuracy);

/* Finite-difference verification suite. Returns MTLSAR_VERIFY when any
 * check fails; the reports are produced either way. */
MTLSAR_API mtlsar_status mtlsar_gradcheck(const char* options_json, uint64_t seed, char** report_text,
                                          char** report_json);

/* Run-config keys accepted by the configuration functions, comma separated. */
MTLSAR_API mtlsar_status mtlsar_config_keys(char** keys);

#ifdef __cplusplus
}
#endif

#endif
