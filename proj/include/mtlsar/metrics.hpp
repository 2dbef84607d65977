#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mtlsar/data.hpp"
#include "mtlsar/tensor.hpp"

namespace mtlsar {

/// C x C counts, row = true class, column = predicted class.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;

  explicit ConfusionMatrix(std::size_t c = 0) : classes(c), counts(c * c, 0) {}

  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * classes + predicted]; }
  void add(std::size_t truth, std::size_t predicted);
  std::size_t row_total(std::size_t truth) const;
  std::size_t total() const;
  std::size_t correct() const;
  /// trace / total, 0 for an empty matrix.
  double recognition_ratio() const;
};

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          std::size_t classes);

/// V x V pixel counts, row = true label, column = predicted label.
struct PixelAccuracyMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;

  explicit PixelAccuracyMatrix(std::size_t v = 0) : classes(v), counts(v * v, 0) {}

  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * classes + predicted]; }
  void add(const Mask& predicted, const Mask& truth);
  std::size_t total() const;
  std::size_t correct() const;
  /// Correct pixels / all pixels.
  double overall() const;
  /// 100 * count / row total; a row without pixels is all zeros.
  std::vector<double> row_percentages(std::size_t truth) const;
};

struct PixelAccuracy {
  double value = 0.0;
  PixelAccuracyMatrix matrix;
};

PixelAccuracy pixel_accuracy(const Mask& predicted, const Mask& truth, std::size_t classes = 2);

/// Counts as percentages in hundredths summing to exactly 10000 (largest
/// remainder, ties to the lower column). All zeros when the row is empty.
std::vector<long long> percent_hundredths(std::span<const std::size_t> row);

/// "12.34" from 1234.
std::string format_hundredths(long long value);

struct EvalRecord {
  std::size_t true_label = 0;
  std::size_t predicted_label = 0;
  Mask true_mask;
  Mask predicted_mask;
  Tensor image;  // kept only for samples that get an overlay
};

struct EvalResults {
  std::string scenario = "SOC";
  std::vector<std::string> class_names;
  std::size_t seg_classes = 2;
  std::vector<EvalRecord> records;
};

ConfusionMatrix results_confusion(const EvalResults& results);
PixelAccuracyMatrix results_pixel_matrix(const EvalResults& results);

/// Table-layout CSV: caption comment line with the overall ratio, header of
/// predicted classes, one row of percentages per true class.
std::string confusion_csv(const ConfusionMatrix& m, std::span<const std::string> names);
std::string confusion_counts_csv(const ConfusionMatrix& m, std::span<const std::string> names);
std::string pixel_accuracy_csv(const PixelAccuracyMatrix& m);
std::string pixel_counts_csv(const PixelAccuracyMatrix& m);
std::string summary_json(const EvalResults& results, std::size_t overlays);

/// RGB overlay: contrast-stretched input, ground-truth outline in green,
/// prediction outline in magenta, shared outline pixels in white.
std::vector<std::uint8_t> render_overlay(const Tensor& image, const Mask& truth, const Mask& predicted);

/// Writes confusion.csv, confusion_counts.csv, pixel_accuracy.csv,
/// pixel_counts.csv, summary.json, and overlays/NNNNNN.png for every record
/// that carries an image.
void emit_report(const EvalResults& results, const std::string& out_dir);

}  // namespace mtlsar
