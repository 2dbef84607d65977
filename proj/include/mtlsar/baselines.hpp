#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtlsar/data.hpp"
#include "mtlsar/tensor.hpp"

namespace mtlsar {

/// 8-bit image, row-major.
struct GrayImage8 {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> pixels;
};

/// Maps [0, 1] reals to floor(255 v + 0.5), clamped.
GrayImage8 quantize8(const Tensor& image);

using Histogram256 = std::array<std::size_t, 256>;

Histogram256 histogram(const GrayImage8& image);

/// omega0 * omega1 * (mu0 - mu1)^2 for the split {<= t} / {> t}.
double between_class_variance(const Histogram256& hist, std::size_t t);

struct OtsuResult {
  std::size_t threshold = 0;
  Mask mask;              // 1 where intensity > threshold
  bool degenerate = false;  // constant image: empty mask
};

/// Maximises the between-class variance with one incremental pass; ties go
/// to the smallest threshold.
OtsuResult otsu_threshold(const GrayImage8& image);

struct CannyOptions {
  double sigma = 1.4;
  double low = 0.7;   // quantile of gradient magnitude
  double high = 0.9;  // quantile of gradient magnitude
  std::size_t closing_iterations = 2;
};

/// Binary edge map after blur, Sobel, non-maximum suppression and hysteresis.
Mask canny_edges(const Tensor& image, const CannyOptions& options);

/// Edge map, 3x3 closing, then filling of closed contours. The filled regions
/// form the target mask.
Mask canny_segment(const Tensor& image, const CannyOptions& options = {});

enum class BaselineMethod { otsu, canny, ground_truth };

BaselineMethod parse_baseline_method(const std::string& name);
std::string baseline_method_name(BaselineMethod method);

/// Pixel accuracies of one method in the target / background / overall layout.
struct BaselineRow {
  std::string label;  // class name or "all"
  std::size_t target_pixels = 0;
  std::size_t target_correct = 0;
  std::size_t background_pixels = 0;
  std::size_t background_correct = 0;

  double target_accuracy() const;
  double background_accuracy() const;
  double overall_accuracy() const;
};

struct BaselineReport {
  std::string method;
  std::vector<BaselineRow> rows;  // one per class, then "all"
  std::size_t degenerate_images = 0;
};

BaselineReport evaluate_baseline(BaselineMethod method, const Dataset& dataset, const CannyOptions& canny = {});

/// method,class,target_pixel_accuracy,background_pixel_accuracy,pixel_accuracy,...counts
std::string baseline_report_csv(const BaselineReport& report);

}  // namespace mtlsar
