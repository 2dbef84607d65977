#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtlsar/rng.hpp"
#include "mtlsar/tensor.hpp"

namespace mtlsar {

/// Per-pixel segmentation labels in {0..V-1}, row-major.
struct Mask {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> labels;

  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, std::uint8_t fill = 0) : h(rows), w(cols), labels(rows * cols, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * w + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * w + x]; }
  std::size_t count(std::uint8_t value) const;
  bool operator==(const Mask&) const = default;
};

struct SampleMeta {
  double depression_deg = 17.0;
  std::string serial;
  std::string split = "train";
  bool operator==(const SampleMeta&) const = default;
};

/// One chip: (1, 1, h, w) image in [0, 1], class label, target mask.
struct Sample {
  Tensor image;
  std::size_t label = 0;
  Mask mask;
  SampleMeta meta;
  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<Sample> samples;
};

// ---------------------------------------------------------------------------
// Synthetic SAR-like chips.

enum class TargetShape { ellipse, rectangle, l_compound };

/// Geometry of one target class, in pixels at the 128-pixel reference chip
/// size (scaled linearly for other chip sizes).
struct ClassGeometry {
  std::string name;
  TargetShape shape = TargetShape::ellipse;
  double length_min = 30.0;
  double length_max = 36.0;
  double aspect_min = 0.4;  // width / length
  double aspect_max = 0.5;
  double reflectivity = 0.5;
  double height = 6.0;  // drives shadow length
};

/// Kind of serial a group of chips carries. Configuration variants attach an
/// extra box to the hull; version variants stretch the hull.
enum class VariantKind { base, configuration, version };

struct AcquisitionGroup {
  double depression_deg = 17.0;
  VariantKind variant = VariantKind::base;
  std::size_t variant_index = 0;
  std::size_t per_class = 0;
  std::string split = "train";
};

struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::vector<ClassGeometry> classes;  // empty -> built-in table
  std::size_t chip_size = 128;
  double looks = 1.0;            // gamma speckle shape; 1 = single-look exponential
  double clutter_level = 0.08;   // mean background intensity
  double shadow_level = 0.015;   // mean shadow intensity
  double center_jitter = 6.0;    // px at the reference size
  std::vector<AcquisitionGroup> groups;  // empty -> default SOC/EOC layout

  /// Fills `classes` and `groups` with defaults when empty.
  SyntheticSpec resolved() const;
  void validate() const;
};

std::vector<ClassGeometry> default_class_table();
std::vector<AcquisitionGroup> default_groups();

std::string serial_for(const std::string& class_name, VariantKind kind, std::size_t index);

/// Nominal [min, max] target pixel count for a class and variant, including
/// a rasterisation allowance along the outline.
std::pair<double, double> target_area_range(const SyntheticSpec& spec, std::size_t class_id, VariantKind variant);

/// One chip (chip_size square): bright speckled target, dark shadow cast
/// down-range (+y), speckled clutter. Mask marks target pixels only.
/// Intensities are quantised to 16 bits.
Sample generate_chip(const SyntheticSpec& spec, std::size_t class_id, const AcquisitionGroup& group, Rng& rng);

/// Whole corpus: every group x class x per_class chip with per-chip seeds
/// derived from `seed` and the chip index.
Dataset generate_corpus(const SyntheticSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Crop augmentation.

struct BoundingBox {
  std::size_t y0, x0, y1, x1;  // inclusive
};

std::optional<BoundingBox> target_bbox(const Mask& mask, std::uint8_t background = 0);

/// `count` random crop x crop windows that keep the whole target inside.
/// Image and mask share offsets.
std::vector<Sample> augment_crops(const Sample& sample, std::size_t count, std::size_t crop, Rng& rng);

/// Crops of every source (crops_per_chip each), topped up with extra random
/// crops of randomly chosen sources (or trimmed) to exactly `quota` when
/// quota > 0. All sources must share one class.
std::vector<Sample> augment_to_quota(std::span<const Sample> sources, std::size_t crops_per_chip,
                                     std::size_t quota, std::size_t crop, Rng& rng);

/// Central crop x crop window.
Sample center_crop_sample(const Sample& sample, std::size_t crop);

// ---------------------------------------------------------------------------
// On-disk datasets: images/, masks/, manifest.csv.

/// Manifest columns: path,mask_path,class,depression,serial,split.
/// Paths are relative to the manifest's directory. When `known_classes` is
/// empty the class list is the sorted set of names in the manifest.
Dataset load_manifest(const std::string& path, std::span<const std::string> known_classes = {});

/// Writes 16-bit image PNGs, 8-bit mask PNGs and manifest.csv under `dir`.
void export_dataset(const Dataset& dataset, const std::string& dir);

// ---------------------------------------------------------------------------

enum class Scenario { soc, eoc_d, eoc_c, eoc_v };

Scenario parse_scenario(const std::string& name);
std::string scenario_name(Scenario scenario);  // "SOC", "EOC-D", ...
VariantKind variant_of(const std::string& serial);

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// SOC: base serials, train split vs test-split chips within 5 degrees of a
/// training depression. EOC-D: base serials, test chips at least 10 degrees
/// from every training depression. EOC-C / EOC-V: base training chips vs
/// configuration / version variants.
Split make_eoc_splits(const Dataset& dataset, Scenario scenario);

}  // namespace mtlsar
