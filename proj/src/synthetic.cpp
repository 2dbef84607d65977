#include <algorithm>
#include <cmath>
#include <numbers>

#include "mtlsar/data.hpp"
#include "mtlsar/error.hpp"

namespace mtlsar {

std::size_t Mask::count(std::uint8_t value) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), value));
}

std::vector<ClassGeometry> default_class_table() {
  using enum TargetShape;
  return {
      {"class_00", ellipse, 34, 40, 0.45, 0.55, 0.55, 6},
      {"class_01", rectangle, 24, 30, 0.35, 0.45, 0.40, 5},
      {"class_02", l_compound, 42, 48, 0.55, 0.65, 0.50, 7},
      {"class_03", ellipse, 20, 24, 0.75, 0.90, 0.65, 4},
      {"class_04", rectangle, 40, 46, 0.30, 0.38, 0.45, 8},
      {"class_05", l_compound, 26, 32, 0.60, 0.70, 0.60, 5},
      {"class_06", ellipse, 42, 48, 0.30, 0.38, 0.42, 6},
      {"class_07", rectangle, 18, 22, 0.80, 0.95, 0.55, 4},
      {"class_08", l_compound, 34, 40, 0.40, 0.48, 0.38, 9},
      {"class_09", ellipse, 28, 34, 0.55, 0.65, 0.35, 5},
  };
}

std::vector<AcquisitionGroup> default_groups() {
  return {
      {17.0, VariantKind::base, 0, 64, "train"},
      {15.0, VariantKind::base, 0, 32, "test"},
      {30.0, VariantKind::base, 0, 32, "test"},
      {15.0, VariantKind::configuration, 1, 16, "test"},
      {15.0, VariantKind::version, 1, 16, "test"},
  };
}

SyntheticSpec SyntheticSpec::resolved() const {
  SyntheticSpec out = *this;
  if (out.classes.empty()) {
    auto table = default_class_table();
    require(num_classes <= table.size(), "the built-in class table has only " + std::to_string(table.size()) +
                                             " entries; supply explicit class geometry");
    out.classes.assign(table.begin(), table.begin() + static_cast<std::ptrdiff_t>(num_classes));
  }
  if (out.groups.empty()) out.groups = default_groups();
  return out;
}

void SyntheticSpec::validate() const {
  require(num_classes >= 2, "synthetic spec: need at least two classes");
  require(classes.empty() || classes.size() == num_classes, "synthetic spec: class table size differs from num_classes");
  require(chip_size >= 16, "synthetic spec: chip_size must be >= 16");
  require(looks > 0.0, "synthetic spec: looks must be positive");
  require(clutter_level > 0.0 && shadow_level > 0.0, "synthetic spec: intensity levels must be positive");
  for (const auto& c : classes) {
    require(c.length_min > 0.0 && c.length_max >= c.length_min, "class " + c.name + ": bad length range");
    require(c.aspect_min > 0.0 && c.aspect_max >= c.aspect_min && c.aspect_max <= 1.0,
            "class " + c.name + ": bad aspect range");
    require(c.reflectivity > 0.0 && c.height > 0.0, "class " + c.name + ": reflectivity and height must be positive");
  }
  for (const auto& g : groups) {
    require(g.depression_deg > 0.0 && g.depression_deg < 90.0, "acquisition group depression must lie in (0, 90)");
    require(g.split == "train" || g.split == "test", "acquisition group split must be train or test");
  }
}

std::string serial_for(const std::string& class_name, VariantKind kind, std::size_t index) {
  switch (kind) {
    case VariantKind::base:
      return class_name + "-base";
    case VariantKind::configuration:
      return class_name + "-cfg" + std::to_string(index);
    case VariantKind::version:
      return class_name + "-ver" + std::to_string(index);
  }
  return class_name;
}

namespace {

constexpr double kVersionStretch = 1.15;
constexpr double kVersionSlim = 0.9;
constexpr double kAttachmentLength = 0.4;  // fraction of hull length
constexpr double kAttachmentWidth = 0.3;   // fraction of hull width

double area_factor(TargetShape shape) {
  switch (shape) {
    case TargetShape::ellipse:
      return std::numbers::pi / 4.0;
    case TargetShape::rectangle:
      return 1.0;
    case TargetShape::l_compound:
      return 0.45 + 0.4 * 0.55;  // long bar plus end block
  }
  return 1.0;
}

struct Hull {
  TargetShape shape;
  double length;
  double width;
  double angle;
  double cy, cx;
  bool attachment;
};

// Point (y, x) in chip coordinates inside the hull?
bool inside(const Hull& hull, double y, double x) {
  const double dy = y - hull.cy;
  const double dx = x - hull.cx;
  const double c = std::cos(hull.angle);
  const double s = std::sin(hull.angle);
  const double u = c * dx + s * dy;   // along the major axis
  const double v = -s * dx + c * dy;  // along the minor axis
  const double hl = hull.length / 2.0;
  const double hw = hull.width / 2.0;

  bool in = false;
  switch (hull.shape) {
    case TargetShape::ellipse:
      in = (u * u) / (hl * hl) + (v * v) / (hw * hw) <= 1.0;
      break;
    case TargetShape::rectangle:
      in = std::abs(u) <= hl && std::abs(v) <= hw;
      break;
    case TargetShape::l_compound: {
      const bool bar = std::abs(u) <= hl && v >= -hw && v <= -hw + 0.45 * hull.width;
      const bool block = u >= hl - 0.4 * hull.length && u <= hl && std::abs(v) <= hw;
      in = bar || block;
      break;
    }
  }
  if (!in && hull.attachment) {
    const double al = kAttachmentLength * hull.length / 2.0;
    in = std::abs(u) <= al && v >= hw && v <= hw + kAttachmentWidth * hull.width;
  }
  return in;
}

std::uint16_t quantize16(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(v * 65535.0));
}

}  // namespace

std::pair<double, double> target_area_range(const SyntheticSpec& spec, std::size_t class_id, VariantKind variant) {
  const SyntheticSpec full = spec.resolved();
  require(class_id < full.classes.size(), "target_area_range: class out of range");
  const ClassGeometry& g = full.classes[class_id];
  const double scale = static_cast<double>(full.chip_size) / 128.0;
  double lmin = g.length_min * scale;
  double lmax = g.length_max * scale;
  double wmin = lmin * g.aspect_min;
  double wmax = lmax * g.aspect_max;
  if (variant == VariantKind::version) {
    lmin *= kVersionStretch;
    lmax *= kVersionStretch;
    wmin *= kVersionStretch * kVersionSlim;
    wmax *= kVersionStretch * kVersionSlim;
  }
  const double f = area_factor(g.shape);
  double lo = f * lmin * wmin;
  double hi = f * lmax * wmax;
  if (variant == VariantKind::configuration) hi += kAttachmentLength * kAttachmentWidth * lmax * wmax;
  // Pixel-centre sampling can gain or lose up to about one pixel along the outline.
  const double slack_lo = 2.0 * (lmin + wmin);
  const double slack_hi = 2.0 * (lmax + wmax) * (variant == VariantKind::configuration ? 1.5 : 1.0);
  return {std::max(1.0, lo - slack_lo), hi + slack_hi};
}

Sample generate_chip(const SyntheticSpec& spec_in, std::size_t class_id, const AcquisitionGroup& group, Rng& rng) {
  const SyntheticSpec spec = spec_in.resolved();
  spec.validate();
  if (class_id >= spec.classes.size()) {
    fail("generate_chip: class " + std::to_string(class_id) + " >= " + std::to_string(spec.classes.size()));
  }
  const ClassGeometry& geo = spec.classes[class_id];
  const std::size_t n = spec.chip_size;
  const double scale = static_cast<double>(n) / 128.0;

  Hull hull;
  hull.shape = geo.shape;
  hull.length = rng.uniform(geo.length_min, geo.length_max) * scale;
  hull.width = hull.length * rng.uniform(geo.aspect_min, geo.aspect_max);
  hull.angle = rng.uniform(0.0, std::numbers::pi);
  const double jitter = spec.center_jitter * scale;
  hull.cy = static_cast<double>(n) / 2.0 + rng.uniform(-jitter, jitter);
  hull.cx = static_cast<double>(n) / 2.0 + rng.uniform(-jitter, jitter);
  hull.attachment = group.variant == VariantKind::configuration;
  if (group.variant == VariantKind::version) {
    hull.length *= kVersionStretch;
    hull.width *= kVersionStretch * kVersionSlim;
  }

  Mask mask(n, n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      if (inside(hull, static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) mask.at(y, x) = 1;
    }
  }

  // Radar illuminates from -y; the shadow runs down-range behind the target.
  const double shadow_len = geo.height * scale / std::tan(group.depression_deg * std::numbers::pi / 180.0);
  Mask shadow(n, n);
  for (std::size_t x = 0; x < n; ++x) {
    double last_target = -1e9;
    for (std::size_t y = 0; y < n; ++y) {
      if (mask.at(y, x) != 0) {
        last_target = static_cast<double>(y);
      } else if (static_cast<double>(y) - last_target <= shadow_len) {
        shadow.at(y, x) = 1;
      }
    }
  }

  const double speckle_scale = 1.0 / spec.looks;
  std::vector<std::uint16_t> levels(n * n);
  for (std::size_t i = 0; i < n * n; ++i) {
    double mean = spec.clutter_level;
    if (mask.labels[i] != 0) {
      mean = geo.reflectivity;
    } else if (shadow.labels[i] != 0) {
      mean = spec.shadow_level;
    }
    levels[i] = quantize16(mean * rng.gamma(spec.looks, speckle_scale));
  }

  Sample sample;
  sample.image = Tensor(1, 1, n, n);
  for (std::size_t i = 0; i < n * n; ++i) sample.image[i] = static_cast<double>(levels[i]) / 65535.0;
  sample.label = class_id;
  sample.mask = std::move(mask);
  sample.meta.depression_deg = group.depression_deg;
  sample.meta.serial = serial_for(geo.name, group.variant, group.variant_index);
  sample.meta.split = group.split;
  return sample;
}

Dataset generate_corpus(const SyntheticSpec& spec_in, std::uint64_t seed) {
  const SyntheticSpec spec = spec_in.resolved();
  spec.validate();
  Dataset out;
  for (const auto& c : spec.classes) out.class_names.push_back(c.name);
  std::uint64_t chip_index = 0;
  for (const auto& group : spec.groups) {
    for (std::size_t k = 0; k < group.per_class; ++k) {
      for (std::size_t c = 0; c < spec.classes.size(); ++c) {
        Rng rng(Rng::derive(seed, chip_index++));
        out.samples.push_back(generate_chip(spec, c, group, rng));
      }
    }
  }
  return out;
}

std::optional<BoundingBox> target_bbox(const Mask& mask, std::uint8_t background) {
  std::optional<BoundingBox> box;
  for (std::size_t y = 0; y < mask.h; ++y) {
    for (std::size_t x = 0; x < mask.w; ++x) {
      if (mask.at(y, x) == background) continue;
      if (!box) {
        box = BoundingBox{y, x, y, x};
      } else {
        box->y0 = std::min(box->y0, y);
        box->x0 = std::min(box->x0, x);
        box->y1 = std::max(box->y1, y);
        box->x1 = std::max(box->x1, x);
      }
    }
  }
  return box;
}

namespace {

Sample crop_sample(const Sample& sample, std::size_t y0, std::size_t x0, std::size_t crop) {
  Sample out;
  out.image = mtlsar::crop(sample.image, y0, x0, crop, crop);
  out.label = sample.label;
  out.mask = Mask(crop, crop);
  for (std::size_t y = 0; y < crop; ++y) {
    for (std::size_t x = 0; x < crop; ++x) out.mask.at(y, x) = sample.mask.at(y0 + y, x0 + x);
  }
  out.meta = sample.meta;
  return out;
}

// Admissible offsets along one axis keeping [lo, hi] inside the window.
std::pair<std::size_t, std::size_t> offset_range(std::size_t size, std::size_t crop, std::size_t lo, std::size_t hi) {
  const std::size_t max_offset = size - crop;
  const std::size_t first = hi + 1 > crop ? hi + 1 - crop : 0;
  const std::size_t last = std::min(lo, max_offset);
  return {first, last};
}

}  // namespace

std::vector<Sample> augment_crops(const Sample& sample, std::size_t count, std::size_t crop, Rng& rng) {
  const std::size_t h = sample.mask.h;
  const std::size_t w = sample.mask.w;
  require(sample.image.shape().h == h && sample.image.shape().w == w, "augment_crops: image/mask size mismatch");
  require(crop >= 1 && crop <= h && crop <= w, "augment_crops: crop larger than chip");

  const auto box = target_bbox(sample.mask);
  const BoundingBox b = box.value_or(BoundingBox{0, 0, 0, 0});
  const auto [y_first, y_last] = box ? offset_range(h, crop, b.y0, b.y1) : std::pair<std::size_t, std::size_t>{0, h - crop};
  const auto [x_first, x_last] = box ? offset_range(w, crop, b.x0, b.x1) : std::pair<std::size_t, std::size_t>{0, w - crop};
  if (y_first > y_last || x_first > x_last) {
    throw Error(ErrorKind::data, "augment_crops: target bounding box does not fit in a " + std::to_string(crop) +
                                     "-pixel crop");
  }

  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto y0 = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(y_first), static_cast<std::int64_t>(y_last)));
    const auto x0 = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(x_first), static_cast<std::int64_t>(x_last)));
    out.push_back(crop_sample(sample, y0, x0, crop));
  }
  return out;
}

std::vector<Sample> augment_to_quota(std::span<const Sample> sources, std::size_t crops_per_chip, std::size_t quota,
                                     std::size_t crop, Rng& rng) {
  std::vector<Sample> out;
  if (sources.empty()) return out;
  for (const Sample& s : sources) {
    require(s.label == sources.front().label, "augment_to_quota: sources span several classes");
    auto crops = augment_crops(s, crops_per_chip, crop, rng);
    std::move(crops.begin(), crops.end(), std::back_inserter(out));
  }
  if (quota == 0) return out;
  while (out.size() < quota) {
    const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(sources.size()) - 1));
    out.push_back(std::move(augment_crops(sources[pick], 1, crop, rng).front()));
  }
  if (out.size() > quota) {
    // Keep a uniformly random subset, preserving the original order.
    std::vector<std::size_t> order(out.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(order[i], order[j]);
    }
    order.resize(quota);
    std::sort(order.begin(), order.end());
    std::vector<Sample> kept;
    kept.reserve(quota);
    for (std::size_t i : order) kept.push_back(std::move(out[i]));
    out = std::move(kept);
  }
  return out;
}

Sample center_crop_sample(const Sample& sample, std::size_t crop) {
  const std::size_t h = sample.mask.h;
  const std::size_t w = sample.mask.w;
  require(crop <= h && crop <= w, "center_crop_sample: crop larger than chip");
  return crop_sample(sample, (h - crop) / 2, (w - crop) / 2, crop);
}

}  // namespace mtlsar
