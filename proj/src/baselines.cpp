#include "mtlsar/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "mtlsar/error.hpp"

namespace mtlsar {

GrayImage8 quantize8(const Tensor& image) {
  const Shape& s = image.shape();
  require(s.n == 1 && s.c == 1, "quantize8: expected a single-channel image");
  GrayImage8 out{s.h, s.w, std::vector<std::uint8_t>(s.plane())};
  for (std::size_t i = 0; i < s.plane(); ++i) {
    const double v = std::floor(255.0 * image[i] + 0.5);
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

Histogram256 histogram(const GrayImage8& image) {
  Histogram256 hist{};
  for (std::uint8_t v : image.pixels) ++hist[v];
  return hist;
}

double between_class_variance(const Histogram256& hist, std::size_t t) {
  require(t < 256, "between_class_variance: threshold out of range");
  double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
  for (std::size_t v = 0; v < 256; ++v) {
    const auto count = static_cast<double>(hist[v]);
    if (v <= t) {
      n0 += count;
      s0 += count * static_cast<double>(v);
    } else {
      n1 += count;
      s1 += count * static_cast<double>(v);
    }
  }
  if (n0 == 0 || n1 == 0) return 0.0;
  const double total = n0 + n1;
  const double mu0 = s0 / n0;
  const double mu1 = s1 / n1;
  return (n0 / total) * (n1 / total) * (mu0 - mu1) * (mu0 - mu1);
}

OtsuResult otsu_threshold(const GrayImage8& image) {
  const Histogram256 hist = histogram(image);
  using Wide = unsigned __int128;
  std::int64_t total = 0;
  std::int64_t total_sum = 0;
  for (std::size_t v = 0; v < 256; ++v) {
    total += static_cast<std::int64_t>(hist[v]);
    total_sum += static_cast<std::int64_t>(hist[v] * v);
  }

  // sigma_b^2 * N^2 = (N*S0 - n0*S)^2 / (n0*n1); candidates are compared as
  // exact fractions so equal variances tie exactly.
  Wide best_num = 0;
  Wide best_den = 1;
  std::size_t best_t = 0;
  bool found = false;
  std::int64_t n0 = 0;
  std::int64_t s0 = 0;
  for (std::size_t t = 0; t < 256; ++t) {
    n0 += static_cast<std::int64_t>(hist[t]);
    s0 += static_cast<std::int64_t>(hist[t] * t);
    const std::int64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const std::int64_t diff = total * s0 - n0 * total_sum;
    const Wide mag = static_cast<Wide>(diff < 0 ? -diff : diff);
    const Wide num = mag * mag;
    const Wide den = static_cast<Wide>(n0) * static_cast<Wide>(n1);
    if (!found || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best_t = t;
      found = true;
    }
  }

  OtsuResult out;
  out.mask = Mask(image.h, image.w);
  if (!found || best_num == 0) {
    out.threshold = 0;
    out.degenerate = true;
    return out;
  }
  out.threshold = best_t;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) out.mask.labels[i] = image.pixels[i] > best_t ? 1 : 0;
  return out;
}

namespace {

struct Grid {
  std::size_t h, w;
  std::vector<double> v;
  double at(std::ptrdiff_t y, std::ptrdiff_t x) const {
    y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(h) - 1);
    x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(w) - 1);
    return v[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  }
};

Grid gaussian_blur(const Grid& in, double sigma) {
  if (sigma <= 0.0) return in;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double k = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = k;
    sum += k;
  }
  for (double& k : kernel) k /= sum;

  Grid tmp{in.h, in.w, std::vector<double>(in.v.size())};
  Grid out{in.h, in.w, std::vector<double>(in.v.size())};
  const auto h = static_cast<std::ptrdiff_t>(in.h);
  const auto w = static_cast<std::ptrdiff_t>(in.w);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * in.at(y, x + i);
      tmp.v[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(y + i, x);
      out.v[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

bool nearly_equal(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
}

Mask dilate(const Mask& m) {
  Mask out(m.h, m.w);
  for (std::size_t y = 0; y < m.h; ++y) {
    for (std::size_t x = 0; x < m.w; ++x) {
      std::uint8_t v = 0;
      for (std::ptrdiff_t dy = -1; dy <= 1 && v == 0; ++dy) {
        for (std::ptrdiff_t dx = -1; dx <= 1 && v == 0; ++dx) {
          const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + dy;
          const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(m.h) || xx >= static_cast<std::ptrdiff_t>(m.w)) continue;
          v = m.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
        }
      }
      out.at(y, x) = v != 0 ? 1 : 0;
    }
  }
  return out;
}

// Pixels outside the image count as set, so borders do not erode.
Mask erode(const Mask& m) {
  Mask out(m.h, m.w);
  for (std::size_t y = 0; y < m.h; ++y) {
    for (std::size_t x = 0; x < m.w; ++x) {
      std::uint8_t v = 1;
      for (std::ptrdiff_t dy = -1; dy <= 1 && v != 0; ++dy) {
        for (std::ptrdiff_t dx = -1; dx <= 1 && v != 0; ++dx) {
          const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + dy;
          const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(m.h) || xx >= static_cast<std::ptrdiff_t>(m.w)) continue;
          v = m.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
        }
      }
      out.at(y, x) = v != 0 ? 1 : 0;
    }
  }
  return out;
}

// Everything not 4-connected to the border through unset pixels becomes set.
Mask fill_holes(const Mask& m) {
  Mask outside(m.h, m.w);
  std::deque<std::pair<std::size_t, std::size_t>> queue;
  auto seed = [&](std::size_t y, std::size_t x) {
    if (m.at(y, x) == 0 && outside.at(y, x) == 0) {
      outside.at(y, x) = 1;
      queue.emplace_back(y, x);
    }
  };
  for (std::size_t x = 0; x < m.w; ++x) {
    seed(0, x);
    seed(m.h - 1, x);
  }
  for (std::size_t y = 0; y < m.h; ++y) {
    seed(y, 0);
    seed(y, m.w - 1);
  }
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    if (y > 0) seed(y - 1, x);
    if (y + 1 < m.h) seed(y + 1, x);
    if (x > 0) seed(y, x - 1);
    if (x + 1 < m.w) seed(y, x + 1);
  }
  Mask out(m.h, m.w);
  for (std::size_t i = 0; i < out.labels.size(); ++i) out.labels[i] = outside.labels[i] != 0 ? 0 : 1;
  return out;
}

}  // namespace

Mask canny_edges(const Tensor& image, const CannyOptions& options) {
  require(options.low > 0.0 && options.low < options.high && options.high <= 1.0,
          "canny: thresholds must satisfy 0 < low < high <= 1");
  const Shape& s = image.shape();
  require(s.n == 1 && s.c == 1, "canny: expected a single-channel image");
  Grid src{s.h, s.w, std::vector<double>(image.values().begin(), image.values().end())};
  const Grid blurred = gaussian_blur(src, options.sigma);

  const auto h = static_cast<std::ptrdiff_t>(s.h);
  const auto w = static_cast<std::ptrdiff_t>(s.w);
  std::vector<double> gx(s.plane()), gy(s.plane()), mag(s.plane());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const auto& b = blurred;
      const double dx = (b.at(y - 1, x + 1) + 2 * b.at(y, x + 1) + b.at(y + 1, x + 1)) -
                        (b.at(y - 1, x - 1) + 2 * b.at(y, x - 1) + b.at(y + 1, x - 1));
      const double dy = (b.at(y + 1, x - 1) + 2 * b.at(y + 1, x) + b.at(y + 1, x + 1)) -
                        (b.at(y - 1, x - 1) + 2 * b.at(y - 1, x) + b.at(y - 1, x + 1));
      const auto i = static_cast<std::size_t>(y * w + x);
      gx[i] = dx;
      gy[i] = dy;
      mag[i] = std::hypot(dx, dy);
    }
  }

  // Non-maximum suppression along the quantised gradient direction. On a tie
  // across the ridge the pixel on the brighter side (ahead along the gradient)
  // survives, so contours sit on the inside of bright regions.
  const Grid m{s.h, s.w, mag};
  Mask ridge(s.h, s.w);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y * w + x);
      if (mag[i] <= 0.0) continue;
      double angle = std::atan2(gy[i], gx[i]) * 180.0 / 3.14159265358979323846;
      if (angle < 0) angle += 360.0;
      const int sector = static_cast<int>(std::floor((angle + 22.5) / 45.0)) % 8;
      static constexpr int kStep[8][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}};
      const int sy = kStep[sector][0];
      const int sx = kStep[sector][1];
      const bool in_ahead = y + sy >= 0 && y + sy < h && x + sx >= 0 && x + sx < w;
      const bool in_behind = y - sy >= 0 && y - sy < h && x - sx >= 0 && x - sx < w;
      const double ahead = in_ahead ? m.at(y + sy, x + sx) : 0.0;
      const double behind = in_behind ? m.at(y - sy, x - sx) : 0.0;
      const bool beats_ahead = mag[i] > ahead && !nearly_equal(mag[i], ahead);
      const bool holds_behind = mag[i] > behind || nearly_equal(mag[i], behind);
      if (beats_ahead && holds_behind) ridge.labels[i] = 1;
    }
  }

  const double low_t = quantile(mag, options.low);
  const double high_t = quantile(mag, options.high);
  Mask edges(s.h, s.w);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < s.plane(); ++i) {
    if (ridge.labels[i] != 0 && mag[i] > 0.0 && mag[i] >= high_t) {
      edges.labels[i] = 1;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const auto y = static_cast<std::ptrdiff_t>(i / s.w);
    const auto x = static_cast<std::ptrdiff_t>(i % s.w);
    for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
      for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
        const std::ptrdiff_t yy = y + dy;
        const std::ptrdiff_t xx = x + dx;
        if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
        const auto j = static_cast<std::size_t>(yy * w + xx);
        if (edges.labels[j] == 0 && ridge.labels[j] != 0 && mag[j] > 0.0 && mag[j] >= low_t) {
          edges.labels[j] = 1;
          queue.push_back(j);
        }
      }
    }
  }
  return edges;
}

Mask canny_segment(const Tensor& image, const CannyOptions& options) {
  Mask m = canny_edges(image, options);
  for (std::size_t i = 0; i < options.closing_iterations; ++i) m = dilate(m);
  for (std::size_t i = 0; i < options.closing_iterations; ++i) m = erode(m);
  return fill_holes(m);
}

BaselineMethod parse_baseline_method(const std::string& name) {
  if (name == "otsu") return BaselineMethod::otsu;
  if (name == "canny") return BaselineMethod::canny;
  if (name == "ground-truth" || name == "ground_truth" || name == "gt") return BaselineMethod::ground_truth;
  fail("unknown baseline method '" + name + "' (expected otsu, canny or ground-truth)");
}

std::string baseline_method_name(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::otsu:
      return "otsu";
    case BaselineMethod::canny:
      return "canny";
    case BaselineMethod::ground_truth:
      return "ground-truth";
  }
  return "otsu";
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double BaselineRow::target_accuracy() const { return ratio(target_correct, target_pixels); }
double BaselineRow::background_accuracy() const { return ratio(background_correct, background_pixels); }
double BaselineRow::overall_accuracy() const {
  return ratio(target_correct + background_correct, target_pixels + background_pixels);
}

BaselineReport evaluate_baseline(BaselineMethod method, const Dataset& dataset, const CannyOptions& canny) {
  if (dataset.samples.empty()) throw Error(ErrorKind::data, "evaluate_baseline: empty dataset");
  BaselineReport report;
  report.method = baseline_method_name(method);
  const std::size_t classes = std::max<std::size_t>(dataset.class_names.size(), 1);
  report.rows.resize(classes + 1);
  for (std::size_t c = 0; c < classes; ++c) {
    report.rows[c].label = c < dataset.class_names.size() ? dataset.class_names[c] : std::to_string(c);
  }
  report.rows[classes].label = "all";

  for (const Sample& s : dataset.samples) {
    Mask predicted;
    switch (method) {
      case BaselineMethod::otsu: {
        auto r = otsu_threshold(quantize8(s.image));
        if (r.degenerate) ++report.degenerate_images;
        predicted = std::move(r.mask);
        break;
      }
      case BaselineMethod::canny:
        predicted = canny_segment(s.image, canny);
        break;
      case BaselineMethod::ground_truth:
        predicted = s.mask;
        break;
    }
    require(predicted.h == s.mask.h && predicted.w == s.mask.w, "evaluate_baseline: mask size mismatch");
    require(s.label < classes, "evaluate_baseline: label without class");
    for (BaselineRow* row : {&report.rows[s.label], &report.rows[classes]}) {
      for (std::size_t i = 0; i < s.mask.labels.size(); ++i) {
        const bool truth = s.mask.labels[i] != 0;
        const bool pred = predicted.labels[i] != 0;
        if (truth) {
          ++row->target_pixels;
          if (pred) ++row->target_correct;
        } else {
          ++row->background_pixels;
          if (!pred) ++row->background_correct;
        }
      }
    }
  }
  return report;
}

std::string baseline_report_csv(const BaselineReport& report) {
  std::ostringstream out;
  out << "method,class,target_pixel_accuracy,background_pixel_accuracy,pixel_accuracy,"
         "target_pixels,target_correct,background_pixels,background_correct\n";
  out.setf(std::ios::fixed);
  out.precision(2);
  for (const auto& row : report.rows) {
    out << report.method << ',' << row.label << ',' << 100.0 * row.target_accuracy() << ','
        << 100.0 * row.background_accuracy() << ',' << 100.0 * row.overall_accuracy() << ',' << row.target_pixels
        << ',' << row.target_correct << ',' << row.background_pixels << ',' << row.background_correct << '\n';
  }
  return out.str();
}

}  // namespace mtlsar
