#include "mtlsar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "mtlsar/error.hpp"
#include "mtlsar/image_io.hpp"

namespace mtlsar {

namespace fs = std::filesystem;

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  require(truth < classes && predicted < classes, "confusion: label out of range");
  ++counts[truth * classes + predicted];
}

std::size_t ConfusionMatrix::row_total(std::size_t truth) const {
  std::size_t sum = 0;
  for (std::size_t p = 0; p < classes; ++p) sum += at(truth, p);
  return sum;
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::correct() const {
  std::size_t sum = 0;
  for (std::size_t c = 0; c < classes; ++c) sum += at(c, c);
  return sum;
}

double ConfusionMatrix::recognition_ratio() const {
  const std::size_t n = total();
  return n == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(n);
}

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          std::size_t classes) {
  require(truth.size() == predicted.size(), "confusion: label lists differ in length");
  require(classes >= 1, "confusion: need at least one class");
  ConfusionMatrix m(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) m.add(truth[i], predicted[i]);
  return m;
}

void PixelAccuracyMatrix::add(const Mask& predicted, const Mask& truth) {
  require(predicted.h == truth.h && predicted.w == truth.w, "pixel_accuracy: mask shapes differ");
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const std::size_t t = truth.labels[i];
    const std::size_t p = predicted.labels[i];
    require(t < classes && p < classes, "pixel_accuracy: label out of range");
    ++counts[t * classes + p];
  }
}

std::size_t PixelAccuracyMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::size_t PixelAccuracyMatrix::correct() const {
  std::size_t sum = 0;
  for (std::size_t c = 0; c < classes; ++c) sum += at(c, c);
  return sum;
}

double PixelAccuracyMatrix::overall() const {
  const std::size_t n = total();
  return n == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(n);
}

std::vector<double> PixelAccuracyMatrix::row_percentages(std::size_t truth) const {
  std::vector<double> out(classes, 0.0);
  std::size_t row = 0;
  for (std::size_t p = 0; p < classes; ++p) row += at(truth, p);
  if (row == 0) return out;
  for (std::size_t p = 0; p < classes; ++p) out[p] = 100.0 * static_cast<double>(at(truth, p)) / static_cast<double>(row);
  return out;
}

PixelAccuracy pixel_accuracy(const Mask& predicted, const Mask& truth, std::size_t classes) {
  PixelAccuracy out{0.0, PixelAccuracyMatrix(classes)};
  out.matrix.add(predicted, truth);
  out.value = out.matrix.overall();
  return out;
}

std::vector<long long> percent_hundredths(std::span<const std::size_t> row) {
  std::vector<long long> out(row.size(), 0);
  unsigned long long total = 0;
  for (std::size_t v : row) total += v;
  if (total == 0) return out;
  struct Part {
    unsigned long long remainder;
    std::size_t column;
  };
  std::vector<Part> parts;
  long long assigned = 0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const unsigned long long scaled = static_cast<unsigned long long>(row[i]) * 10000ULL;
    out[i] = static_cast<long long>(scaled / total);
    assigned += out[i];
    parts.push_back({scaled % total, i});
  }
  std::stable_sort(parts.begin(), parts.end(),
                   [](const Part& a, const Part& b) { return a.remainder > b.remainder; });
  for (std::size_t k = 0; assigned < 10000; ++k, ++assigned) ++out[parts[k].column];
  return out;
}

std::string format_hundredths(long long value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%lld.%02lld", value < 0 ? "-" : "", std::llabs(value) / 100,
                std::llabs(value) % 100);
  return buf;
}

ConfusionMatrix results_confusion(const EvalResults& results) {
  ConfusionMatrix m(results.class_names.size());
  for (const auto& r : results.records) m.add(r.true_label, r.predicted_label);
  return m;
}

PixelAccuracyMatrix results_pixel_matrix(const EvalResults& results) {
  PixelAccuracyMatrix m(results.seg_classes);
  for (const auto& r : results.records) m.add(r.predicted_mask, r.true_mask);
  return m;
}

namespace {

std::string percent(double fraction) {
  return format_hundredths(std::llround(fraction * 10000.0));
}

// Rows and columns in Table 10 order: target labels first, background last.
std::vector<std::size_t> pixel_label_order(std::size_t classes) {
  std::vector<std::size_t> order;
  for (std::size_t v = 1; v < classes; ++v) order.push_back(v);
  order.push_back(0);
  return order;
}

std::string pixel_label_name(std::size_t label, std::size_t classes) {
  if (label == 0) return "background";
  if (classes == 2) return "target";
  return "target_" + std::to_string(label);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
}

bool on_outline(const Mask& m, std::size_t y, std::size_t x) {
  if (m.at(y, x) == 0) return false;
  if (y > 0 && m.at(y - 1, x) == 0) return true;
  if (y + 1 < m.h && m.at(y + 1, x) == 0) return true;
  if (x > 0 && m.at(y, x - 1) == 0) return true;
  if (x + 1 < m.w && m.at(y, x + 1) == 0) return true;
  return false;
}

}  // namespace

std::string confusion_csv(const ConfusionMatrix& m, std::span<const std::string> names) {
  require(names.size() == m.classes, "confusion_csv: one name per class required");
  std::ostringstream out;
  out << "# recognition ratio " << percent(m.recognition_ratio()) << "%\n";
  out << "true\\predicted";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t t = 0; t < m.classes; ++t) {
    const auto row = percent_hundredths(std::span(m.counts).subspan(t * m.classes, m.classes));
    out << names[t];
    for (long long v : row) out << ',' << format_hundredths(v);
    out << '\n';
  }
  return out.str();
}

std::string confusion_counts_csv(const ConfusionMatrix& m, std::span<const std::string> names) {
  require(names.size() == m.classes, "confusion_counts_csv: one name per class required");
  std::ostringstream out;
  out << "true\\predicted";
  for (const auto& n : names) out << ',' << n;
  out << ",total\n";
  for (std::size_t t = 0; t < m.classes; ++t) {
    out << names[t];
    for (std::size_t p = 0; p < m.classes; ++p) out << ',' << m.at(t, p);
    out << ',' << m.row_total(t) << '\n';
  }
  return out.str();
}

std::string pixel_accuracy_csv(const PixelAccuracyMatrix& m) {
  const auto order = pixel_label_order(m.classes);
  std::ostringstream out;
  out << "# pixel accuracy " << percent(m.overall()) << "%\n";
  out << "pixel_accuracy";
  for (std::size_t p : order) out << ',' << pixel_label_name(p, m.classes);
  out << '\n';
  for (std::size_t t : order) {
    std::vector<std::size_t> row;
    for (std::size_t p : order) row.push_back(m.at(t, p));
    out << pixel_label_name(t, m.classes);
    for (long long v : percent_hundredths(row)) out << ',' << format_hundredths(v);
    out << '\n';
  }
  return out.str();
}

std::string pixel_counts_csv(const PixelAccuracyMatrix& m) {
  const auto order = pixel_label_order(m.classes);
  std::ostringstream out;
  out << "true\\predicted";
  for (std::size_t p : order) out << ',' << pixel_label_name(p, m.classes);
  out << ",total\n";
  for (std::size_t t : order) {
    std::size_t total = 0;
    out << pixel_label_name(t, m.classes);
    for (std::size_t p : order) {
      out << ',' << m.at(t, p);
      total += m.at(t, p);
    }
    out << ',' << total << '\n';
  }
  return out.str();
}

std::string summary_json(const EvalResults& results, std::size_t overlays) {
  const ConfusionMatrix cm = results_confusion(results);
  const PixelAccuracyMatrix pm = results_pixel_matrix(results);
  nlohmann::ordered_json j;
  j["scenario"] = results.scenario;
  j["samples"] = results.records.size();
  j["classes"] = results.class_names;
  j["recognition_ratio"] = cm.recognition_ratio();
  j["recognition_correct"] = cm.correct();
  j["pixel_accuracy"] = pm.overall();
  j["pixels_correct"] = pm.correct();
  j["pixels_total"] = pm.total();
  nlohmann::ordered_json per_label = nlohmann::ordered_json::object();
  for (std::size_t v : pixel_label_order(pm.classes)) {
    std::size_t row = 0;
    for (std::size_t p = 0; p < pm.classes; ++p) row += pm.at(v, p);
    per_label[pixel_label_name(v, pm.classes)] =
        row == 0 ? 0.0 : static_cast<double>(pm.at(v, v)) / static_cast<double>(row);
  }
  j["pixel_accuracy_by_label"] = per_label;
  j["overlays"] = overlays;
  return j.dump(2) + "\n";
}

std::vector<std::uint8_t> render_overlay(const Tensor& image, const Mask& truth, const Mask& predicted) {
  const Shape& s = image.shape();
  require(s.n == 1 && s.c == 1, "render_overlay: expected a single-channel image");
  require(truth.h == s.h && truth.w == s.w && predicted.h == s.h && predicted.w == s.w,
          "render_overlay: mask shapes differ from image");
  std::vector<double> sorted(image.values().begin(), image.values().end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted[sorted.size() / 100];
  const double hi = sorted[sorted.size() - 1 - sorted.size() / 100];
  const double span = hi > lo ? hi - lo : 1.0;

  std::vector<std::uint8_t> rgb(3 * s.plane());
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      const std::size_t i = y * s.w + x;
      const double v = std::clamp((image[i] - lo) / span, 0.0, 1.0);
      auto g = static_cast<std::uint8_t>(std::lround(255.0 * v));
      std::uint8_t px[3] = {g, g, g};
      const bool t = on_outline(truth, y, x);
      const bool p = on_outline(predicted, y, x);
      if (t && p) {
        px[0] = px[1] = px[2] = 255;
      } else if (t) {
        px[0] = 0, px[1] = 255, px[2] = 0;
      } else if (p) {
        px[0] = 255, px[1] = 0, px[2] = 255;
      }
      std::copy(px, px + 3, rgb.begin() + static_cast<std::ptrdiff_t>(3 * i));
    }
  }
  return rgb;
}

void emit_report(const EvalResults& results, const std::string& out_dir) {
  if (results.records.empty()) throw Error(ErrorKind::data, "emit_report: no evaluation results");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + out_dir + ": " + ec.message());

  const ConfusionMatrix cm = results_confusion(results);
  const PixelAccuracyMatrix pm = results_pixel_matrix(results);
  const fs::path dir(out_dir);
  write_text(dir / "confusion.csv", confusion_csv(cm, results.class_names));
  write_text(dir / "confusion_counts.csv", confusion_counts_csv(cm, results.class_names));
  write_text(dir / "pixel_accuracy.csv", pixel_accuracy_csv(pm));
  write_text(dir / "pixel_counts.csv", pixel_counts_csv(pm));

  std::size_t overlays = 0;
  for (std::size_t i = 0; i < results.records.size(); ++i) {
    const EvalRecord& r = results.records[i];
    if (r.image.empty()) continue;
    if (overlays == 0) {
      fs::create_directories(dir / "overlays", ec);
      if (ec) throw Error(ErrorKind::io, "cannot create overlay directory: " + ec.message());
    }
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    write_png_rgb8((dir / "overlays" / name).string(), r.image.shape().w, r.image.shape().h,
                   render_overlay(r.image, r.true_mask, r.predicted_mask));
    ++overlays;
  }
  write_text(dir / "summary.json", summary_json(results, overlays));
}

}  // namespace mtlsar
