#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mtlsar/data.hpp"
#include "mtlsar/error.hpp"
#include "mtlsar/image_io.hpp"

namespace mtlsar {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestHeader = "path,mask_path,class,depression,serial,split";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && std::isspace(static_cast<unsigned char>(s[start]))) ++start;
  return s.substr(start);
}

[[noreturn]] void row_error(std::size_t line, const std::string& what) {
  throw Error(ErrorKind::data, "manifest row " + std::to_string(line) + ": " + what);
}

std::string format_depression(double deg) {
  std::ostringstream out;
  out.precision(17);
  out << deg;
  return out.str();
}

}  // namespace

Dataset load_manifest(const std::string& path, std::span<const std::string> known_classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open manifest " + path);
  const fs::path root = fs::path(path).parent_path();

  struct Row {
    std::size_t line;
    std::vector<std::string> fields;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (line != kManifestHeader) {
        throw Error(ErrorKind::data, "manifest " + path + ": expected header '" + std::string(kManifestHeader) + "'");
      }
      continue;
    }
    auto fields = split_csv(line);
    if (fields.size() != 6) row_error(line_no, "expected 6 fields, got " + std::to_string(fields.size()));
    for (auto& f : fields) f = trim(f);
    rows.push_back({line_no, std::move(fields)});
  }

  Dataset out;
  if (known_classes.empty()) {
    std::set<std::string> names;
    for (const auto& r : rows) names.insert(r.fields[2]);
    out.class_names.assign(names.begin(), names.end());
  } else {
    out.class_names.assign(known_classes.begin(), known_classes.end());
  }

  for (const auto& r : rows) {
    const auto& f = r.fields;
    if (f[0].empty()) row_error(r.line, "missing image path");
    if (f[1].empty()) row_error(r.line, "missing mask path");
    const auto it = std::find(out.class_names.begin(), out.class_names.end(), f[2]);
    if (it == out.class_names.end()) row_error(r.line, "unknown class name '" + f[2] + "'");

    Sample s;
    s.label = static_cast<std::size_t>(it - out.class_names.begin());
    try {
      s.meta.depression_deg = std::stod(f[3]);
    } catch (const std::exception&) {
      row_error(r.line, "bad depression value '" + f[3] + "'");
    }
    s.meta.serial = f[4];
    s.meta.split = f[5];
    if (s.meta.split != "train" && s.meta.split != "test") row_error(r.line, "split must be train or test");

    GrayImage image;
    GrayImage mask;
    try {
      image = read_png_gray((root / f[0]).string());
      mask = read_png_gray((root / f[1]).string());
    } catch (const Error& e) {
      row_error(r.line, e.what());
    }
    if (image.width != mask.width || image.height != mask.height) row_error(r.line, "mask/image size mismatch");
    if (mask.bit_depth != 8) row_error(r.line, "mask must be an 8-bit PNG");

    const double full_scale = image.bit_depth == 16 ? 65535.0 : 255.0;
    s.image = Tensor(1, 1, image.height, image.width);
    for (std::size_t i = 0; i < image.pixels.size(); ++i) s.image[i] = static_cast<double>(image.pixels[i]) / full_scale;
    s.mask = Mask(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) s.mask.labels[i] = static_cast<std::uint8_t>(mask.pixels[i]);
    out.samples.push_back(std::move(s));
  }
  return out;
}

void export_dataset(const Dataset& dataset, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  fs::create_directories(fs::path(dir) / "masks", ec);
  if (ec) throw Error(ErrorKind::io, "cannot create dataset directory " + dir + ": " + ec.message());

  std::ofstream manifest(fs::path(dir) / "manifest.csv");
  if (!manifest) throw Error(ErrorKind::io, "cannot write manifest in " + dir);
  manifest << kManifestHeader << '\n';

  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    require(s.label < dataset.class_names.size(), "export_dataset: label without a class name");
    const Shape& shape = s.image.shape();
    require(shape.n == 1 && shape.c == 1, "export_dataset: images must be single-channel");
    require(shape.h == s.mask.h && shape.w == s.mask.w, "export_dataset: image/mask size mismatch");
    for (const char* field : {s.meta.serial.c_str(), s.meta.split.c_str(), dataset.class_names[s.label].c_str()}) {
      require(std::string(field).find(',') == std::string::npos, "export_dataset: commas are not allowed in fields");
    }

    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    const std::string image_rel = std::string("images/") + name;
    const std::string mask_rel = std::string("masks/") + name;

    std::vector<std::uint16_t> pixels(s.image.size());
    for (std::size_t k = 0; k < pixels.size(); ++k) {
      pixels[k] = static_cast<std::uint16_t>(std::lround(std::clamp(s.image[k], 0.0, 1.0) * 65535.0));
    }
    write_png_gray16((fs::path(dir) / image_rel).string(), shape.w, shape.h, pixels);
    write_png_gray8((fs::path(dir) / mask_rel).string(), s.mask.w, s.mask.h, s.mask.labels);

    manifest << image_rel << ',' << mask_rel << ',' << dataset.class_names[s.label] << ','
             << format_depression(s.meta.depression_deg) << ',' << s.meta.serial << ',' << s.meta.split << '\n';
  }
  if (!manifest) throw Error(ErrorKind::io, "failed writing manifest in " + dir);
}

Scenario parse_scenario(const std::string& name) {
  std::string key;
  for (char c : name) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  std::replace(key.begin(), key.end(), '_', '-');
  if (key == "soc") return Scenario::soc;
  if (key == "eoc-d") return Scenario::eoc_d;
  if (key == "eoc-c") return Scenario::eoc_c;
  if (key == "eoc-v") return Scenario::eoc_v;
  fail("unknown scenario '" + name + "' (expected soc, eoc-d, eoc-c or eoc-v)");
}

std::string scenario_name(Scenario scenario) {
  switch (scenario) {
    case Scenario::soc:
      return "SOC";
    case Scenario::eoc_d:
      return "EOC-D";
    case Scenario::eoc_c:
      return "EOC-C";
    case Scenario::eoc_v:
      return "EOC-V";
  }
  return "SOC";
}

VariantKind variant_of(const std::string& serial) {
  const auto dash = serial.rfind('-');
  if (dash == std::string::npos) return VariantKind::base;
  const std::string tail = serial.substr(dash + 1);
  if (tail.rfind("cfg", 0) == 0) return VariantKind::configuration;
  if (tail.rfind("ver", 0) == 0) return VariantKind::version;
  return VariantKind::base;
}

Split make_eoc_splits(const Dataset& dataset, Scenario scenario) {
  Split out;
  std::vector<double> train_depressions;
  for (const Sample& s : dataset.samples) {
    if (s.meta.split == "train" && variant_of(s.meta.serial) == VariantKind::base) {
      out.train.push_back(s);
      train_depressions.push_back(s.meta.depression_deg);
    }
  }
  auto nearest_train_gap = [&](double deg) {
    double gap = 1e9;
    for (double d : train_depressions) gap = std::min(gap, std::abs(d - deg));
    return gap;
  };

  for (const Sample& s : dataset.samples) {
    if (s.meta.split != "test") continue;
    const VariantKind kind = variant_of(s.meta.serial);
    bool take = false;
    switch (scenario) {
      case Scenario::soc:
        take = kind == VariantKind::base && nearest_train_gap(s.meta.depression_deg) < 5.0;
        break;
      case Scenario::eoc_d:
        take = kind == VariantKind::base && nearest_train_gap(s.meta.depression_deg) >= 10.0;
        break;
      case Scenario::eoc_c:
        take = kind == VariantKind::configuration;
        break;
      case Scenario::eoc_v:
        take = kind == VariantKind::version;
        break;
    }
    if (take) out.test.push_back(s);
  }
  if (out.train.empty() || out.test.empty()) {
    throw Error(ErrorKind::data, "scenario " + scenario_name(scenario) + " is impossible with this dataset (" +
                                     std::to_string(out.train.size()) + " train, " + std::to_string(out.test.size()) +
                                     " test samples)");
  }
  return out;
}

}  // namespace mtlsar
