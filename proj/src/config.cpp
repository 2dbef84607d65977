#include "mtlsar/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "mtlsar/error.hpp"

namespace mtlsar {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

json parse_object(const std::string& text, const std::string& what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(what + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) fail(what + " must be a JSON object");
  return j;
}

void reject_unknown(const json& j, const std::vector<std::string>& valid, const std::string& what) {
  for (const auto& item : j.items()) {
    if (std::find(valid.begin(), valid.end(), item.key()) == valid.end()) {
      fail("unknown " + what + " key '" + item.key() + "'; valid keys: " + join(valid));
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(std::string("config key '") + key + "' has the wrong type");
  }
}

void read_count(const json& j, const char* key, std::size_t& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(std::string("config key '") + key + "' must be a non-negative integer");
  }
  out = v.get<std::size_t>();
}

void read_triple(const json& j, const char* key, std::array<std::size_t, 3>& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 3) fail(std::string("config key '") + key + "' must be an array of 3 integers");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number_integer() || v[i].get<long long>() < 0) {
      fail(std::string("config key '") + key + "' must hold non-negative integers");
    }
    out[i] = v[i].get<std::size_t>();
  }
}

const char* shape_name(TargetShape s) {
  switch (s) {
    case TargetShape::ellipse:
      return "ellipse";
    case TargetShape::rectangle:
      return "rectangle";
    case TargetShape::l_compound:
      return "l_compound";
  }
  return "ellipse";
}

TargetShape parse_shape(const std::string& s) {
  if (s == "ellipse") return TargetShape::ellipse;
  if (s == "rectangle") return TargetShape::rectangle;
  if (s == "l_compound" || s == "l-compound") return TargetShape::l_compound;
  fail("unknown target shape '" + s + "' (expected ellipse, rectangle or l_compound)");
}

const char* variant_name(VariantKind v) {
  switch (v) {
    case VariantKind::base:
      return "base";
    case VariantKind::configuration:
      return "configuration";
    case VariantKind::version:
      return "version";
  }
  return "base";
}

VariantKind parse_variant(const std::string& s) {
  if (s == "base") return VariantKind::base;
  if (s == "configuration") return VariantKind::configuration;
  if (s == "version") return VariantKind::version;
  fail("unknown variant '" + s + "' (expected base, configuration or version)");
}

}  // namespace

std::vector<std::string> run_config_keys() {
  return {"input_h",         "input_w",          "num_classes",      "num_seg_classes", "encoder_channels",
          "encoder_kernels", "recognition_channels", "recognition_kernel", "fusion_kernel", "upsample_kernel",
          "skip_fusion",     "lambda_rec",       "lambda_seg",       "weight_std",      "bias_init",
          "bn_eps",          "bn_momentum",      "lr",               "lr_decay",        "lr_decay_period",
          "batch_size",      "epochs",           "seed",             "crops_per_chip",  "class_quota",
          "scenario",        "overlays"};
}

RunConfig parse_run_config(const std::string& json_text, const RunConfig& base) {
  const json j = parse_object(json_text, "run config");
  reject_unknown(j, run_config_keys(), "config");
  RunConfig c = base;
  NetworkConfig& n = c.network;
  read_count(j, "input_h", n.input_h);
  read_count(j, "input_w", n.input_w);
  read_count(j, "num_classes", n.num_classes);
  read_count(j, "num_seg_classes", n.num_seg_classes);
  read_triple(j, "encoder_channels", n.encoder_channels);
  read_triple(j, "encoder_kernels", n.encoder_kernels);
  read_count(j, "recognition_channels", n.recognition_channels);
  read_count(j, "recognition_kernel", n.recognition_kernel);
  read_count(j, "fusion_kernel", n.fusion_kernel);
  read_count(j, "upsample_kernel", n.upsample_kernel);
  read(j, "skip_fusion", n.skip_fusion);
  read(j, "lambda_rec", n.lambda_rec);
  read(j, "lambda_seg", n.lambda_seg);
  read(j, "weight_std", n.weight_std);
  read(j, "bias_init", n.bias_init);
  read(j, "bn_eps", n.bn_eps);
  read(j, "bn_momentum", n.bn_momentum);
  read(j, "lr", n.lr);
  read(j, "lr_decay", n.lr_decay);
  read_count(j, "lr_decay_period", n.lr_decay_period);
  read_count(j, "batch_size", n.batch_size);
  read_count(j, "epochs", n.epochs);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer()) fail("config key 'seed' must be an integer");
    n.seed = j.at("seed").get<std::uint64_t>();
  }
  read_count(j, "crops_per_chip", c.crops_per_chip);
  read_count(j, "class_quota", c.class_quota);
  read(j, "scenario", c.scenario);
  read_count(j, "overlays", c.overlays);
  parse_scenario(c.scenario);
  return c;
}

std::string run_config_json(const RunConfig& c) {
  const NetworkConfig& n = c.network;
  ordered_json j;
  j["input_h"] = n.input_h;
  j["input_w"] = n.input_w;
  j["num_classes"] = n.num_classes;
  j["num_seg_classes"] = n.num_seg_classes;
  j["encoder_channels"] = n.encoder_channels;
  j["encoder_kernels"] = n.encoder_kernels;
  j["recognition_channels"] = n.recognition_channels;
  j["recognition_kernel"] = n.recognition_kernel;
  j["fusion_kernel"] = n.fusion_kernel;
  j["upsample_kernel"] = n.upsample_kernel;
  j["skip_fusion"] = n.skip_fusion;
  j["lambda_rec"] = n.lambda_rec;
  j["lambda_seg"] = n.lambda_seg;
  j["weight_std"] = n.weight_std;
  j["bias_init"] = n.bias_init;
  j["bn_eps"] = n.bn_eps;
  j["bn_momentum"] = n.bn_momentum;
  j["lr"] = n.lr;
  j["lr_decay"] = n.lr_decay;
  j["lr_decay_period"] = n.lr_decay_period;
  j["batch_size"] = n.batch_size;
  j["epochs"] = n.epochs;
  j["seed"] = n.seed;
  j["crops_per_chip"] = c.crops_per_chip;
  j["class_quota"] = c.class_quota;
  j["scenario"] = c.scenario;
  j["overlays"] = c.overlays;
  return j.dump(2) + "\n";
}

std::vector<std::string> synthetic_spec_keys() {
  return {"num_classes", "chip_size", "looks", "clutter_level", "shadow_level", "center_jitter", "classes", "groups"};
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text, const SyntheticSpec& base) {
  const json j = parse_object(json_text, "generator spec");
  reject_unknown(j, synthetic_spec_keys(), "generator spec");
  SyntheticSpec s = base;
  read_count(j, "num_classes", s.num_classes);
  read_count(j, "chip_size", s.chip_size);
  read(j, "looks", s.looks);
  read(j, "clutter_level", s.clutter_level);
  read(j, "shadow_level", s.shadow_level);
  read(j, "center_jitter", s.center_jitter);

  if (j.contains("classes")) {
    if (!j.at("classes").is_array()) fail("generator spec 'classes' must be an array");
    const std::vector<std::string> keys = {"name",       "shape",      "length_min",   "length_max",
                                           "aspect_min", "aspect_max", "reflectivity", "height"};
    s.classes.clear();
    for (const json& c : j.at("classes")) {
      if (!c.is_object()) fail("generator spec classes must be objects");
      reject_unknown(c, keys, "class geometry");
      ClassGeometry g;
      read(c, "name", g.name);
      if (c.contains("shape")) g.shape = parse_shape(c.at("shape").get<std::string>());
      read(c, "length_min", g.length_min);
      read(c, "length_max", g.length_max);
      read(c, "aspect_min", g.aspect_min);
      read(c, "aspect_max", g.aspect_max);
      read(c, "reflectivity", g.reflectivity);
      read(c, "height", g.height);
      if (g.name.empty()) fail("generator spec classes need a name");
      s.classes.push_back(g);
    }
    if (!j.contains("num_classes")) s.num_classes = s.classes.size();
  }
  if (j.contains("groups")) {
    if (!j.at("groups").is_array()) fail("generator spec 'groups' must be an array");
    const std::vector<std::string> keys = {"depression_deg", "variant", "variant_index", "per_class", "split"};
    s.groups.clear();
    for (const json& g : j.at("groups")) {
      if (!g.is_object()) fail("generator spec groups must be objects");
      reject_unknown(g, keys, "acquisition group");
      AcquisitionGroup a;
      read(g, "depression_deg", a.depression_deg);
      if (g.contains("variant")) a.variant = parse_variant(g.at("variant").get<std::string>());
      read_count(g, "variant_index", a.variant_index);
      read_count(g, "per_class", a.per_class);
      read(g, "split", a.split);
      s.groups.push_back(a);
    }
  }
  s.validate();
  return s;
}

std::string synthetic_spec_json(const SyntheticSpec& spec) {
  const SyntheticSpec s = spec.resolved();
  ordered_json j;
  j["num_classes"] = s.num_classes;
  j["chip_size"] = s.chip_size;
  j["looks"] = s.looks;
  j["clutter_level"] = s.clutter_level;
  j["shadow_level"] = s.shadow_level;
  j["center_jitter"] = s.center_jitter;
  j["classes"] = ordered_json::array();
  for (const auto& c : s.classes) {
    ordered_json g;
    g["name"] = c.name;
    g["shape"] = shape_name(c.shape);
    g["length_min"] = c.length_min;
    g["length_max"] = c.length_max;
    g["aspect_min"] = c.aspect_min;
    g["aspect_max"] = c.aspect_max;
    g["reflectivity"] = c.reflectivity;
    g["height"] = c.height;
    j["classes"].push_back(g);
  }
  j["groups"] = ordered_json::array();
  for (const auto& a : s.groups) {
    ordered_json g;
    g["depression_deg"] = a.depression_deg;
    g["variant"] = variant_name(a.variant);
    g["variant_index"] = a.variant_index;
    g["per_class"] = a.per_class;
    g["split"] = a.split;
    j["groups"].push_back(g);
  }
  return j.dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorKind::io, "failed writing " + path);
}

}  // namespace mtlsar
