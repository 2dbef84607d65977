#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mtlsar/data.hpp"
#include "mtlsar/network.hpp"

namespace mtlsar {

/// Everything a training or evaluation run needs besides the data: the
/// network configuration plus data-preparation settings. Serialised as one
/// flat JSON object.
struct RunConfig {
  NetworkConfig network;
  std::size_t crops_per_chip = 10;  // random crops drawn from every training chip
  std::size_t class_quota = 0;      // training crops per class; 0 keeps crops_per_chip x chips
  std::string scenario = "soc";
  std::size_t overlays = 8;  // overlay images written by evaluation

  bool operator==(const RunConfig&) const = default;
};

std::vector<std::string> run_config_keys();

/// Applies the keys of a JSON object on top of `base`. Unknown keys are
/// rejected with a message listing the valid ones. Throws
/// Error(invalid_argument).
RunConfig parse_run_config(const std::string& json_text, const RunConfig& base = {});

/// Complete resolved configuration, keys in a fixed order.
std::string run_config_json(const RunConfig& config);

std::vector<std::string> synthetic_spec_keys();

/// Generator spec JSON: scalar fields, optional "classes" and "groups" arrays.
SyntheticSpec parse_synthetic_spec(const std::string& json_text, const SyntheticSpec& base = {});
std::string synthetic_spec_json(const SyntheticSpec& spec);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace mtlsar
