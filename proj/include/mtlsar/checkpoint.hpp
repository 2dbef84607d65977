#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mtlsar/config.hpp"
#include "mtlsar/network.hpp"

namespace mtlsar {

/// Binary container: magic, format version, resolved run config (JSON), class
/// names, completed epochs, then every parameter and BN running-statistic
/// tensor as raw little-endian doubles. Loading reproduces the network
/// bit for bit.
struct Checkpoint {
  RunConfig config;
  std::vector<std::string> class_names;
  std::size_t epochs_done = 0;
  MtlNetwork network;
};

void save_checkpoint(const std::string& path, MtlNetwork& network, const RunConfig& config,
                     const std::vector<std::string>& class_names, std::size_t epochs_done);

/// Throws Error(data) for a malformed or mismatching file.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mtlsar
