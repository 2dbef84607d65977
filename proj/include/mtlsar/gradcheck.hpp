#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mtlsar/layers.hpp"
#include "mtlsar/network.hpp"

namespace mtlsar {

/// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
/// gradient is zero from dividing rounding noise by zero.
double relative_error(double analytic, double numeric, double floor = 1e-5);

enum class LayerKind { conv, tconv, batchnorm, relu, maxpool, softmax_ce, seg_loss };

std::vector<LayerKind> all_layer_kinds();
std::string layer_kind_name(LayerKind kind);

struct GradcheckEntry {
  std::string name;
  std::size_t instances = 0;
  std::size_t checked = 0;  // coordinates compared
  std::size_t skipped = 0;  // coordinates whose finite-difference step crossed a ReLU or pooling switch
  double max_rel_error = 0.0;
  double seconds = 0.0;
  bool passed = false;
};

/// 16x16 input, C = 3, V = 2, encoder channels {4, 8, 8}, recognition 8,
/// weight std 0.3 so every gradient sits well above rounding noise.
NetworkConfig miniature_config();

struct GradcheckOptions {
  std::size_t instances = 20;
  double step = 1e-5;
  double tolerance = 1e-4;
  bool layers = true;
  bool network = true;
  std::size_t network_batch = 2;
  NetworkConfig network_config = miniature_config();
  Fault fault = Fault::none;
};

/// `instances` random shapes and values of one layer type; every input and
/// parameter coordinate is compared against central differences of a random
/// linear read-out of the layer output (the loss itself for the two loss kinds).
GradcheckEntry check_layer(LayerKind kind, std::size_t instances, std::uint64_t seed, double step,
                           double tolerance);

/// Every parameter of a freshly built network against central differences of
/// the joint loss on a random batch.
GradcheckEntry check_network(const NetworkConfig& config, std::size_t batch, std::uint64_t seed, double step,
                             double tolerance);

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool passed() const;
  std::string text() const;
  std::string json() const;
};

GradcheckReport run_gradcheck(const GradcheckOptions& options, std::uint64_t seed);

/// "none" or "conv_backward_sign".
Fault parse_fault(const std::string& name);

}  // namespace mtlsar
