// Synthetic street-grid superstructures: paired feed/return pipes on an
// r x c grid, consumers of three standard types placed at junction sites,
// and producers bridging return to feed. Deterministic under a seed.
#pragma once

#include <cstdint>

#include "dhn/network.hpp"

namespace dhn {

// Nominal consumer design conditions; the radiator and valve constants are
// derived from these at generation time.
struct ConsumerType {
  const char* name;
  double Q_d;          // [W]
  double T_in_design;  // [degC]
  double dT_design;    // [K]
  double n;            // radiator exponent
  double dp_design;    // [Pa] heating system design pressure drop
};

ConsumerType dwelling_type();
ConsumerType renovated_dwelling_type();
ConsumerType commercial_type();

// Radiator/valve characteristics from nominal design conditions.
ConsumerSpec make_consumer_spec(const ConsumerType& type, const FluidProperties& fluid,
                                double T_inf, double T_room = 20.0);

struct GridSpec {
  int rows = 4;
  int cols = 4;
  double spacing = 50.0;  // street segment length [m]
  int n_dwelling = 10;
  int n_renovated = 2;
  int n_commercial = 2;
  int n_producers = 2;
  std::vector<double> producer_T_b = {65.0, 70.0};  // [degC], cycled
  double producer_Q_max = 2e6;                      // [W] heat capacity each
  double T_inf = -8.0;
  double T_out_design = 40.0;  // [degC] design network return temperature
  std::uint32_t seed = 1;
};

NetworkGraph generate_grid(const GridSpec& spec);

// Small randomized fixture: a 2x3 street grid with randomized segment
// lengths, consumer types, and exactly 20 arcs; used by the gradient audit.
NetworkGraph random_test_network(std::uint32_t seed);

}  // namespace dhn
