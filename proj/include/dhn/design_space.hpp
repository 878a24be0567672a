// Design-space transforms: investment cost and pump objective, consumer
// comfort constraints, Kreisselmeier-Steinhauser aggregation, smoothed
// multi-projection onto the discrete pipe catalog, the penalized piping
// cost curve, and the projection chain rule for gradients.
#pragma once

#include <string>
#include <vector>

#include "dhn/adjoint.hpp"
#include "dhn/physics.hpp"

namespace dhn {

struct DesignSpaceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Discrete diameters and their installed cost per meter. First entries are
// 0/0 ("no pipe"). The overshoot band [d_n, d_n + width] above the largest
// diameter is priced at overshoot_cost.
struct PipeCatalog {
  Eigen::VectorXd diameters;  // ascending, diameters[0] == 0 [m]
  Eigen::VectorXd costs;      // nondecreasing, costs[0] == 0 [eur/m]
  double overshoot_width = 0.1;   // [m]
  double overshoot_cost = 0.0;    // [eur/m], defaults to 10 * costs.max()

  int size() const { return static_cast<int>(diameters.size()); }
  double d_max() const { return diameters[size() - 1]; }
  void validate() const;
  // Nearest catalog entry (index) for a diameter.
  int snap_index(double d) const;

  static PipeCatalog standard();
  static PipeCatalog load(const std::string& path);
  void save(const std::string& path) const;
};

struct CostWeights {
  double lambda_pump = 1e4;  // price of pump capacity and operation [eur/W]
};

// Continuation parameters per stage: constraint aggregation sharpness
// (gamma), projection steepness (chi), cost interpolation weight (upsilon),
// cost steepness (omega).
struct ContinuationSchedule {
  struct Stage {
    double gamma = 5e3;
    double chi = 0.0;
    double upsilon = 0.0;
    double omega = 0.0;
  };
  std::vector<Stage> stages;

  void validate() const;
  static ContinuationSchedule defaults(int n_stages = 20, double gamma_lo = 5e3,
                                       double gamma_hi = 1e5, double chi_hi = 100.0,
                                       double omega_hi = 100.0);
  static ContinuationSchedule load(const std::string& path);
  void save(const std::string& path) const;
};

// ---------------------------------------------------------------------------
// Scalar transforms.

// Smoothed Heaviside projection on [0, 1]; chi = 0 is the exact identity.
double project(double x, double eta, double chi);
double project_derivative(double x, double eta, double chi);

// Piecewise projection of a diameter onto the catalog; every catalog
// diameter is a fixed point for every chi.
double multi_project(double d, const PipeCatalog& cat, double chi);
double multi_project_derivative(double d, const PipeCatalog& cat, double chi);

// Piping cost per meter: blend of the linear ramp (weight 1 - upsilon) and
// the smoothed staircase (weight upsilon, steepness omega).
struct CostEval {
  double cost = 0.0;
  double dcost_dd = 0.0;
};
CostEval pipe_cost(double d, const PipeCatalog& cat, double upsilon, double omega);

// Overflow-safe KS aggregate (1/gamma) ln sum exp(gamma h_i) and its
// softmax weights.
double ks_aggregate(const Eigen::VectorXd& h, double gamma);
Eigen::VectorXd ks_weights(const Eigen::VectorXd& h, double gamma);

// ---------------------------------------------------------------------------
// Network-level quantities.

// Two rows per consumer, scaled by the demand: (0.95 Q_d - Q)/Q_d <= 0 and
// (Q - 1.05 Q_d)/Q_d <= 0.
Eigen::VectorXd comfort_constraints(const NetworkGraph& net, const Eigen::VectorXd& consumer_heat);

struct ObjectiveBreakdown {
  double total = 0.0;
  double pump = 0.0;    // lambda_P * sum dp * q over internal arcs [eur]
  double piping = 0.0;  // sum C(d) * L over internal arcs [eur]
};

// Objective at a solved state for the (projected) design.
ObjectiveBreakdown objective(const NetworkGraph& net, const ModelAssembler& model,
                             const DesignVector& projected, const StateVector& state,
                             const PipeCatalog& cat, const CostWeights& weights, double upsilon,
                             double omega);

// Piping bill with every diameter snapped to its nearest catalog entry;
// used for stage-independent reporting and design comparison.
ObjectiveBreakdown objective_snapped(const NetworkGraph& net, const ModelAssembler& model,
                                     const DesignVector& projected, const StateVector& state,
                                     const PipeCatalog& cat, const CostWeights& weights);

// Quantities of interest with their state/design partials, ready for the
// adjoint solver. Both are evaluated at the projected design.
QuantityOfInterest objective_qoi(const NetworkGraph& net, const ModelAssembler& model,
                                 const DesignVector& projected, const StateVector& state,
                                 const PipeCatalog& cat, const CostWeights& weights,
                                 double upsilon, double omega);
QuantityOfInterest ks_comfort_qoi(const NetworkGraph& net, const ModelAssembler& model,
                                  const StateVector& state, double gamma);
// Warm-start objective: sum of squared relative heat mismatches against
// target_factor * Q_d (1.0 for the warm start; the discrete epilogue aims
// at the lower comfort edge plus the aggregation gap).
QuantityOfInterest heat_mismatch_qoi(const NetworkGraph& net, const ModelAssembler& model,
                                     const StateVector& state, double target_factor = 1.0);

// Maps a gradient over the projected design back to the raw design:
// multiplies diameter entries by the projection slope, identity elsewhere.
Eigen::VectorXd chain_gradient(const Eigen::VectorXd& grad_projected, const DesignVector& raw,
                               const PipeCatalog& cat, double chi, const DesignLayout& layout);

// Projects only the diameter block of the design.
DesignVector project_design(const DesignVector& raw, const PipeCatalog& cat, double chi);

}  // namespace dhn
