// Component models for pipes, junctions, consumers, and producers, and the
// assembly of the hydraulic residual H(phi, y) and thermal residual
// E(phi, y, z) together with their analytic Jacobians.
//
// The assembly kernels are data-parallel over arcs/nodes and run under
// OpenMP; a straight-line serial evaluation of the same residuals lives in
// reference_models.hpp and is used by the tests and the benchmark.
#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "dhn/network.hpp"

namespace dhn {

enum class RadiatorModel { lmtd, arithmetic_mean };

struct ModelOptions {
  double q_eps = 1e-9;  // flow smoothing scale [m^3/s]; |q| -> sqrt(q^2 + q_eps^2)
  double d_min = 1e-3;  // stand-in diameter for "no pipe" [m]
  RadiatorModel radiator = RadiatorModel::lmtd;
};

struct InfeasibleOperatingPoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Scalar component models.

// Flow conductance g of an internal pipe, q = g * dp, from the Cheng
// friction correlation blended over laminar/transitional/turbulent regimes
// and regular towards d -> 0. Derivatives are analytic.
struct ConductanceEval {
  double g = 0.0;
  double dg_dq = 0.0;
  double dg_dd = 0.0;
};
ConductanceEval conductance_eval(double q, double d, double L, const FluidProperties& fluid,
                                 const PipeProperties& pipe, double q_eps);
double conductance(double q, double d, double L, const FluidProperties& fluid,
                   const PipeProperties& pipe, double q_eps = 1e-9);

// Combined pipe + soil thermal resistance per unit length [K m / W].
double thermal_resistance(double d, const PipeProperties& pipe);
double thermal_resistance_deriv(double d, const PipeProperties& pipe);

// Fraction of the inlet temperature difference retained at the pipe exit,
// f = exp(-L / (rho c_p |q| R_t)). Tends to 0 as q -> 0 with L > 0.
struct HeatRetentionEval {
  double f = 0.0;
  double df_dq = 0.0;
  double df_dRt = 0.0;
};
HeatRetentionEval heat_retention_eval(double q, double L, double R_t,
                                      const FluidProperties& fluid, double q_eps);
double heat_retention(double q, double L, double R_t, const FluidProperties& fluid,
                      double q_eps = 1e-9);

// Radiator emission Q = xi * Theta^n where Theta is the mean temperature
// difference between radiator and room, either log-mean (default) or the
// arithmetic mean. theta_in/theta_out are differences over ambient.
// Throws InfeasibleOperatingPoint if the radiator outlet is not above room
// temperature.
double radiator_heat(double theta_in, double theta_out, const ConsumerSpec& spec,
                     RadiatorModel model = RadiatorModel::lmtd);

// Mean radiator-over-room temperature difference and its partials with
// respect to theta_in and theta_out; clamped flat below theta_floor.
struct MeanTempEval {
  double value = 0.0;
  double d_in = 0.0;
  double d_out = 0.0;
};
MeanTempEval radiator_mean_temp(double theta_in, double theta_out, double theta_house,
                                RadiatorModel model, double theta_floor = 1e-6);

// ---------------------------------------------------------------------------
// State and design vectors.

// Hydraulic state y = [p; q], thermal state z = [theta_n; theta_a; Q].
struct StateLayout {
  int n_nodes = 0;
  int n_arcs = 0;
  int n_heating = 0;
  int y_dim() const { return n_nodes + n_arcs; }
  int z_dim() const { return n_nodes + n_arcs + n_heating; }
  int p_at(int node) const { return node; }
  int q_at(int arc) const { return n_nodes + arc; }
  int theta_n_at(int node) const { return node; }
  int theta_a_at(int arc) const { return n_nodes + arc; }
  int heat_at(int k) const { return n_nodes + n_arcs + k; }
  static StateLayout of(const NetworkGraph& net);
};

struct StateVector {
  Eigen::VectorXd y;  // [p (n); q (m)]
  Eigen::VectorXd z;  // [theta_n (n); theta_a (m); Q (n_ch)]

  static StateVector zero(const StateLayout& lay);
  Eigen::VectorXd pressures(const StateLayout& lay) const { return y.head(lay.n_nodes); }
  Eigen::VectorXd flows(const StateLayout& lay) const { return y.tail(lay.n_arcs); }
  Eigen::VectorXd node_temps(const StateLayout& lay) const { return z.head(lay.n_nodes); }
  Eigen::VectorXd arc_temps(const StateLayout& lay) const { return z.segment(lay.n_nodes, lay.n_arcs); }
  Eigen::VectorXd consumer_heat(const StateLayout& lay) const { return z.tail(lay.n_heating); }
};

// Design variables phi = [d (per diameter group); alpha (per heating arc);
// beta (per bypass arc); q_b (per producer arc)].
struct DesignLayout {
  int n_d = 0;
  int n_alpha = 0;
  int n_beta = 0;
  int n_qb = 0;
  int dim() const { return n_d + n_alpha + n_beta + n_qb; }
  int d_at(int group) const { return group; }
  int alpha_at(int k) const { return n_d + k; }
  int beta_at(int k) const { return n_d + n_alpha + k; }
  int qb_at(int k) const { return n_d + n_alpha + n_beta + k; }
  static DesignLayout of(const NetworkGraph& net);
};

struct DesignVector {
  Eigen::VectorXd diameters;      // per diameter group [m]
  Eigen::VectorXd alpha;          // heating valve controls [0, 1]
  Eigen::VectorXd beta;           // bypass valve controls [0, 1]
  Eigen::VectorXd producer_flow;  // q_b per producer arc [m^3/s]

  Eigen::VectorXd stacked(const DesignLayout& lay) const;
  static DesignVector from_stacked(const DesignLayout& lay, const Eigen::VectorXd& phi);
  static DesignVector uniform(const NetworkGraph& net, double d, double alpha0, double beta0,
                              double qb_fraction);
};

// ---------------------------------------------------------------------------
// Residual and Jacobian assembly.
//
// Hydraulic rows (dim n + m): node continuity (reference node row replaced
// by p_ref = 0), then one momentum/flow row per arc. Thermal rows
// (dim n + m + n_ch): junction energy balance per node, one temperature row
// per arc, then one radiator characteristic row per consumer.

using SpMat = Eigen::SparseMatrix<double>;

struct HydraulicsOut {
  Eigen::VectorXd residual;
  SpMat* J_y = nullptr;    // d H / d [p; q]
  SpMat* J_phi = nullptr;  // d H / d phi
};

struct ThermalOut {
  Eigen::VectorXd residual;
  SpMat* J_z = nullptr;    // d E / d [theta_n; theta_a; Q]
  SpMat* J_y = nullptr;    // d E / d [p; q]
  SpMat* J_phi = nullptr;  // d E / d phi
};

class ModelAssembler {
 public:
  ModelAssembler(const NetworkGraph& net, ModelOptions opts);

  const StateLayout& state_layout() const { return state_; }
  const DesignLayout& design_layout() const { return design_; }
  const ModelOptions& options() const { return opts_; }
  const NetworkGraph& network() const { return *net_; }

  // Physical diameter for an internal arc under a given design (applies the
  // d_min floor to "removed" pipes).
  double arc_diameter(const DesignVector& phi, ArcId a) const;

  void hydraulics(const DesignVector& phi, const Eigen::VectorXd& y, HydraulicsOut& out) const;
  void thermal(const DesignVector& phi, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
               ThermalOut& out) const;

  // Converged-state sanity check: true if any heating arc operates with the
  // radiator outlet at or below room temperature.
  bool infeasible_radiator(const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                           std::string* detail = nullptr) const;

 private:
  const NetworkGraph* net_;
  ModelOptions opts_;
  StateLayout state_;
  DesignLayout design_;
};

// Smoothed |q| and upstream-node selector weight used throughout assembly.
inline double smooth_abs(double q, double q_eps) { return std::sqrt(q * q + q_eps * q_eps); }

// Global energy balance at a solved state: producer heat in, consumer heat
// out, pipe losses [W]. Balance defect should be at solver tolerance.
struct EnergyBalance {
  double producer_in = 0.0;
  double consumer_out = 0.0;
  double pipe_loss = 0.0;
  double defect() const { return producer_in - consumer_out - pipe_loss; }
};
EnergyBalance energy_balance(const NetworkGraph& net, const ModelAssembler& model,
                             const DesignVector& phi, const StateVector& state);

}  // namespace dhn
