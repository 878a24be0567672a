// Adjoint gradient evaluation: one transposed block-triangular solve per
// quantity of interest against the state solver's retained factorizations,
// then assembly of the total design derivative.
#pragma once

#include "dhn/state_solver.hpp"

namespace dhn {

// A scalar quantity J(phi, y, z) with its partial derivatives evaluated at
// the converged state.
struct QuantityOfInterest {
  double value = 0.0;
  Eigen::VectorXd dJ_dy;    // length y_dim
  Eigen::VectorXd dJ_dz;    // length z_dim
  Eigen::VectorXd dJ_dphi;  // length design dim
  static QuantityOfInterest zero(const StateLayout& state, const DesignLayout& design);
};

struct AdjointState {
  Eigen::VectorXd y_adj;
  Eigen::VectorXd z_adj;
};

struct AdjointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Wraps a Linearization; read-only, so distinct quantities of interest may
// be evaluated concurrently.
class AdjointSolver {
 public:
  explicit AdjointSolver(const Linearization& lin);

  // Transposed two-step solve: thermal adjoint first, then hydraulic.
  AdjointState solve(const QuantityOfInterest& J) const;

  // Total derivative dJ/dphi = dJ_dphi + JH_phi^T y* + JE_phi^T z*.
  Eigen::VectorXd total_gradient(const QuantityOfInterest& J, const AdjointState& adj) const;

  // Convenience: solve + total_gradient.
  Eigen::VectorXd gradient(const QuantityOfInterest& J) const;

  // Forward (tangent) directional derivative through the linearized state
  // equations; the independent cross-check for the adjoint route.
  double tangent_directional(const QuantityOfInterest& J, const Eigen::VectorXd& v) const;

  // Number of adjoint system solves performed (one per quantity).
  long solve_count() const { return solves_; }
  void reset_solve_count() { solves_ = 0; }

 private:
  const Linearization* lin_;
  mutable long solves_ = 0;
};

}  // namespace dhn
