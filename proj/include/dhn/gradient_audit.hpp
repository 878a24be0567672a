// Central finite-difference audit of the adjoint design gradients for the
// objective and the aggregated comfort constraint, through the full
// projection + state-solve pipeline.
#pragma once

#include "dhn/design_space.hpp"

namespace dhn {

struct GradientAuditResult {
  Eigen::VectorXd adjoint_objective, fd_objective;
  Eigen::VectorXd adjoint_ks, fd_ks;
  double max_rel_objective = 0.0;
  double max_rel_ks = 0.0;
  int worst_objective_index = -1;
  int worst_ks_index = -1;
  double wall_s = 0.0;

  bool pass(double tol) const { return max_rel_objective <= tol && max_rel_ks <= tol; }
};

// Componentwise relative error of adjoint vs central differences, with a
// floor of 1e-7 * ||g||_inf so negligible entries compare absolutely.
GradientAuditResult audit_gradients(const NetworkGraph& net, const PipeCatalog& cat,
                                    const CostWeights& weights,
                                    const ContinuationSchedule::Stage& stage,
                                    const DesignVector& phi, ModelOptions model = {},
                                    SolverOptions solver = {}, double rel_step = 1e-4);

}  // namespace dhn
