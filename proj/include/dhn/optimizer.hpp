// SQP-BFGS optimization over the reduced design problem with the single
// KS-aggregated comfort constraint, the outer continuation loop over
// (gamma, chi, upsilon, omega), and the operations-only warm start.
#pragma once

#include <functional>
#include <optional>

#include "dhn/design_space.hpp"

namespace dhn {

struct BoxConstraints {
  Eigen::VectorXd lo, hi;  // over the stacked design vector

  static BoxConstraints defaults(const NetworkGraph& net, const DesignLayout& layout,
                                 const PipeCatalog& cat, double alpha_min);
  void freeze(int index, double value);
  Eigen::VectorXd clamp(const Eigen::VectorXd& phi) const;
};

// min g'p + 1/2 p'Bp  s.t.  lo <= p <= hi,  c0 + a'p <= 0 (optional).
struct QpResult {
  Eigen::VectorXd p;
  double mu = 0.0;      // multiplier of the aggregated constraint
  bool elastic = false;  // linearized constraint infeasible over the box
  int inner_iterations = 0;
};
QpResult solve_box_qp(const Eigen::MatrixXd& B, const Eigen::VectorXd& g,
                      const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                      std::optional<std::pair<double, Eigen::VectorXd>> constraint,
                      double mu_hint = 1.0);

// Powell-damped BFGS update; keeps B symmetric positive definite, skips
// degenerate pairs.
void bfgs_update(Eigen::MatrixXd& B, const Eigen::VectorXd& s, const Eigen::VectorXd& y);

struct OptimizerOptions {
  int max_iter_per_stage = 200;
  double step_tol = 1e-6;     // inf-norm of the scaled SQP step
  double kkt_tol = 1e-6;      // scaled KKT residual
  double alpha_min = 1e-2;    // lower box bound of the heating valve control
  double armijo_c = 1e-4;
  double line_search_min = 9.5367431640625e-7;  // 2^-20
  bool freeze_operations = false;  // hold alpha/beta/q_b during optimize()
  double T_out_design = 40.0;      // [degC] network design return temperature
};

struct IterateLog {
  int stage = 0;
  int iteration = 0;
  double objective = 0.0;  // pump + piping [eur] (or mismatch in warm start)
  double pump = 0.0;
  double piping = 0.0;
  double h_ks = 0.0;
  double merit = 0.0;  // scaled merit function
  double step_norm = 0.0;
  long adjoint_solves = 0;  // cumulative
  double wall_s = 0.0;
};

struct WarmStartReport {
  bool feasible = false;
  bool converged = false;
  double max_mismatch = 0.0;  // max |Q/Q_d - 1|
  double heat_budget = 0.0;   // producer capacity at design return temp [W]
  double heat_demand = 0.0;   // total desired consumer heat [W]
  std::string error;
  std::vector<IterateLog> history;
};

struct OptimizeReport {
  bool success = false;
  DesignVector raw;
  DesignVector projected;
  StateVector state;
  double h_ks = 0.0;
  ObjectiveBreakdown final_objective;   // at final stage cost parameters
  ObjectiveBreakdown snapped_objective; // exact catalog piping bill
  double max_snap_distance = 0.0;       // max over groups of min |d - D_i|
  std::vector<int> failed_stages;
  std::vector<IterateLog> history;
  std::string error;
};

class Optimizer {
 public:
  Optimizer(const NetworkGraph& net, PipeCatalog catalog, CostWeights weights,
            ModelOptions model = {}, SolverOptions solver = {}, OptimizerOptions options = {});

  // Operation-parameter optimization (diameters held fixed) minimizing the
  // squared relative heat mismatch; phi is updated in place.
  WarmStartReport warm_start(DesignVector& phi);

  // Full continuation optimization from a (typically warm-started) design.
  OptimizeReport optimize(const DesignVector& start, const ContinuationSchedule& schedule);

  long adjoint_solves() const { return adjoint_solves_; }
  long gradient_evaluations() const { return gradient_evals_; }
  const StateSolver& state_solver() const { return solver_; }

 private:
  struct Eval {
    bool ok = false;
    std::string error;
    DesignVector projected;
    ObjectiveBreakdown objective;
    double h_ks = 0.0;
    double value = 0.0;  // active objective, unscaled
  };
  struct Grads {
    Eigen::VectorXd objective;  // over raw design, unscaled
    Eigen::VectorXd constraint;
  };
  struct StageOutcome {
    bool converged = false;
    std::string error;
  };

  Eval evaluate(const DesignVector& phi, StateVector& state,
                const ContinuationSchedule::Stage& stage, bool constrained, bool mismatch_mode);
  Grads gradients(const DesignVector& phi, const Eval& eval,
                  const ContinuationSchedule::Stage& stage, bool constrained, bool mismatch_mode);
  StageOutcome run_sqp_stage(DesignVector& phi, StateVector& state, Eigen::MatrixXd& B,
                             const BoxConstraints& box, const ContinuationSchedule::Stage& stage,
                             bool constrained, bool mismatch_mode, int stage_index,
                             double i_scale, std::vector<IterateLog>& history, double t0_wall);

  Eigen::VectorXd variable_scales() const;

  const NetworkGraph* net_;
  PipeCatalog catalog_;
  CostWeights weights_;
  OptimizerOptions options_;
  StateSolver solver_;
  StateVector last_state_;  // state matching the solver's linearization
  double mismatch_target_ = 1.0;  // factor on Q_d in the mismatch objective
  long adjoint_solves_ = 0;
  long gradient_evals_ = 0;
};

}  // namespace dhn
