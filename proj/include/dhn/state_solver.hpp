// Two-stage Newton solver for the network state equations: hydraulics
// first (flows and pressures do not depend on temperature), then the
// thermal system. The final factorizations are retained for the adjoint.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "dhn/physics.hpp"

namespace dhn {

struct SolverOptions {
  double tol_h = 1e-8;  // hydraulic residual tolerance (scaled inf-norm)
  double tol_t = 1e-8;  // thermal residual tolerance (scaled inf-norm)
  int max_iter = 60;
  double armijo_c = 1e-4;
  double damping_min = 9.5367431640625e-7;  // 2^-20
  // Extra full Newton steps after the tolerance is met, accepted only while
  // the residual keeps dropping; drives the state towards machine precision
  // for finite-difference audits.
  int polish_iterations = 0;
  std::string trace_path;  // optional per-iteration CSV trace
};

struct StageReport {
  bool converged = false;
  int iterations = 0;
  std::vector<double> residual_norms;  // scaled inf-norms, includes start
  std::vector<double> step_damping;
  std::string error;
};

struct SolveReport {
  bool converged = false;
  StageReport hydraulic;
  StageReport thermal;
  std::string error;
};

// Row scalings used for convergence tests; residual rows mix units
// (m^3/s, Pa, K, W), so norms are taken on scaled copies.
struct ResidualScales {
  double q_scale = 1.0;
  double p_scale = 1e5;
  double theta_scale = 50.0;
  double heat_scale = 1e4;
  static ResidualScales of(const NetworkGraph& net, const DesignVector& phi);
};

// Jacobian blocks and their factorizations at the converged state.
struct Linearization {
  SpMat JH_y, JH_phi;
  SpMat JE_z, JE_y, JE_phi;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_h;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_t;
  bool valid = false;
};

// One solver instance per problem; reusable across designs (warm starts),
// not safe for concurrent use.
class StateSolver {
 public:
  StateSolver(const NetworkGraph& net, ModelOptions model = {}, SolverOptions options = {});

  const ModelAssembler& model() const { return assembler_; }
  const SolverOptions& options() const { return options_; }
  SolverOptions& options() { return options_; }

  // Tree-routed flow distribution and producer-temperature initialization.
  StateVector initial_guess(const DesignVector& phi) const;

  SolveReport solve_hydraulic(const DesignVector& phi, StateVector& state);
  SolveReport solve_thermal(const DesignVector& phi, StateVector& state);

  // Full two-stage solve; `state` is both the initial guess and the result.
  SolveReport solve(const DesignVector& phi, StateVector& state);

  // Cold-start convenience: initial_guess + solve.
  SolveReport solve_fresh(const DesignVector& phi, StateVector& state);

  // Single-matrix Newton on the full block system; agrees with the
  // two-stage scheme and is kept as a verification path.
  SolveReport solve_monolithic(const DesignVector& phi, StateVector& state);

  // Linearization at the last converged state (for the adjoint solver).
  const Linearization& linearization() const { return lin_; }

  long factorization_count() const { return n_factorizations_; }

 private:
  void build_linearization(const DesignVector& phi, const StateVector& state);

  const NetworkGraph* net_;
  ModelAssembler assembler_;
  SolverOptions options_;
  Linearization lin_;
  long n_factorizations_ = 0;
};

}  // namespace dhn
