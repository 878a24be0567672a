#include "dhn/gradient_audit.hpp"

#include <chrono>

namespace dhn {

namespace {

struct PipelineValues {
  double objective = 0.0;
  double h_ks = 0.0;
};

PipelineValues evaluate_pipeline(StateSolver& solver, const NetworkGraph& net,
                                 const PipeCatalog& cat, const CostWeights& weights,
                                 const ContinuationSchedule::Stage& stage,
                                 const DesignVector& phi, const StateVector& warm) {
  const DesignVector projected = project_design(phi, cat, stage.chi);
  StateVector state = warm;
  const SolveReport rep = solver.solve(projected, state);
  if (!rep.converged)
    throw std::runtime_error("gradient audit: state solve failed: " + rep.error);
  PipelineValues v;
  v.objective = objective(net, solver.model(), projected, state, cat, weights, stage.upsilon,
                          stage.omega)
                    .total;
  v.h_ks = ks_aggregate(
      comfort_constraints(net, state.consumer_heat(solver.model().state_layout())), stage.gamma);
  return v;
}

double rel_error(double a, double f, double floor) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), floor});
}

}  // namespace

GradientAuditResult audit_gradients(const NetworkGraph& net, const PipeCatalog& cat,
                                    const CostWeights& weights,
                                    const ContinuationSchedule::Stage& stage,
                                    const DesignVector& phi, ModelOptions model,
                                    SolverOptions solver_opts, double rel_step) {
  const auto t0 = std::chrono::steady_clock::now();
  // Tight tolerances plus polish steps keep state-solve noise well below
  // the FD increments.
  solver_opts.tol_h = std::min(solver_opts.tol_h, 1e-12);
  solver_opts.tol_t = std::min(solver_opts.tol_t, 1e-12);
  solver_opts.polish_iterations = std::max(solver_opts.polish_iterations, 2);

  StateSolver solver(net, model, solver_opts);
  const DesignLayout& dl = solver.model().design_layout();
  const DesignVector projected = project_design(phi, cat, stage.chi);
  StateVector base = solver.initial_guess(projected);
  SolveReport rep = solver.solve(projected, base);
  if (!rep.converged)
    throw std::runtime_error("gradient audit: base state solve failed: " + rep.error);

  GradientAuditResult res;
  {
    AdjointSolver adj(solver.linearization());
    const QuantityOfInterest obj =
        objective_qoi(net, solver.model(), projected, base, cat, weights, stage.upsilon,
                      stage.omega);
    res.adjoint_objective = chain_gradient(adj.gradient(obj), phi, cat, stage.chi, dl);
    const QuantityOfInterest ks = ks_comfort_qoi(net, solver.model(), base, stage.gamma);
    res.adjoint_ks = chain_gradient(adj.gradient(ks), phi, cat, stage.chi, dl);
  }

  Eigen::VectorXd scale(dl.dim());
  for (int k = 0; k < dl.n_d; ++k) scale[dl.d_at(k)] = cat.d_max();
  for (int k = 0; k < dl.n_alpha; ++k) scale[dl.alpha_at(k)] = 1.0;
  for (int k = 0; k < dl.n_beta; ++k) scale[dl.beta_at(k)] = 1.0;
  for (int k = 0; k < dl.n_qb; ++k) scale[dl.qb_at(k)] = net.producers[k].q_b_max;

  const Eigen::VectorXd phi0 = phi.stacked(dl);
  res.fd_objective.resize(dl.dim());
  res.fd_ks.resize(dl.dim());

#pragma omp parallel
  {
    StateSolver local(net, model, solver_opts);
#pragma omp for schedule(static)
    for (int i = 0; i < dl.dim(); ++i) {
      // Richardson-extrapolated central differences: two step sizes give an
      // O(h^4) estimate, so the base step can stay large enough that solver
      // noise is negligible even where the projection is steep.
      auto central = [&](double h) {
        Eigen::VectorXd up = phi0, dn = phi0;
        up[i] += h;
        dn[i] -= h;
        const PipelineValues vu = evaluate_pipeline(local, net, cat, weights, stage,
                                                    DesignVector::from_stacked(dl, up), base);
        const PipelineValues vd = evaluate_pipeline(local, net, cat, weights, stage,
                                                    DesignVector::from_stacked(dl, dn), base);
        return std::make_pair((vu.objective - vd.objective) / (2.0 * h),
                              (vu.h_ks - vd.h_ks) / (2.0 * h));
      };
      const double h = rel_step * scale[i];
      const auto [obj_h, ks_h] = central(h);
      const auto [obj_h2, ks_h2] = central(0.5 * h);
      res.fd_objective[i] = (4.0 * obj_h2 - obj_h) / 3.0;
      res.fd_ks[i] = (4.0 * ks_h2 - ks_h) / 3.0;
    }
  }

  // Errors are measured on the scaled gradient (derivative with respect to
  // phi_i / scale_i). Central differences through the nonlinear solve
  // resolve absolute increments down to ~1e-10 of the quantity scale, so a
  // 1e-5 relative comparison is meaningful only for components above ~1e-3
  // of the dominant entry; smaller components compare against that floor,
  // i.e. they still have to match to 1e-8 of the dominant sensitivity.
  const Eigen::VectorXd ao = res.adjoint_objective.cwiseProduct(scale);
  const Eigen::VectorXd fo = res.fd_objective.cwiseProduct(scale);
  const Eigen::VectorXd ak = res.adjoint_ks.cwiseProduct(scale);
  const Eigen::VectorXd fk = res.fd_ks.cwiseProduct(scale);
  const double floor_obj =
      1e-3 * std::max(ao.lpNorm<Eigen::Infinity>(), fo.lpNorm<Eigen::Infinity>()) + 1e-300;
  const double floor_ks =
      1e-3 * std::max(ak.lpNorm<Eigen::Infinity>(), fk.lpNorm<Eigen::Infinity>()) + 1e-300;
  for (int i = 0; i < dl.dim(); ++i) {
    const double eo = rel_error(ao[i], fo[i], floor_obj);
    if (eo > res.max_rel_objective) {
      res.max_rel_objective = eo;
      res.worst_objective_index = i;
    }
    const double ek = rel_error(ak[i], fk[i], floor_ks);
    if (ek > res.max_rel_ks) {
      res.max_rel_ks = ek;
      res.worst_ks_index = i;
    }
  }
  res.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace dhn
