#include "dhn/adjoint.hpp"

namespace dhn {

QuantityOfInterest QuantityOfInterest::zero(const StateLayout& state, const DesignLayout& design) {
  QuantityOfInterest j;
  j.dJ_dy = Eigen::VectorXd::Zero(state.y_dim());
  j.dJ_dz = Eigen::VectorXd::Zero(state.z_dim());
  j.dJ_dphi = Eigen::VectorXd::Zero(design.dim());
  return j;
}

AdjointSolver::AdjointSolver(const Linearization& lin) : lin_(&lin) {
  if (!lin.valid) throw AdjointError("adjoint requires a valid state linearization");
}

AdjointState AdjointSolver::solve(const QuantityOfInterest& J) const {
  AdjointState adj;
  // Thermal adjoint: (dE/dz)^T z* = -(dJ/dz)^T.
  adj.z_adj = lin_->lu_t->transpose().solve((-J.dJ_dz).eval());
  if (lin_->lu_t->info() != Eigen::Success)
    throw AdjointError("transposed thermal solve failed");
  // Hydraulic adjoint: (dH/dy)^T y* = -(dJ/dy)^T - (dE/dy)^T z*.
  const Eigen::VectorXd rhs = -J.dJ_dy - lin_->JE_y.transpose() * adj.z_adj;
  adj.y_adj = lin_->lu_h->transpose().solve(rhs);
  if (lin_->lu_h->info() != Eigen::Success)
    throw AdjointError("transposed hydraulic solve failed");
  ++solves_;
  return adj;
}

Eigen::VectorXd AdjointSolver::total_gradient(const QuantityOfInterest& J,
                                              const AdjointState& adj) const {
  return J.dJ_dphi + lin_->JH_phi.transpose() * adj.y_adj +
         lin_->JE_phi.transpose() * adj.z_adj;
}

Eigen::VectorXd AdjointSolver::gradient(const QuantityOfInterest& J) const {
  return total_gradient(J, solve(J));
}

double AdjointSolver::tangent_directional(const QuantityOfInterest& J,
                                          const Eigen::VectorXd& v) const {
  // dH/dy dy = -dH/dphi v, then dE/dz dz = -dE/dphi v - dE/dy dy.
  const Eigen::VectorXd dy = lin_->lu_h->solve((-(lin_->JH_phi * v)).eval());
  const Eigen::VectorXd dz =
      lin_->lu_t->solve((-(lin_->JE_phi * v) - lin_->JE_y * dy).eval());
  return J.dJ_dphi.dot(v) + J.dJ_dy.dot(dy) + J.dJ_dz.dot(dz);
}

}  // namespace dhn
