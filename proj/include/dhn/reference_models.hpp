// Straight-line serial evaluation of the hydraulic and thermal residuals,
// written equation-by-equation from the component models. Kept independent
// of the production assembly in physics.cpp so the two can be checked
// against each other; also the serial baseline for the assembly benchmark.
#pragma once

#include <Eigen/Dense>

#include "dhn/network.hpp"
#include "dhn/physics.hpp"

namespace dhn::reference {

Eigen::VectorXd hydraulic_residual(const NetworkGraph& net, const DesignVector& phi,
                                   const Eigen::VectorXd& y, const ModelOptions& opts);

Eigen::VectorXd thermal_residual(const NetworkGraph& net, const DesignVector& phi,
                                 const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                                 const ModelOptions& opts);

}  // namespace dhn::reference
