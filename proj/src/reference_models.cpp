#include "dhn/reference_models.hpp"

#include <cmath>

namespace dhn::reference {

namespace {

double sabs(double q, double eps) { return std::sqrt(q * q + eps * eps); }
double smax(double q, double eps) { return 0.5 * (q + sabs(q, eps)); }
double smin(double q, double eps) { return 0.5 * (q - sabs(q, eps)); }

double upstream_theta(const NetworkGraph& net, const Eigen::VectorXd& q,
                      const Eigen::VectorXd& theta_n, ArcId a, double q_eps) {
  const Arc& arc = net.arcs[a];
  const double w = 0.5 * (1.0 + q[a] / sabs(q[a], q_eps));
  return w * theta_n[arc.from] + (1.0 - w) * theta_n[arc.to];
}

}  // namespace

Eigen::VectorXd hydraulic_residual(const NetworkGraph& net, const DesignVector& phi,
                                   const Eigen::VectorXd& y, const ModelOptions& opts) {
  const int n = net.n_nodes();
  const int m = net.n_arcs();
  const Eigen::VectorXd p = y.head(n);
  const Eigen::VectorXd q = y.tail(m);
  Eigen::VectorXd H = Eigen::VectorXd::Zero(n + m);

  // Node continuity: net outflow minus inflow is zero.
  for (int v = 0; v < n; ++v) {
    double sum = 0.0;
    for (const Arc& arc : net.arcs) {
      if (arc.from == v) sum += q[arc.id];
      if (arc.to == v) sum -= q[arc.id];
    }
    H[v] = sum;
  }
  H[net.reference_pressure_node] = p[net.reference_pressure_node];

  for (const Arc& arc : net.arcs) {
    const double dp = p[arc.from] - p[arc.to];
    const double qa = q[arc.id];
    double r = 0.0;
    switch (arc.kind) {
      case ArcKind::internal: {
        const double d = std::max(phi.diameters[arc.diameter_group], opts.d_min);
        const double g =
            conductance(qa, d, arc.length, net.scenario.fluid, net.scenario.pipe, opts.q_eps);
        r = dp - qa / g;
        break;
      }
      case ArcKind::consumer_heating: {
        const int k = net.consumer_of_arc[arc.id];
        const ConsumerSpec& c = net.consumers[k];
        r = dp - c.zeta * sabs(qa, opts.q_eps) * qa / (phi.alpha[k] * phi.alpha[k]);
        break;
      }
      case ArcKind::consumer_bypass: {
        const int k = net.consumer_of_arc[arc.id];
        const ConsumerSpec& c = net.consumers[k];
        r = qa - phi.beta[net.bypass_index_of_arc[arc.id]] * (c.q_max_b / c.dp_des_b) * dp;
        break;
      }
      case ArcKind::producer:
        r = qa - phi.producer_flow[net.producer_of_arc[arc.id]];
        break;
    }
    H[n + arc.id] = r;
  }
  return H;
}

Eigen::VectorXd thermal_residual(const NetworkGraph& net, const DesignVector& phi,
                                 const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                                 const ModelOptions& opts) {
  const int n = net.n_nodes();
  const int m = net.n_arcs();
  const int nc = net.n_consumers();
  const double rho_cp = net.scenario.fluid.rho * net.scenario.fluid.c_p;
  const Eigen::VectorXd q = y.tail(m);
  const Eigen::VectorXd theta_n = z.head(n);
  const Eigen::VectorXd theta_a = z.segment(n, m);
  const Eigen::VectorXd heat = z.tail(nc);
  Eigen::VectorXd E = Eigen::VectorXd::Zero(n + m + nc);

  // Junction energy balance, smoothed max/min mixing weights.
  for (int v = 0; v < n; ++v) {
    double sum = 0.0;
    for (const Arc& arc : net.arcs) {
      const double qa = q[arc.id];
      if (arc.from == v)
        sum += smax(qa, opts.q_eps) * theta_n[v] + smin(qa, opts.q_eps) * theta_a[arc.id];
      if (arc.to == v)
        sum += smax(-qa, opts.q_eps) * theta_n[v] + smin(-qa, opts.q_eps) * theta_a[arc.id];
    }
    E[v] = sum;
  }

  for (const Arc& arc : net.arcs) {
    const double qa = q[arc.id];
    const double th_in = upstream_theta(net, q, theta_n, arc.id, opts.q_eps);
    const double th_exit = theta_a[arc.id];
    double r = 0.0;
    switch (arc.kind) {
      case ArcKind::internal: {
        const double d = std::max(phi.diameters[arc.diameter_group], opts.d_min);
        const double Rt = thermal_resistance(d, net.scenario.pipe);
        const double f = heat_retention(qa, arc.length, Rt, net.scenario.fluid, opts.q_eps);
        r = th_exit - f * th_in;
        break;
      }
      case ArcKind::consumer_heating: {
        const int k = net.consumer_of_arc[arc.id];
        r = rho_cp * qa * (th_in - th_exit) - heat[k];
        const ConsumerSpec& c = net.consumers[k];
        const MeanTempEval mt = radiator_mean_temp(th_in, th_exit, c.theta_house, opts.radiator);
        E[n + m + k] = heat[k] - c.xi * std::pow(mt.value, c.n);
        break;
      }
      case ArcKind::consumer_bypass:
        r = th_exit - th_in;
        break;
      case ArcKind::producer:
        r = th_exit - net.producers[net.producer_of_arc[arc.id]].theta_b;
        break;
    }
    E[n + arc.id] = r;
  }
  return E;
}

}  // namespace dhn::reference
