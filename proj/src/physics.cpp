#include "dhn/physics.hpp"

#include <cmath>
#include <vector>

namespace dhn {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLn10 = 2.30258509299404568402;

// f_TS = 1.8 log10(Re/6.8) turns negative below Re = 6.8 where its exponent
// in the Cheng product is ~(Re/Re_LT)^9; clamping keeps pow() well-defined
// with an error far below double precision.
constexpr double kTsFloor = 1e-6;

struct Blend {
  double f = 0.0;        // 1/(1+t)
  double one_minus = 0.0;  // t/(1+t), formed without cancellation
};

Blend blend_of(double t) {
  Blend b;
  if (std::isinf(t)) {
    b.f = 0.0;
    b.one_minus = 1.0;
    return b;
  }
  b.f = 1.0 / (1.0 + t);
  b.one_minus = t / (1.0 + t);
  return b;
}

}  // namespace

ConductanceEval conductance_eval(double q, double d, double L, const FluidProperties& fluid,
                                 const PipeProperties& pipe, double q_eps) {
  const double eps = pipe.roughness;
  if (!(d > 2.0 * eps)) throw std::domain_error("conductance: diameter must exceed 2*roughness");
  if (!(L > 0.0)) throw std::domain_error("conductance: length must be positive");

  const double u = smooth_abs(q, q_eps);
  const double Re = 4.0 * fluid.rho * u / (kPi * fluid.mu * d);

  const Blend a = blend_of(std::pow(Re / pipe.Re_LT, 9.0));
  const Blend b = blend_of(std::pow(Re * eps / (160.0 * d), 2.0));
  const Blend g_ = blend_of(std::pow((d - 2.0 * eps) / (2.0 * eps), 6.0));

  double f_TS = 1.8 * std::log10(Re / 6.8);
  double dlnTS_dRe_scaled = 1.8 / (kLn10 * f_TS);  // Re * d(ln f_TS)/dRe
  if (f_TS < kTsFloor) {
    f_TS = kTsFloor;
    dlnTS_dRe_scaled = 0.0;
  }
  const double f_L = fluid.rho / (16.0 * d * kPi * fluid.mu);
  const double f_TR = 2.0 * std::log10(3.7 * d / eps);
  const double f_C = std::pow(d, 5.0) * kPi * kPi / (8.0 * fluid.rho * L);

  const double E_u = -a.one_minus * (1.0 - g_.f);
  const double E_g = 2.0 * g_.f;
  const double E_L = a.f * (1.0 - g_.f);
  const double E_TS = 2.0 * b.f * a.one_minus * (1.0 - g_.f);
  const double E_TR = 2.0 * a.one_minus * b.one_minus * (1.0 - g_.f);

  const double ln_u = std::log(u);
  const double ln_dg = std::log(d - 2.0 * eps);
  const double ln_fL = std::log(f_L);
  const double ln_fTS = std::log(f_TS);
  const double ln_fTR = std::log(f_TR);

  const double gval = std::exp(E_u * ln_u + E_g * ln_dg + E_L * ln_fL + E_TS * ln_fTS +
                               E_TR * ln_fTR + std::log(f_C));

  // Re-scaled derivatives of the blending factors: Da = Re d f_a / d Re.
  const double Da = -9.0 * a.f * a.one_minus;
  const double Db = -2.0 * b.f * b.one_minus;

  // Re * d(ln g)/dRe at fixed d.
  const double rD = (1.0 - g_.f) * Da * (ln_u + ln_fL) +
                    2.0 * (1.0 - g_.f) * (Db * a.one_minus - Da * b.f) * ln_fTS +
                    E_TS * dlnTS_dRe_scaled +
                    2.0 * (1.0 - g_.f) * (-Da * b.one_minus - a.one_minus * Db) * ln_fTR;

  ConductanceEval out;
  out.g = gval;
  out.dg_dq = gval * (q / (u * u)) * (E_u + rD);

  // d-channel: explicit d plus Re(d) = const/d.
  const double dfa_dd = -Da / d;                      // via dRe/dd = -Re/d
  const double dfb_dd = -2.0 * Db / d;                // t_b ~ d^-4 in total
  const double dfg_dd = -6.0 * g_.f * g_.one_minus / (d - 2.0 * eps);

  const double dEu_dd = dfa_dd * (1.0 - g_.f) + a.one_minus * dfg_dd;
  const double dEg_dd = 2.0 * dfg_dd;
  const double dEL_dd = dfa_dd * (1.0 - g_.f) - a.f * dfg_dd;
  const double dETS_dd =
      2.0 * (dfb_dd * a.one_minus * (1.0 - g_.f) - b.f * dfa_dd * (1.0 - g_.f) -
             b.f * a.one_minus * dfg_dd);
  const double dETR_dd =
      2.0 * (-dfa_dd * b.one_minus * (1.0 - g_.f) - a.one_minus * dfb_dd * (1.0 - g_.f) -
             a.one_minus * b.one_minus * dfg_dd);

  const double dlng_dd = dEu_dd * ln_u + dEg_dd * ln_dg + E_g / (d - 2.0 * eps) +
                         dEL_dd * ln_fL - E_L / d + dETS_dd * ln_fTS -
                         E_TS * dlnTS_dRe_scaled / d + dETR_dd * ln_fTR +
                         E_TR * 2.0 / (kLn10 * d * f_TR) + 5.0 / d;
  out.dg_dd = gval * dlng_dd;
  return out;
}

double conductance(double q, double d, double L, const FluidProperties& fluid,
                   const PipeProperties& pipe, double q_eps) {
  return conductance_eval(q, d, L, fluid, pipe, q_eps).g;
}

double thermal_resistance(double d, const PipeProperties& pipe) {
  if (!(d > 0.0)) throw std::domain_error("thermal_resistance: diameter must be positive");
  if (!(4.0 * pipe.burial_depth > pipe.casing_ratio * d))
    throw std::domain_error("thermal_resistance: casing exceeds burial depth");
  return std::log(4.0 * pipe.burial_depth / (pipe.casing_ratio * d)) /
             (2.0 * kPi * pipe.lambda_ground) +
         std::log(pipe.casing_ratio) / (2.0 * kPi * pipe.lambda_insulation);
}

double thermal_resistance_deriv(double d, const PipeProperties& pipe) {
  return -1.0 / (2.0 * kPi * pipe.lambda_ground * d);
}

HeatRetentionEval heat_retention_eval(double q, double L, double R_t,
                                      const FluidProperties& fluid, double q_eps) {
  if (!(R_t > 0.0)) throw std::domain_error("heat_retention: thermal resistance must be positive");
  HeatRetentionEval out;
  if (L == 0.0) {
    out.f = 1.0;
    return out;
  }
  const double u = smooth_abs(q, q_eps);
  const double c = fluid.rho * fluid.c_p * R_t;
  out.f = std::exp(-L / (c * u));
  out.df_dq = out.f * L * q / (c * u * u * u);
  out.df_dRt = out.f * L / (fluid.rho * fluid.c_p * u * R_t * R_t);
  return out;
}

double heat_retention(double q, double L, double R_t, const FluidProperties& fluid,
                      double q_eps) {
  return heat_retention_eval(q, L, R_t, fluid, q_eps).f;
}

namespace {

// Log-mean of x and y with analytic partials; stable series near x = y.
MeanTempEval log_mean(double x, double y) {
  MeanTempEval out;
  const double u = (x - y) / y;
  if (std::abs(u) < 1e-5) {
    const double S = 1.0 + u * (0.5 + u * (-1.0 / 12.0 + u / 24.0));
    const double Sp = 0.5 + u * (-1.0 / 6.0 + u * 0.125);
    out.value = y * S;
    out.d_in = Sp;
    out.d_out = S - (x / y) * Sp;
  } else {
    const double l = std::log(x / y);
    out.value = (x - y) / l;
    out.d_in = (l - (x - y) / x) / (l * l);
    out.d_out = (-l + (x - y) / y) / (l * l);
  }
  return out;
}

}  // namespace

MeanTempEval radiator_mean_temp(double theta_in, double theta_out, double theta_house,
                                RadiatorModel model, double theta_floor) {
  if (model == RadiatorModel::arithmetic_mean) {
    MeanTempEval out;
    out.value = 0.5 * (theta_in + theta_out) - theta_house;
    if (out.value < theta_floor) {
      out.value = theta_floor;
      return out;
    }
    out.d_in = 0.5;
    out.d_out = 0.5;
    return out;
  }
  const double x = theta_in - theta_house;
  const double y = theta_out - theta_house;
  const bool gx = x > theta_floor;
  const bool gy = y > theta_floor;
  MeanTempEval out = log_mean(gx ? x : theta_floor, gy ? y : theta_floor);
  if (!gx) out.d_in = 0.0;
  if (!gy) out.d_out = 0.0;
  return out;
}

double radiator_heat(double theta_in, double theta_out, const ConsumerSpec& spec,
                     RadiatorModel model) {
  // Validity region per model: the log-mean needs both endpoints above the
  // room level; the arithmetic-mean variant only needs the mean above it
  // (strong throttling legitimately pulls its cold end below room).
  if (model == RadiatorModel::lmtd) {
    if (!(theta_out > spec.theta_house) || !(theta_in > spec.theta_house))
      throw InfeasibleOperatingPoint("radiator endpoint at or below room temperature");
  } else if (!(0.5 * (theta_in + theta_out) > spec.theta_house)) {
    throw InfeasibleOperatingPoint("radiator mean temperature at or below room temperature");
  }
  const MeanTempEval m = radiator_mean_temp(theta_in, theta_out, spec.theta_house, model);
  return spec.xi * std::pow(m.value, spec.n);
}

// ---------------------------------------------------------------------------

StateLayout StateLayout::of(const NetworkGraph& net) {
  StateLayout lay;
  lay.n_nodes = net.n_nodes();
  lay.n_arcs = net.n_arcs();
  lay.n_heating = net.n_consumers();
  return lay;
}

StateVector StateVector::zero(const StateLayout& lay) {
  StateVector s;
  s.y = Eigen::VectorXd::Zero(lay.y_dim());
  s.z = Eigen::VectorXd::Zero(lay.z_dim());
  return s;
}

DesignLayout DesignLayout::of(const NetworkGraph& net) {
  DesignLayout lay;
  lay.n_d = net.n_diameter_groups;
  lay.n_alpha = net.n_consumers();
  lay.n_beta = net.n_bypass();
  lay.n_qb = net.n_producers();
  return lay;
}

Eigen::VectorXd DesignVector::stacked(const DesignLayout& lay) const {
  Eigen::VectorXd phi(lay.dim());
  phi << diameters, alpha, beta, producer_flow;
  return phi;
}

DesignVector DesignVector::from_stacked(const DesignLayout& lay, const Eigen::VectorXd& phi) {
  DesignVector d;
  d.diameters = phi.head(lay.n_d);
  d.alpha = phi.segment(lay.n_d, lay.n_alpha);
  d.beta = phi.segment(lay.n_d + lay.n_alpha, lay.n_beta);
  d.producer_flow = phi.tail(lay.n_qb);
  return d;
}

DesignVector DesignVector::uniform(const NetworkGraph& net, double d, double alpha0, double beta0,
                                   double qb_fraction) {
  DesignVector phi;
  phi.diameters = Eigen::VectorXd::Constant(net.n_diameter_groups, d);
  phi.alpha = Eigen::VectorXd::Constant(net.n_consumers(), alpha0);
  phi.beta = Eigen::VectorXd::Constant(net.n_bypass(), beta0);
  phi.producer_flow.resize(net.n_producers());
  for (int k = 0; k < net.n_producers(); ++k)
    phi.producer_flow[k] = qb_fraction * net.producers[k].q_b_max;
  return phi;
}

// ---------------------------------------------------------------------------

namespace {

struct Incident {
  ArcId arc;
  double sign;  // +1 if the node is the arc start, -1 if the end
};

}  // namespace

struct AssemblerScratch;

ModelAssembler::ModelAssembler(const NetworkGraph& net, ModelOptions opts)
    : net_(&net), opts_(opts), state_(StateLayout::of(net)), design_(DesignLayout::of(net)) {}

double ModelAssembler::arc_diameter(const DesignVector& phi, ArcId a) const {
  const int g = net_->arcs[a].diameter_group;
  return std::max(phi.diameters[g], opts_.d_min);
}

namespace {

// Per-arc hydraulic row data produced by the parallel kernel.
struct ArcHyd {
  double resid = 0.0;
  double dr_dq = 0.0;
  double p_from = 0.0;  // coefficient of p at the start node
  double p_to = 0.0;
  double dr_dphi = 0.0;
  int phi_col = -1;
};

// Per-arc thermal data: the arc temperature row plus the junction-mixing
// coefficients it contributes at both endpoints.
struct ArcTherm {
  // arc temperature row n + a
  double resid = 0.0;
  double d_theta_from = 0.0;
  double d_theta_to = 0.0;
  double d_theta_a = 0.0;
  double d_heat = 0.0;  // heating arcs: coefficient of Q_k
  double dr_dq = 0.0;
  double dr_dphi = 0.0;
  int phi_col = -1;
  // junction mixing weights: row(from): win_f * theta_from + wout_f * theta_a
  double win_f = 0.0, wout_f = 0.0, dwin_f = 0.0, dwout_f = 0.0;
  double win_t = 0.0, wout_t = 0.0, dwin_t = 0.0, dwout_t = 0.0;
};

// Radiator characteristic row per consumer.
struct RadiatorRow {
  double resid = 0.0;
  double d_theta_from = 0.0;
  double d_theta_to = 0.0;
  double d_theta_a = 0.0;
  double d_heat = 1.0;
  double dr_dq = 0.0;
};

}  // namespace

void ModelAssembler::hydraulics(const DesignVector& phi, const Eigen::VectorXd& y,
                                HydraulicsOut& out) const {
  const NetworkGraph& net = *net_;
  const int n = state_.n_nodes;
  const int m = state_.n_arcs;
  const double q_eps = opts_.q_eps;
  const auto p = y.head(n);
  const auto q = y.tail(m);

  std::vector<ArcHyd> rows(m);
  const bool want_jphi = out.J_phi != nullptr;

#pragma omp parallel for schedule(static)
  for (int a = 0; a < m; ++a) {
    const Arc& arc = net.arcs[a];
    ArcHyd r;
    const double qa = q[a];
    const double dp = p[arc.from] - p[arc.to];
    switch (arc.kind) {
      case ArcKind::internal: {
        const double d = std::max(phi.diameters[arc.diameter_group], opts_.d_min);
        const ConductanceEval ce =
            conductance_eval(qa, d, arc.length, net.scenario.fluid, net.scenario.pipe, q_eps);
        r.resid = dp - qa / ce.g;
        r.p_from = 1.0;
        r.p_to = -1.0;
        r.dr_dq = -1.0 / ce.g + qa * ce.dg_dq / (ce.g * ce.g);
        if (want_jphi) {
          r.phi_col = design_.d_at(arc.diameter_group);
          const bool active = phi.diameters[arc.diameter_group] > opts_.d_min;
          r.dr_dphi = active ? qa * ce.dg_dd / (ce.g * ce.g) : 0.0;
        }
        break;
      }
      case ArcKind::consumer_heating: {
        const int k = net.consumer_of_arc[a];
        const ConsumerSpec& c = net.consumers[k];
        const double alpha = phi.alpha[k];
        const double s = smooth_abs(qa, q_eps);
        r.resid = dp - c.zeta * s * qa / (alpha * alpha);
        r.p_from = 1.0;
        r.p_to = -1.0;
        r.dr_dq = -c.zeta * (s + qa * qa / s) / (alpha * alpha);
        if (want_jphi) {
          r.phi_col = design_.alpha_at(k);
          r.dr_dphi = 2.0 * c.zeta * s * qa / (alpha * alpha * alpha);
        }
        break;
      }
      case ArcKind::consumer_bypass: {
        const int k = net.consumer_of_arc[a];
        const int bi = net.bypass_index_of_arc[a];
        const ConsumerSpec& c = net.consumers[k];
        const double kappa = c.q_max_b / c.dp_des_b;
        const double beta = phi.beta[bi];
        r.resid = qa - beta * kappa * dp;
        r.dr_dq = 1.0;
        r.p_from = -beta * kappa;
        r.p_to = beta * kappa;
        if (want_jphi) {
          r.phi_col = design_.beta_at(bi);
          r.dr_dphi = -kappa * dp;
        }
        break;
      }
      case ArcKind::producer: {
        const int pk = net.producer_of_arc[a];
        r.resid = qa - phi.producer_flow[pk];
        r.dr_dq = 1.0;
        if (want_jphi) {
          r.phi_col = design_.qb_at(pk);
          r.dr_dphi = -1.0;
        }
        break;
      }
    }
    rows[a] = r;
  }

  // Scatter (serial, fixed order): continuity rows then arc rows.
  Eigen::VectorXd& H = out.residual;
  H.setZero(n + m);
  for (int a = 0; a < m; ++a) {
    const Arc& arc = net.arcs[a];
    H[arc.from] += q[a];
    H[arc.to] -= q[a];
    H[n + a] = rows[a].resid;
  }
  const int ref = net.reference_pressure_node;
  H[ref] = p[ref];

  if (out.J_y != nullptr) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(5 * m + 1);
    for (int a = 0; a < m; ++a) {
      const Arc& arc = net.arcs[a];
      if (arc.from != ref) t.emplace_back(arc.from, state_.q_at(a), 1.0);
      if (arc.to != ref) t.emplace_back(arc.to, state_.q_at(a), -1.0);
      const ArcHyd& r = rows[a];
      if (r.p_from != 0.0) t.emplace_back(n + a, state_.p_at(arc.from), r.p_from);
      if (r.p_to != 0.0) t.emplace_back(n + a, state_.p_at(arc.to), r.p_to);
      t.emplace_back(n + a, state_.q_at(a), r.dr_dq);
    }
    t.emplace_back(ref, state_.p_at(ref), 1.0);
    out.J_y->resize(n + m, n + m);
    out.J_y->setFromTriplets(t.begin(), t.end());
  }

  if (want_jphi) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(m);
    for (int a = 0; a < m; ++a)
      if (rows[a].phi_col >= 0 && rows[a].dr_dphi != 0.0)
        t.emplace_back(n + a, rows[a].phi_col, rows[a].dr_dphi);
    out.J_phi->resize(n + m, design_.dim());
    out.J_phi->setFromTriplets(t.begin(), t.end());
  }
}

void ModelAssembler::thermal(const DesignVector& phi, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& z, ThermalOut& out) const {
  const NetworkGraph& net = *net_;
  const int n = state_.n_nodes;
  const int m = state_.n_arcs;
  const int nc = state_.n_heating;
  const double q_eps = opts_.q_eps;
  const double rho_cp = net.scenario.fluid.rho * net.scenario.fluid.c_p;
  const auto q = y.tail(m);
  const auto theta_n = z.head(n);
  const auto theta_a = z.segment(n, m);
  const auto heat = z.tail(nc);

  std::vector<ArcTherm> rows(m);
  std::vector<RadiatorRow> rad(nc);
  const bool want_jphi = out.J_phi != nullptr;

#pragma omp parallel for schedule(static)
  for (int a = 0; a < m; ++a) {
    const Arc& arc = net.arcs[a];
    ArcTherm r;
    const double qa = q[a];
    const double s = smooth_abs(qa, q_eps);
    const double ds = qa / s;

    // Junction mixing: max/min(q, 0) smoothed to (q +- s)/2.
    r.win_f = 0.5 * (qa + s);
    r.wout_f = 0.5 * (qa - s);
    r.dwin_f = 0.5 * (1.0 + ds);
    r.dwout_f = 0.5 * (1.0 - ds);
    r.win_t = 0.5 * (-qa + s);
    r.wout_t = 0.5 * (-qa - s);
    r.dwin_t = 0.5 * (-1.0 + ds);
    r.dwout_t = 0.5 * (-1.0 - ds);

    // Upstream-node selector for the arc inlet temperature.
    const double lam = 0.5 * (1.0 + qa / s);
    const double dlam = 0.5 * q_eps * q_eps / (s * s * s);
    const double th_from = theta_n[arc.from];
    const double th_to = theta_n[arc.to];
    const double th_in = lam * th_from + (1.0 - lam) * th_to;
    const double th_exit = theta_a[a];

    switch (arc.kind) {
      case ArcKind::internal: {
        const double d = std::max(phi.diameters[arc.diameter_group], opts_.d_min);
        const double Rt = thermal_resistance(d, net.scenario.pipe);
        const HeatRetentionEval he =
            heat_retention_eval(qa, arc.length, Rt, net.scenario.fluid, q_eps);
        r.resid = th_exit - he.f * th_in;
        r.d_theta_a = 1.0;
        r.d_theta_from = -he.f * lam;
        r.d_theta_to = -he.f * (1.0 - lam);
        r.dr_dq = -he.df_dq * th_in - he.f * dlam * (th_from - th_to);
        if (want_jphi) {
          r.phi_col = design_.d_at(arc.diameter_group);
          const bool active = phi.diameters[arc.diameter_group] > opts_.d_min;
          r.dr_dphi =
              active ? -he.df_dRt * thermal_resistance_deriv(d, net.scenario.pipe) * th_in : 0.0;
        }
        break;
      }
      case ArcKind::consumer_heating: {
        const int k = net.consumer_of_arc[a];
        // Heating-system energy balance rho c_p q (theta_in - theta_exit) = Q.
        r.resid = rho_cp * qa * (th_in - th_exit) - heat[k];
        r.d_theta_from = rho_cp * qa * lam;
        r.d_theta_to = rho_cp * qa * (1.0 - lam);
        r.d_theta_a = -rho_cp * qa;
        r.d_heat = -1.0;
        r.dr_dq = rho_cp * (th_in - th_exit) + rho_cp * qa * dlam * (th_from - th_to);

        // Radiator characteristic Q = xi Theta^n.
        const ConsumerSpec& c = net.consumers[k];
        const MeanTempEval mt =
            radiator_mean_temp(th_in, th_exit, c.theta_house, opts_.radiator);
        const double pw = c.xi * c.n * std::pow(mt.value, c.n - 1.0);
        RadiatorRow rr;
        rr.resid = heat[k] - c.xi * std::pow(mt.value, c.n);
        rr.d_theta_from = -pw * mt.d_in * lam;
        rr.d_theta_to = -pw * mt.d_in * (1.0 - lam);
        rr.d_theta_a = -pw * mt.d_out;
        rr.dr_dq = -pw * mt.d_in * dlam * (th_from - th_to);
        rad[k] = rr;
        break;
      }
      case ArcKind::consumer_bypass: {
        r.resid = th_exit - th_in;
        r.d_theta_a = 1.0;
        r.d_theta_from = -lam;
        r.d_theta_to = -(1.0 - lam);
        r.dr_dq = -dlam * (th_from - th_to);
        break;
      }
      case ArcKind::producer: {
        const int pk = net.producer_of_arc[a];
        r.resid = th_exit - net.producers[pk].theta_b;
        r.d_theta_a = 1.0;
        break;
      }
    }
    rows[a] = r;
  }

  Eigen::VectorXd& E = out.residual;
  E.setZero(n + m + nc);
  for (int a = 0; a < m; ++a) {
    const Arc& arc = net.arcs[a];
    const ArcTherm& r = rows[a];
    E[arc.from] += r.win_f * theta_n[arc.from] + r.wout_f * theta_a[a];
    E[arc.to] += r.win_t * theta_n[arc.to] + r.wout_t * theta_a[a];
    E[n + a] = r.resid;
  }
  for (int k = 0; k < nc; ++k) E[n + m + k] = rad[k].resid;

  if (out.J_z != nullptr) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(8 * m + 5 * nc);
    for (int a = 0; a < m; ++a) {
      const Arc& arc = net.arcs[a];
      const ArcTherm& r = rows[a];
      t.emplace_back(arc.from, state_.theta_n_at(arc.from), r.win_f);
      t.emplace_back(arc.from, state_.theta_a_at(a), r.wout_f);
      t.emplace_back(arc.to, state_.theta_n_at(arc.to), r.win_t);
      t.emplace_back(arc.to, state_.theta_a_at(a), r.wout_t);
      if (r.d_theta_from != 0.0) t.emplace_back(n + a, state_.theta_n_at(arc.from), r.d_theta_from);
      if (r.d_theta_to != 0.0) t.emplace_back(n + a, state_.theta_n_at(arc.to), r.d_theta_to);
      if (r.d_theta_a != 0.0) t.emplace_back(n + a, state_.theta_a_at(a), r.d_theta_a);
      if (arc.kind == ArcKind::consumer_heating)
        t.emplace_back(n + a, state_.heat_at(net.consumer_of_arc[a]), rows[a].d_heat);
    }
    for (int k = 0; k < nc; ++k) {
      const Arc& arc = net.arcs[net.heating_arcs[k]];
      const RadiatorRow& rr = rad[k];
      const int row = n + m + k;
      if (rr.d_theta_from != 0.0) t.emplace_back(row, state_.theta_n_at(arc.from), rr.d_theta_from);
      if (rr.d_theta_to != 0.0) t.emplace_back(row, state_.theta_n_at(arc.to), rr.d_theta_to);
      if (rr.d_theta_a != 0.0) t.emplace_back(row, state_.theta_a_at(net.heating_arcs[k]), rr.d_theta_a);
      t.emplace_back(row, state_.heat_at(k), rr.d_heat);
    }
    out.J_z->resize(n + m + nc, n + m + nc);
    out.J_z->setFromTriplets(t.begin(), t.end());
  }

  if (out.J_y != nullptr) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(3 * m + nc);
    for (int a = 0; a < m; ++a) {
      const Arc& arc = net.arcs[a];
      const ArcTherm& r = rows[a];
      const double djf = r.dwin_f * theta_n[arc.from] + r.dwout_f * theta_a[a];
      const double djt = r.dwin_t * theta_n[arc.to] + r.dwout_t * theta_a[a];
      if (djf != 0.0) t.emplace_back(arc.from, state_.q_at(a), djf);
      if (djt != 0.0) t.emplace_back(arc.to, state_.q_at(a), djt);
      if (r.dr_dq != 0.0) t.emplace_back(n + a, state_.q_at(a), r.dr_dq);
    }
    for (int k = 0; k < nc; ++k)
      if (rad[k].dr_dq != 0.0)
        t.emplace_back(n + m + k, state_.q_at(net.heating_arcs[k]), rad[k].dr_dq);
    out.J_y->resize(n + m + nc, n + m);
    out.J_y->setFromTriplets(t.begin(), t.end());
  }

  if (want_jphi) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(m);
    for (int a = 0; a < m; ++a)
      if (rows[a].phi_col >= 0 && rows[a].dr_dphi != 0.0)
        t.emplace_back(n + a, rows[a].phi_col, rows[a].dr_dphi);
    out.J_phi->resize(n + m + nc, design_.dim());
    out.J_phi->setFromTriplets(t.begin(), t.end());
  }
}

bool ModelAssembler::infeasible_radiator(const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                                         std::string* detail) const {
  const NetworkGraph& net = *net_;
  const int n = state_.n_nodes;
  for (int k = 0; k < net.n_consumers(); ++k) {
    const Arc& arc = net.arcs[net.heating_arcs[k]];
    const double qa = y[state_.q_at(arc.id)];
    const double lam = 0.5 * (1.0 + qa / smooth_abs(qa, opts_.q_eps));
    const double th_in = lam * z[arc.from] + (1.0 - lam) * z[arc.to];
    const double th_out = z[n + arc.id];
    const double th_house = net.consumers[k].theta_house;
    const bool bad = opts_.radiator == RadiatorModel::lmtd
                         ? (th_out <= th_house || th_in <= th_house)
                         : 0.5 * (th_in + th_out) <= th_house;
    if (bad) {
      if (detail)
        *detail = "consumer " + std::to_string(k) + " operates below room temperature";
      return true;
    }
  }
  return false;
}

EnergyBalance energy_balance(const NetworkGraph& net, const ModelAssembler& model,
                             const DesignVector& /*phi*/, const StateVector& state) {
  const StateLayout& lay = model.state_layout();
  const double rho_cp = net.scenario.fluid.rho * net.scenario.fluid.c_p;
  const double q_eps = model.options().q_eps;
  EnergyBalance bal;
  for (ArcId a : net.producer_arcs) {
    const Arc& arc = net.arcs[a];
    const double qa = state.y[lay.q_at(a)];
    const double lam = 0.5 * (1.0 + qa / smooth_abs(qa, q_eps));
    const double th_in = lam * state.z[arc.from] + (1.0 - lam) * state.z[arc.to];
    bal.producer_in += rho_cp * qa * (state.z[lay.theta_a_at(a)] - th_in);
  }
  for (int k = 0; k < net.n_consumers(); ++k) bal.consumer_out += state.z[lay.heat_at(k)];
  for (ArcId a : net.internal_arcs) {
    const Arc& arc = net.arcs[a];
    const double qa = state.y[lay.q_at(a)];
    const double s = smooth_abs(qa, q_eps);
    const double lam = 0.5 * (1.0 + qa / s);
    const double th_in = lam * state.z[arc.from] + (1.0 - lam) * state.z[arc.to];
    bal.pipe_loss += rho_cp * s * (th_in - state.z[lay.theta_a_at(a)]);
  }
  return bal;
}

}  // namespace dhn
