#include "dhn/state_solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>

namespace dhn {

namespace {

constexpr double kNominalDeltaT = 20.0;  // [K] initialization spread

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

int arc_priority(ArcKind k) {
  switch (k) {
    case ArcKind::internal: return 0;
    case ArcKind::consumer_heating: return 1;
    case ArcKind::consumer_bypass: return 2;
    case ArcKind::producer: return 3;
  }
  return 4;
}

double scaled_inf_norm(const Eigen::VectorXd& r, const Eigen::VectorXd& scale) {
  double nrm = 0.0;
  for (int i = 0; i < r.size(); ++i) {
    const double v = std::abs(r[i]) / scale[i];
    if (std::isnan(v)) return std::numeric_limits<double>::quiet_NaN();
    nrm = std::max(nrm, v);
  }
  return nrm;
}

// Maps a residual row to its equation block, for singular-matrix reports.
std::string row_block_name(const NetworkGraph& net, int row, bool hydraulic) {
  const int n = net.n_nodes();
  const int m = net.n_arcs();
  if (row < n) return hydraulic ? "node continuity" : "junction energy balance";
  if (row < n + m) {
    switch (net.arcs[row - n].kind) {
      case ArcKind::internal: return hydraulic ? "pipe momentum" : "pipe heat loss";
      case ArcKind::consumer_heating:
        return hydraulic ? "heating valve momentum" : "heating energy balance";
      case ArcKind::consumer_bypass: return hydraulic ? "bypass flow" : "bypass temperature";
      case ArcKind::producer: return hydraulic ? "producer flow" : "producer temperature";
    }
  }
  return "radiator characteristic";
}

}  // namespace

ResidualScales ResidualScales::of(const NetworkGraph& net, const DesignVector& phi) {
  ResidualScales s;
  const double rho_cp = net.scenario.fluid.rho * net.scenario.fluid.c_p;
  double q_scale = 0.0;
  for (int k = 0; k < net.n_producers(); ++k)
    q_scale = std::max(q_scale, std::abs(phi.producer_flow[k]));
  double heat_scale = 0.0, dp = 0.0, theta = 0.0;
  for (const ConsumerSpec& c : net.consumers) {
    q_scale = std::max(q_scale, c.Q_d / (rho_cp * kNominalDeltaT));
    heat_scale = std::max(heat_scale, c.Q_d);
    if (c.bypass_arc >= 0) dp = std::max(dp, c.dp_des_b);
  }
  for (const ProducerSpec& p : net.producers) theta = std::max(theta, p.theta_b);
  s.q_scale = std::max(q_scale, 1e-9);
  s.p_scale = std::max(dp, 1e5);
  s.theta_scale = std::max(theta, 50.0);
  s.heat_scale = std::max(heat_scale, rho_cp * s.q_scale * s.theta_scale * 1e-2);
  return s;
}

namespace {

Eigen::VectorXd hydraulic_row_scales(const NetworkGraph& net, const ResidualScales& s) {
  const int n = net.n_nodes();
  const int m = net.n_arcs();
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n + m, s.q_scale);
  w[net.reference_pressure_node] = s.p_scale;
  for (const Arc& a : net.arcs) {
    if (a.kind == ArcKind::internal || a.kind == ArcKind::consumer_heating)
      w[n + a.id] = s.p_scale;
  }
  return w;
}

Eigen::VectorXd thermal_row_scales(const NetworkGraph& net, const ResidualScales& s) {
  const int n = net.n_nodes();
  const int m = net.n_arcs();
  const int nc = net.n_consumers();
  Eigen::VectorXd w(n + m + nc);
  w.head(n).setConstant(s.q_scale * s.theta_scale);
  w.segment(n, m).setConstant(s.theta_scale);
  for (ArcId a : net.heating_arcs) w[n + a] = s.heat_scale;
  w.tail(nc).setConstant(s.heat_scale);
  return w;
}

}  // namespace

StateSolver::StateSolver(const NetworkGraph& net, ModelOptions model, SolverOptions options)
    : net_(&net), assembler_(net, model), options_(std::move(options)) {}

StateVector StateSolver::initial_guess(const DesignVector& phi) const {
  const NetworkGraph& net = *net_;
  const StateLayout& lay = assembler_.state_layout();
  StateVector state = StateVector::zero(lay);
  const int n = lay.n_nodes;
  const int m = lay.n_arcs;

  // Consumer draws proportional to demand, scaled to the imposed inflow.
  const double total_inflow = phi.producer_flow.sum();
  double total_demand = 0.0;
  for (const ConsumerSpec& c : net.consumers) total_demand += c.Q_d;
  Eigen::VectorXd draw = Eigen::VectorXd::Zero(net.n_consumers());
  for (int k = 0; k < net.n_consumers(); ++k)
    draw[k] = total_demand > 0.0 ? net.consumers[k].Q_d / total_demand * total_inflow
                                 : total_inflow / std::max(net.n_consumers(), 1);

  // Spanning tree (internal arcs preferred); chord arcs keep an assigned
  // flow, tree flows then satisfy continuity exactly by leaf elimination.
  std::vector<ArcId> order(net.arcs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](ArcId a, ArcId b) {
    return arc_priority(net.arcs[a].kind) < arc_priority(net.arcs[b].kind);
  });
  UnionFind uf(n);
  std::vector<char> in_tree(m, 0);
  for (ArcId a : order)
    if (uf.unite(net.arcs[a].from, net.arcs[a].to)) in_tree[a] = 1;

  Eigen::VectorXd q = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd imbalance = Eigen::VectorXd::Zero(n);
  for (const Arc& a : net.arcs) {
    if (in_tree[a.id]) continue;
    double flow = 0.0;
    if (a.kind == ArcKind::producer) flow = phi.producer_flow[net.producer_of_arc[a.id]];
    if (a.kind == ArcKind::consumer_heating) flow = draw[net.consumer_of_arc[a.id]];
    q[a.id] = flow;
    imbalance[a.from] += flow;
    imbalance[a.to] -= flow;
  }

  // BFS tree structure from node 0, then eliminate leaves upward.
  std::vector<std::vector<std::pair<ArcId, double>>> tree_adj(n);
  for (const Arc& a : net.arcs)
    if (in_tree[a.id]) {
      tree_adj[a.from].push_back({a.id, 1.0});
      tree_adj[a.to].push_back({a.id, -1.0});
    }
  std::vector<int> bfs_order;
  std::vector<ArcId> parent_arc(n, -1);
  std::vector<double> parent_sign(n, 0.0);
  std::vector<char> seen(n, 0);
  std::queue<int> fifo;
  fifo.push(0);
  seen[0] = 1;
  while (!fifo.empty()) {
    const int v = fifo.front();
    fifo.pop();
    bfs_order.push_back(v);
    for (auto [a, sign] : tree_adj[v]) {
      const Arc& arc = net.arcs[a];
      const int w = arc.from == v ? arc.to : arc.from;
      if (seen[w]) continue;
      seen[w] = 1;
      parent_arc[w] = a;
      parent_sign[w] = -sign;  // sign of the arc as seen from w
      fifo.push(w);
    }
  }
  for (auto it = bfs_order.rbegin(); it != bfs_order.rend(); ++it) {
    const int v = *it;
    if (parent_arc[v] < 0) continue;
    const double flow = -parent_sign[v] * imbalance[v];
    q[parent_arc[v]] = flow;
    const Arc& arc = net.arcs[parent_arc[v]];
    const int par = arc.from == v ? arc.to : arc.from;
    imbalance[par] += parent_sign[v] * flow * -1.0;
  }

  state.y.tail(m) = q;  // pressures start at the reference level (zero)

  // Feed/return classification through the internal sub-network.
  double theta_sup = 50.0;
  for (const ProducerSpec& p : net.producers) theta_sup = std::max(theta_sup, p.theta_b);
  std::vector<std::vector<int>> internal_adj(n);
  for (ArcId a : net.internal_arcs) {
    internal_adj[net.arcs[a].from].push_back(net.arcs[a].to);
    internal_adj[net.arcs[a].to].push_back(net.arcs[a].from);
  }
  auto bfs_mark = [&](const std::vector<int>& seeds) {
    std::vector<char> mark(n, 0);
    std::queue<int> qq;
    for (int v : seeds) {
      if (!mark[v]) qq.push(v);
      mark[v] = 1;
    }
    while (!qq.empty()) {
      int v = qq.front();
      qq.pop();
      for (int w : internal_adj[v])
        if (!mark[w]) {
          mark[w] = 1;
          qq.push(w);
        }
    }
    return mark;
  };
  std::vector<int> feed_seeds, return_seeds;
  for (ArcId a : net.producer_arcs) {
    feed_seeds.push_back(net.arcs[a].to);
    return_seeds.push_back(net.arcs[a].from);
  }
  const std::vector<char> feed = bfs_mark(feed_seeds);
  const std::vector<char> ret = bfs_mark(return_seeds);
  for (int v = 0; v < n; ++v) {
    double th = theta_sup - 0.5 * kNominalDeltaT;
    if (feed[v] && !ret[v]) th = theta_sup;
    if (ret[v] && !feed[v]) th = theta_sup - kNominalDeltaT;
    state.z[lay.theta_n_at(v)] = th;
  }
  for (const Arc& a : net.arcs) {
    double th = state.z[lay.theta_n_at(a.from)];
    if (a.kind == ArcKind::producer) th = net.producers[net.producer_of_arc[a.id]].theta_b;
    if (a.kind == ArcKind::consumer_heating) th = theta_sup - kNominalDeltaT;
    state.z[lay.theta_a_at(a.id)] = th;
  }
  for (int k = 0; k < net.n_consumers(); ++k)
    state.z[lay.heat_at(k)] = net.consumers[k].Q_d;
  return state;
}

namespace {

struct TraceWriter {
  std::ofstream out;
  explicit TraceWriter(const std::string& path) {
    if (path.empty()) return;
    const bool fresh = !std::ifstream(path).good();
    out.open(path, std::ios::app);
    if (fresh && out) out << "stage,iteration,residual_norm,damping\n";
  }
  void line(const char* stage, int iter, double norm, double damping) {
    if (out) out << stage << "," << iter << "," << norm << "," << damping << "\n";
  }
};

}  // namespace

SolveReport StateSolver::solve_hydraulic(const DesignVector& phi, StateVector& state) {
  SolveReport report;
  StageReport& st = report.hydraulic;
  const ResidualScales scales = ResidualScales::of(*net_, phi);
  const Eigen::VectorXd row_scale = hydraulic_row_scales(*net_, scales);
  TraceWriter trace(options_.trace_path);

  Eigen::VectorXd y = state.y;
  HydraulicsOut eval;
  SpMat J;
  eval.J_y = nullptr;

  HydraulicsOut probe;  // residual-only evaluations for the line search
  Eigen::SparseLU<SpMat> lu;

  for (int iter = 0; iter <= options_.max_iter; ++iter) {
    eval.J_y = &J;
    assembler_.hydraulics(phi, y, eval);
    const double norm = scaled_inf_norm(eval.residual, row_scale);
    st.residual_norms.push_back(norm);
    trace.line("hydraulic", iter, norm, iter == 0 ? 0.0 : st.step_damping.back());
    if (std::isnan(norm)) {
      st.error = "hydraulic residual is NaN";
      break;
    }
    if (norm <= options_.tol_h) {
      st.converged = true;
      double best = norm;
      for (int polish = 0; polish < options_.polish_iterations; ++polish) {
        lu.compute(J);
        ++n_factorizations_;
        if (lu.info() != Eigen::Success) break;
        const Eigen::VectorXd dy = lu.solve(-eval.residual);
        probe.J_y = nullptr;
        probe.J_phi = nullptr;
        assembler_.hydraulics(phi, y + dy, probe);
        const double nn = scaled_inf_norm(probe.residual, row_scale);
        if (std::isnan(nn) || nn >= best) break;
        y += dy;
        best = nn;
        eval.J_y = &J;
        assembler_.hydraulics(phi, y, eval);
        st.residual_norms.push_back(nn);
      }
      break;
    }
    if (iter == options_.max_iter) {
      st.error = "hydraulic Newton did not converge";
      break;
    }

    lu.compute(J);
    ++n_factorizations_;
    if (lu.info() != Eigen::Success) {
      int bad_row = -1;
      Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(J.rows());
      for (int c = 0; c < J.outerSize(); ++c)
        for (SpMat::InnerIterator it(J, c); it; ++it) rowsum[it.row()] += std::abs(it.value());
      rowsum.minCoeff(&bad_row);
      st.error = "singular hydraulic Jacobian near block: " +
                 row_block_name(*net_, bad_row, true);
      break;
    }
    const Eigen::VectorXd dy = lu.solve(-eval.residual);

    double t = 1.0;
    double new_norm = std::numeric_limits<double>::infinity();
    while (t >= options_.damping_min) {
      probe.J_y = nullptr;
      probe.J_phi = nullptr;
      assembler_.hydraulics(phi, y + t * dy, probe);
      new_norm = scaled_inf_norm(probe.residual, row_scale);
      if (!std::isnan(new_norm) && new_norm <= (1.0 - options_.armijo_c * t) * norm) break;
      t *= 0.5;
    }
    if (t < options_.damping_min) {
      st.error = "hydraulic line search stalled";
      break;
    }
    y += t * dy;
    st.step_damping.push_back(t);
    ++st.iterations;
  }

  if (st.converged) state.y = y;
  report.converged = st.converged;
  report.error = st.error;
  return report;
}

SolveReport StateSolver::solve_thermal(const DesignVector& phi, StateVector& state) {
  SolveReport report;
  StageReport& st = report.thermal;
  const ResidualScales scales = ResidualScales::of(*net_, phi);
  const Eigen::VectorXd row_scale = thermal_row_scales(*net_, scales);
  TraceWriter trace(options_.trace_path);

  Eigen::VectorXd z = state.z;
  ThermalOut eval;
  SpMat J;
  ThermalOut probe;
  Eigen::SparseLU<SpMat> lu;

  for (int iter = 0; iter <= options_.max_iter; ++iter) {
    eval.J_z = &J;
    assembler_.thermal(phi, state.y, z, eval);
    const double norm = scaled_inf_norm(eval.residual, row_scale);
    st.residual_norms.push_back(norm);
    trace.line("thermal", iter, norm, iter == 0 ? 0.0 : st.step_damping.back());
    if (std::isnan(norm)) {
      st.error = "thermal residual is NaN";
      break;
    }
    if (norm <= options_.tol_t) {
      st.converged = true;
      double best = norm;
      for (int polish = 0; polish < options_.polish_iterations; ++polish) {
        lu.compute(J);
        ++n_factorizations_;
        if (lu.info() != Eigen::Success) break;
        const Eigen::VectorXd dz = lu.solve(-eval.residual);
        probe.J_z = nullptr;
        assembler_.thermal(phi, state.y, z + dz, probe);
        const double nn = scaled_inf_norm(probe.residual, row_scale);
        if (std::isnan(nn) || nn >= best) break;
        z += dz;
        best = nn;
        eval.J_z = &J;
        assembler_.thermal(phi, state.y, z, eval);
        st.residual_norms.push_back(nn);
      }
      break;
    }
    if (iter == options_.max_iter) {
      st.error = "thermal Newton did not converge";
      break;
    }

    lu.compute(J);
    ++n_factorizations_;
    if (lu.info() != Eigen::Success) {
      int bad_row = -1;
      Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(J.rows());
      for (int c = 0; c < J.outerSize(); ++c)
        for (SpMat::InnerIterator it(J, c); it; ++it) rowsum[it.row()] += std::abs(it.value());
      rowsum.minCoeff(&bad_row);
      st.error = "singular thermal Jacobian near block: " + row_block_name(*net_, bad_row, false);
      break;
    }
    const Eigen::VectorXd dz = lu.solve(-eval.residual);

    double t = 1.0;
    while (t >= options_.damping_min) {
      probe.J_z = nullptr;
      assembler_.thermal(phi, state.y, z + t * dz, probe);
      const double new_norm = scaled_inf_norm(probe.residual, row_scale);
      if (!std::isnan(new_norm) && new_norm <= (1.0 - options_.armijo_c * t) * norm) break;
      t *= 0.5;
    }
    if (t < options_.damping_min) {
      st.error = "thermal line search stalled";
      break;
    }
    z += t * dz;
    st.step_damping.push_back(t);
    ++st.iterations;
  }

  if (st.converged) {
    state.z = z;
    std::string detail;
    if (assembler_.infeasible_radiator(state.y, state.z, &detail)) {
      st.converged = false;
      st.error = "infeasible radiator operating point: " + detail;
    }
  }
  report.converged = st.converged;
  report.error = st.error;
  return report;
}

SolveReport StateSolver::solve(const DesignVector& phi, StateVector& state) {
  lin_.valid = false;
  SolveReport report = solve_hydraulic(phi, state);
  if (!report.converged) {
    report.error = "hydraulic stage: " + report.hydraulic.error;
    return report;
  }
  SolveReport thermal = solve_thermal(phi, state);
  report.thermal = thermal.thermal;
  report.converged = thermal.converged;
  if (!report.converged) {
    report.error = "thermal stage: " + report.thermal.error;
    return report;
  }
  build_linearization(phi, state);
  return report;
}

SolveReport StateSolver::solve_fresh(const DesignVector& phi, StateVector& state) {
  state = initial_guess(phi);
  return solve(phi, state);
}

SolveReport StateSolver::solve_monolithic(const DesignVector& phi, StateVector& state) {
  SolveReport report;
  StageReport& st = report.hydraulic;  // combined history recorded here
  const StateLayout& lay = assembler_.state_layout();
  const ResidualScales scales = ResidualScales::of(*net_, phi);
  const Eigen::VectorXd wh = hydraulic_row_scales(*net_, scales);
  const Eigen::VectorXd wt = thermal_row_scales(*net_, scales);
  const int ny = lay.y_dim();
  const int nz = lay.z_dim();
  Eigen::VectorXd row_scale(ny + nz);
  row_scale << wh, wt;

  Eigen::VectorXd w(ny + nz);
  w << state.y, state.z;

  HydraulicsOut hyd;
  ThermalOut th;
  SpMat JHy, JEz, JEy;
  Eigen::SparseLU<SpMat> lu;
  const double tol = std::min(options_.tol_h, options_.tol_t);

  auto residual_at = [&](const Eigen::VectorXd& wv, bool with_jac) {
    hyd.J_y = with_jac ? &JHy : nullptr;
    th.J_z = with_jac ? &JEz : nullptr;
    th.J_y = with_jac ? &JEy : nullptr;
    assembler_.hydraulics(phi, wv.head(ny), hyd);
    assembler_.thermal(phi, wv.head(ny), wv.tail(nz), th);
    Eigen::VectorXd r(ny + nz);
    r << hyd.residual, th.residual;
    return r;
  };

  for (int iter = 0; iter <= options_.max_iter; ++iter) {
    const Eigen::VectorXd r = residual_at(w, true);
    const double norm = scaled_inf_norm(r, row_scale);
    st.residual_norms.push_back(norm);
    if (std::isnan(norm)) {
      st.error = "monolithic residual is NaN";
      break;
    }
    if (norm <= tol) {
      st.converged = true;
      break;
    }
    if (iter == options_.max_iter) {
      st.error = "monolithic Newton did not converge";
      break;
    }

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(JHy.nonZeros() + JEz.nonZeros() + JEy.nonZeros());
    for (int c = 0; c < JHy.outerSize(); ++c)
      for (SpMat::InnerIterator it(JHy, c); it; ++it)
        trips.emplace_back(it.row(), it.col(), it.value());
    for (int c = 0; c < JEy.outerSize(); ++c)
      for (SpMat::InnerIterator it(JEy, c); it; ++it)
        trips.emplace_back(ny + it.row(), it.col(), it.value());
    for (int c = 0; c < JEz.outerSize(); ++c)
      for (SpMat::InnerIterator it(JEz, c); it; ++it)
        trips.emplace_back(ny + it.row(), ny + it.col(), it.value());
    SpMat Jfull(ny + nz, ny + nz);
    Jfull.setFromTriplets(trips.begin(), trips.end());

    lu.compute(Jfull);
    ++n_factorizations_;
    if (lu.info() != Eigen::Success) {
      st.error = "singular monolithic Jacobian";
      break;
    }
    const Eigen::VectorXd dw = lu.solve(-r);

    double t = 1.0;
    while (t >= options_.damping_min) {
      const Eigen::VectorXd rn = residual_at(w + t * dw, false);
      const double nn = scaled_inf_norm(rn, row_scale);
      if (!std::isnan(nn) && nn <= (1.0 - options_.armijo_c * t) * norm) break;
      t *= 0.5;
    }
    if (t < options_.damping_min) {
      st.error = "monolithic line search stalled";
      break;
    }
    w += t * dw;
    st.step_damping.push_back(t);
    ++st.iterations;
  }

  report.converged = st.converged;
  report.error = st.error;
  if (st.converged) {
    state.y = w.head(ny);
    state.z = w.tail(nz);
  }
  return report;
}

void StateSolver::build_linearization(const DesignVector& phi, const StateVector& state) {
  HydraulicsOut hyd;
  hyd.J_y = &lin_.JH_y;
  hyd.J_phi = &lin_.JH_phi;
  assembler_.hydraulics(phi, state.y, hyd);

  ThermalOut th;
  th.J_z = &lin_.JE_z;
  th.J_y = &lin_.JE_y;
  th.J_phi = &lin_.JE_phi;
  assembler_.thermal(phi, state.y, state.z, th);

  lin_.lu_h = std::make_unique<Eigen::SparseLU<SpMat>>();
  lin_.lu_h->compute(lin_.JH_y);
  lin_.lu_t = std::make_unique<Eigen::SparseLU<SpMat>>();
  lin_.lu_t->compute(lin_.JE_z);
  n_factorizations_ += 2;
  lin_.valid =
      lin_.lu_h->info() == Eigen::Success && lin_.lu_t->info() == Eigen::Success;
}

}  // namespace dhn
