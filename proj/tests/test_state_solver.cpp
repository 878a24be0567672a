#include <doctest.h>

#include <chrono>
#include <cstring>
#include <fstream>
#include <random>

#include "dhn/reference_models.hpp"
#include "dhn/state_solver.hpp"
#include "test_support.hpp"

using namespace dhn;

namespace {

GridSpec grid160_spec() {
  GridSpec spec;
  spec.rows = 14;
  spec.cols = 12;
  spec.n_dwelling = 52;
  spec.n_renovated = 98;
  spec.n_commercial = 10;
  spec.n_producers = 2;
  spec.seed = 5;
  return spec;
}

// Largest fitted local convergence order over consecutive norm triples in
// the superlinear regime.
double fitted_order(const std::vector<double>& norms) {
  double best = 0.0;
  for (size_t k = 2; k < norms.size(); ++k) {
    const double r0 = norms[k - 2], r1 = norms[k - 1], r2 = norms[k];
    if (r0 > 1e-2 || r2 < 1e-15 || r1 >= r0 || r2 >= r1) continue;
    best = std::max(best, std::log(r2 / r1) / std::log(r1 / r0));
  }
  return best;
}

}  // namespace

TEST_SUITE("state_solver") {

TEST_CASE("single laminar pipe recovers the closed-form pressure drop") {
  const NetworkGraph net = testing::two_node_network(false);
  StateSolver solver(net);
  DesignVector phi = DesignVector::uniform(net, 0.05, 1.0, 1.0, 1.0);
  // pick an inflow in the laminar regime (Re ~ 120)
  phi.producer_flow[0] = 2.2e-6;
  StateVector state;
  const SolveReport rep = solver.solve_fresh(phi, state);
  REQUIRE(rep.converged);
  CHECK(rep.hydraulic.iterations <= 3);
  const StateLayout lay = solver.model().state_layout();
  const double q = state.y[lay.q_at(1)];
  CHECK(q == doctest::Approx(2.2e-6).epsilon(1e-10));
  const double g_hp = 3.14159265358979 * std::pow(0.05, 4) /
                      (128.0 * net.scenario.fluid.mu * net.arcs[1].length);
  const double dp = state.y[lay.p_at(1)] - state.y[lay.p_at(0)];
  CHECK(dp == doctest::Approx(q / g_hp).epsilon(0.01));
}

TEST_CASE("zero producer inflow gives zero flow and reference pressure everywhere") {
  const NetworkGraph net = testing::two_node_network(false);
  StateSolver solver(net);
  DesignVector phi = DesignVector::uniform(net, 0.1, 1.0, 1.0, 0.0);
  StateVector state;
  const SolveReport rep = solver.solve_fresh(phi, state);
  REQUIRE(rep.hydraulic.converged);
  const StateLayout lay = solver.model().state_layout();
  CHECK(state.y.tail(lay.n_arcs).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(state.y.head(lay.n_nodes).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(rep.hydraulic.iterations == 0);
}

TEST_CASE("randomized networks solve to tolerance, verified independently") {
  for (unsigned seed : {31u, 32u, 33u}) {
    const NetworkGraph net = random_test_network(seed);
    StateSolver solver(net);
    const DesignVector phi = DesignVector::uniform(net, 0.08, 0.9, 0.2, 0.8);
    StateVector state;
    const SolveReport rep = solver.solve_fresh(phi, state);
    REQUIRE(rep.converged);
    const ModelOptions opts = solver.model().options();
    const ResidualScales scales = ResidualScales::of(net, phi);
    const Eigen::VectorXd H = reference::hydraulic_residual(net, phi, state.y, opts);
    const Eigen::VectorXd E = reference::thermal_residual(net, phi, state.y, state.z, opts);
    CHECK(H.lpNorm<Eigen::Infinity>() <= 1e-7 * scales.p_scale);
    CHECK(E.lpNorm<Eigen::Infinity>() <= 1e-7 * scales.heat_scale);
  }
}

TEST_CASE("lossless single path advects the producer temperature unchanged") {
  NetworkGraph net = testing::two_node_network(true);
  net.scenario.pipe.lambda_ground = 1e-13;
  net.finalize();
  StateSolver solver(net);
  DesignVector phi = DesignVector::uniform(net, 0.1, 1.0, 0.0, 0.3);
  StateVector state;
  const SolveReport rep = solver.solve_fresh(phi, state);
  REQUIRE(rep.converged);
  const StateLayout lay = solver.model().state_layout();
  CHECK(state.z[lay.theta_n_at(1)] ==
        doctest::Approx(net.producers[0].theta_b).epsilon(1e-8));
}

TEST_CASE("two-producer junction mixes temperatures by flow weights") {
  // producers at different temperatures feed node M through lossless
  // pipes; M's temperature is the flow-weighted average.
  NetworkGraph net;
  net.nodes.push_back({0, NodeKind::producer, 0.0, 0.0});  // feed, producer 1
  net.nodes.push_back({1, NodeKind::producer, 2.0, 0.0});  // feed, producer 2
  net.nodes.push_back({2, NodeKind::internal, 1.0, 1.0});  // mixing node M
  net.nodes.push_back({3, NodeKind::consumer, 1.0, 2.0});
  net.nodes.push_back({4, NodeKind::consumer, 1.0, 3.0});
  net.nodes.push_back({5, NodeKind::producer, 0.0, 4.0});  // return, producer 1
  net.nodes.push_back({6, NodeKind::producer, 2.0, 4.0});  // return, producer 2
  int id = 0;
  auto pipe = [&](int a, int b) {
    net.arcs.push_back({id, a, b, ArcKind::internal, 30.0, -1});
    return id++;
  };
  pipe(0, 2);
  pipe(1, 2);
  pipe(2, 3);
  pipe(4, 5);
  pipe(4, 6);
  net.arcs.push_back({id, 3, 4, ArcKind::consumer_heating, 0.0, -1});
  const int heat_arc = id++;
  net.arcs.push_back({id, 5, 0, ArcKind::producer, 0.0, -1});
  const int parc1 = id++;
  net.arcs.push_back({id, 6, 1, ArcKind::producer, 0.0, -1});
  const int parc2 = id++;
  ConsumerSpec c = make_consumer_spec(commercial_type(), net.scenario.fluid, net.scenario.T_inf);
  c.arc = heat_arc;
  net.consumers.push_back(c);
  ProducerSpec p1{parc1, 65.0 + 8.0, 2e-3};
  ProducerSpec p2{parc2, 78.0, 2e-3};
  net.producers.push_back(p1);
  net.producers.push_back(p2);
  net.reference_pressure_node = 5;
  net.scenario.pipe.lambda_ground = 1e-13;  // lossless
  net.finalize();

  StateSolver solver(net);
  DesignVector phi = DesignVector::uniform(net, 0.12, 1.0, 0.0, 1.0);
  phi.producer_flow[0] = 1.1e-3;
  phi.producer_flow[1] = 0.6e-3;
  StateVector state;
  const SolveReport rep = solver.solve_fresh(phi, state);
  REQUIRE(rep.converged);
  const StateLayout lay = solver.model().state_layout();
  const double expected = (1.1e-3 * 73.0 + 0.6e-3 * 78.0) / 1.7e-3;
  CHECK(state.z[lay.theta_n_at(2)] == doctest::Approx(expected).epsilon(1e-7));
}

TEST_CASE("warm start from the solution converges without iterations") {
  const NetworkGraph net = random_test_network(8);
  StateSolver solver(net);
  const DesignVector phi = DesignVector::uniform(net, 0.1, 0.9, 0.2, 0.7);
  StateVector state;
  REQUIRE(solver.solve_fresh(phi, state).converged);
  StateVector again = state;
  const SolveReport rep = solver.solve(phi, again);
  REQUIRE(rep.converged);
  CHECK(rep.hydraulic.iterations == 0);
  CHECK(rep.thermal.iterations == 0);
}

TEST_CASE("newton exhibits superlinear local convergence") {
  const NetworkGraph net = generate_grid(grid160_spec());
  SolverOptions opts;
  opts.tol_h = 1e-10;
  opts.tol_t = 1e-10;
  StateSolver solver(net, {}, opts);
  const DesignVector phi = DesignVector::uniform(net, 0.15, 1.0, 1.0, 1.0);
  StateVector state;
  const SolveReport rep = solver.solve_fresh(phi, state);
  REQUIRE(rep.converged);
  CHECK(fitted_order(rep.hydraulic.residual_norms) >= 1.8);
}

TEST_CASE("monolithic and two-stage solves agree") {
  const NetworkGraph net = random_test_network(12);
  SolverOptions opts;
  opts.tol_h = 1e-13;
  opts.tol_t = 1e-13;
  StateSolver solver(net, {}, opts);
  const DesignVector phi = DesignVector::uniform(net, 0.09, 0.85, 0.25, 0.75);
  StateVector two_stage;
  REQUIRE(solver.solve_fresh(phi, two_stage).converged);
  StateVector mono = solver.initial_guess(phi);
  REQUIRE(solver.solve_monolithic(phi, mono).converged);
  const double y_scale = two_stage.y.lpNorm<Eigen::Infinity>();
  const double z_scale = two_stage.z.lpNorm<Eigen::Infinity>();
  CHECK((two_stage.y - mono.y).lpNorm<Eigen::Infinity>() <= 1e-10 * y_scale);
  CHECK((two_stage.z - mono.z).lpNorm<Eigen::Infinity>() <= 1e-10 * z_scale);
}

TEST_CASE("identical inputs produce bitwise-identical states and reports") {
  const NetworkGraph net = random_test_network(14);
  const DesignVector phi = DesignVector::uniform(net, 0.11, 0.95, 0.3, 0.6);
  StateVector s1, s2;
  SolveReport r1, r2;
  {
    StateSolver solver(net);
    r1 = solver.solve_fresh(phi, s1);
  }
  {
    StateSolver solver(net);
    r2 = solver.solve_fresh(phi, s2);
  }
  REQUIRE(r1.converged);
  REQUIRE(r2.converged);
  CHECK(std::memcmp(s1.y.data(), s2.y.data(), sizeof(double) * s1.y.size()) == 0);
  CHECK(std::memcmp(s1.z.data(), s2.z.data(), sizeof(double) * s1.z.size()) == 0);
  REQUIRE(r1.hydraulic.residual_norms.size() == r2.hydraulic.residual_norms.size());
  for (size_t i = 0; i < r1.hydraulic.residual_norms.size(); ++i)
    CHECK(r1.hydraulic.residual_norms[i] == r2.hydraulic.residual_norms[i]);
}

TEST_CASE("the 160-consumer grid solves well under a second") {
  const NetworkGraph net = generate_grid(grid160_spec());
  StateSolver solver(net);
  const DesignVector phi = DesignVector::uniform(net, 0.15, 1.0, 1.0, 1.0);
  StateVector state;
  const auto t0 = std::chrono::steady_clock::now();
  const SolveReport rep = solver.solve_fresh(phi, state);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(rep.converged);
  CHECK(wall < 1.0);
  // global energy balance closes at the solved state
  const EnergyBalance bal = energy_balance(net, solver.model(), phi, state);
  CHECK(std::abs(bal.defect()) <= 1e-6 * bal.producer_in);
}

TEST_CASE("starved radiators are reported as infeasible") {
  const NetworkGraph net = testing::two_node_network(true);
  StateSolver solver(net);
  DesignVector phi = DesignVector::uniform(net, 0.1, 1.0, 0.0, 1.0);
  phi.producer_flow[0] = 1e-7;  // far below the consumer design flow
  StateVector state;
  const SolveReport rep = solver.solve_fresh(phi, state);
  CHECK_FALSE(rep.converged);
  CHECK(rep.error.find("infeasible radiator") != std::string::npos);
}

TEST_CASE("non-convergence is reported with the iteration budget exhausted") {
  const NetworkGraph net = random_test_network(9);
  SolverOptions opts;
  opts.max_iter = 1;
  StateSolver solver(net, {}, opts);
  const DesignVector phi = DesignVector::uniform(net, 0.08, 0.8, 0.2, 0.9);
  StateVector state;
  const SolveReport rep = solver.solve_fresh(phi, state);
  CHECK_FALSE(rep.converged);
  CHECK(rep.error.find("did not converge") != std::string::npos);
}

TEST_CASE("solver trace CSV records both stages") {
  const NetworkGraph net = random_test_network(10);
  SolverOptions opts;
  opts.trace_path = "trace_test.csv";
  std::remove(opts.trace_path.c_str());
  StateSolver solver(net, {}, opts);
  const DesignVector phi = DesignVector::uniform(net, 0.1, 0.9, 0.2, 0.7);
  StateVector state;
  REQUIRE(solver.solve_fresh(phi, state).converged);
  std::ifstream in(opts.trace_path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "stage,iteration,residual_norm,damping");
  bool saw_hydraulic = false, saw_thermal = false;
  while (std::getline(in, line)) {
    if (line.rfind("hydraulic", 0) == 0) saw_hydraulic = true;
    if (line.rfind("thermal", 0) == 0) saw_thermal = true;
  }
  CHECK(saw_hydraulic);
  CHECK(saw_thermal);
  std::remove(opts.trace_path.c_str());
}

}  // TEST_SUITE
