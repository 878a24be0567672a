#include <doctest.h>

#include <random>

#include "dhn/gridgen.hpp"
#include "dhn/network.hpp"
#include "test_support.hpp"

using namespace dhn;

TEST_SUITE("network") {

TEST_CASE("minimal two-node network parses and validates") {
  const char* text = R"({
    "nodes": [{"id": 0, "kind": "producer", "position": [0, 0]},
              {"id": 1, "kind": "producer", "position": [10, 0]}],
    "arcs": [{"id": 0, "from": 0, "to": 1, "kind": "producer"},
             {"id": 1, "from": 1, "to": 0, "kind": "internal", "length": 25.0}],
    "consumers": [],
    "producers": [{"arc": 0, "theta_b": 73.0, "q_b_max": 0.005}],
    "reference_pressure_node": 0
  })";
  const NetworkGraph net = parse_network(text);
  CHECK(net.n_nodes() == 2);
  CHECK(net.n_arcs() == 2);
  CHECK(net.internal_arcs.size() == 1);
  CHECK(net.arcs[1].diameter_group == 0);
}

TEST_CASE("dangling arc is rejected") {
  const char* text = R"({
    "nodes": [{"id": 0, "kind": "producer"}, {"id": 1, "kind": "producer"}],
    "arcs": [{"id": 0, "from": 0, "to": 1, "kind": "producer"},
             {"id": 1, "from": 1, "to": 7, "kind": "internal", "length": 25.0}],
    "consumers": [],
    "producers": [{"arc": 0, "theta_b": 73.0, "q_b_max": 0.005}],
    "reference_pressure_node": 0
  })";
  CHECK_THROWS_WITH_AS(parse_network(text), doctest::Contains("dangling arc"), NetworkError);
}

TEST_CASE("schema violations are reported") {
  CHECK_THROWS_AS(parse_network("{not json"), NetworkError);
  CHECK_THROWS_WITH_AS(parse_network(R"({"nodes": []})"), doctest::Contains("missing field"),
                       NetworkError);
  const char* wrong_type = R"({
    "nodes": [{"id": "zero", "kind": "producer"}],
    "arcs": [], "consumers": [], "producers": [], "reference_pressure_node": 0
  })";
  CHECK_THROWS_AS(parse_network(wrong_type), NetworkError);
}

TEST_CASE("160-consumer fixture has the advertised shape") {
  GridSpec spec;
  spec.rows = 14;
  spec.cols = 12;
  spec.n_dwelling = 52;
  spec.n_renovated = 98;
  spec.n_commercial = 10;
  spec.n_producers = 2;
  spec.seed = 5;
  const NetworkGraph net = generate_grid(spec);
  CHECK(net.heating_arcs.size() == 160);
  double demand = 0.0;
  for (const ConsumerSpec& c : net.consumers) demand += c.Q_d;
  CHECK(demand == doctest::Approx(1.77e6));
  CHECK(DesignLayout::of(net).dim() == 632);

  GridSpec alt;  // the all-sites variant of the same consumer mix
  alt.rows = 10;
  alt.cols = 16;
  alt.n_dwelling = 52;
  alt.n_renovated = 98;
  alt.n_commercial = 10;
  alt.seed = 7;
  CHECK(generate_grid(alt).heating_arcs.size() == 160);
}

TEST_CASE("a pure dwelling mix gives every consumer the 15 kW demand") {
  GridSpec spec;
  spec.rows = 2;
  spec.cols = 2;
  spec.n_dwelling = 3;
  spec.n_renovated = 0;
  spec.n_commercial = 0;
  spec.n_producers = 1;
  spec.seed = 1;
  const NetworkGraph net = generate_grid(spec);
  REQUIRE(net.n_consumers() == 3);
  for (const ConsumerSpec& c : net.consumers) {
    CHECK(c.Q_d == 15e3);
    CHECK(c.n == 1.2);
  }
  // deterministic under the seed
  const NetworkGraph again = generate_grid(spec);
  CHECK(serialize_network(again) == serialize_network(net));
}

TEST_CASE("incidence of a single arc is [+1, -1]") {
  const NetworkGraph net = testing::two_node_network(false);
  const Eigen::SparseMatrix<double> A = incidence(net, ArcFilter::producer);
  REQUIRE(A.cols() == 1);
  CHECK(A.coeff(0, 0) == 1.0);
  CHECK(A.coeff(1, 0) == -1.0);
}

TEST_CASE("incidence column sums vanish") {
  const NetworkGraph net = random_test_network(11);
  const Eigen::SparseMatrix<double> A = incidence(net, ArcFilter::all);
  const Eigen::VectorXd colsum = Eigen::VectorXd::Ones(A.rows()).transpose() * A;
  CHECK(colsum.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("incidence of a 3-node path matches the hand enumeration") {
  NetworkGraph net;
  net.nodes.push_back({0, NodeKind::producer, 0, 0});
  net.nodes.push_back({1, NodeKind::internal, 1, 0});
  net.nodes.push_back({2, NodeKind::producer, 2, 0});
  net.arcs.push_back({0, 0, 1, ArcKind::internal, 10.0, -1});
  net.arcs.push_back({1, 1, 2, ArcKind::internal, 10.0, -1});
  net.arcs.push_back({2, 2, 0, ArcKind::producer, 0.0, -1});
  ProducerSpec p;
  p.arc = 2;
  p.theta_b = 70.0;
  p.q_b_max = 1e-3;
  net.producers.push_back(p);
  net.reference_pressure_node = 2;
  net.finalize();
  const Eigen::SparseMatrix<double> A = incidence(net, ArcFilter::internal);
  REQUIRE(A.rows() == 3);
  REQUIRE(A.cols() == 2);
  CHECK(A.coeff(0, 0) == 1.0);
  CHECK(A.coeff(1, 0) == -1.0);
  CHECK(A.coeff(2, 0) == 0.0);
  CHECK(A.coeff(0, 1) == 0.0);
  CHECK(A.coeff(1, 1) == 1.0);
  CHECK(A.coeff(2, 1) == -1.0);
}

TEST_CASE("inflow/outflow matrices follow the sign of the flow") {
  const NetworkGraph net = testing::two_node_network(false);
  const Eigen::SparseMatrix<double> A = incidence(net);
  Eigen::VectorXd q(2);

  q << 1e-3, 1e-3;  // producer arc goes 0 -> 1
  auto [in_f, out_f] = inflow_outflow_matrices(A, q);
  CHECK(in_f.coeff(0, 0) == 1.0);
  CHECK(out_f.coeff(1, 0) == -1.0);
  CHECK(in_f.coeff(1, 0) == 0.0);

  q << -1e-3, 1e-3;  // reversal swaps the endpoint roles
  auto [in_r, out_r] = inflow_outflow_matrices(A, q);
  CHECK(in_r.coeff(1, 0) == 1.0);
  CHECK(out_r.coeff(0, 0) == -1.0);

  q << 0.0, 1e-3;  // sgn 0 = 0: the stagnant arc contributes to neither
  auto [in_z, out_z] = inflow_outflow_matrices(A, q);
  CHECK(in_z.col(0).norm() == 0.0);
  CHECK(out_z.col(0).norm() == 0.0);
}

TEST_CASE("property: A_in + A_out equals A diag(sgn q)") {
  std::mt19937 eng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const NetworkGraph net = random_test_network(100 + rep);
    const Eigen::SparseMatrix<double> A = incidence(net);
    Eigen::VectorXd q(A.cols());
    for (int i = 0; i < q.size(); ++i) {
      const double u = testing::unit(eng);
      q[i] = u < 0.15 ? 0.0 : (u < 0.5 ? -1.0 : 1.0) * testing::unit(eng) * 1e-2;
    }
    auto [in, out] = inflow_outflow_matrices(A, q);
    Eigen::VectorXd sgn(q.size());
    for (int i = 0; i < q.size(); ++i) sgn[i] = q[i] > 0 ? 1.0 : (q[i] < 0 ? -1.0 : 0.0);
    const Eigen::SparseMatrix<double> ref = A * sgn.asDiagonal();
    const Eigen::SparseMatrix<double> diff = in + out - ref;
    CHECK(Eigen::MatrixXd(diff).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("serialize/parse round-trip preserves the graph") {
  GridSpec spec;
  spec.rows = 3;
  spec.cols = 3;
  spec.n_dwelling = 3;
  spec.n_renovated = 1;
  spec.n_commercial = 1;
  spec.seed = 9;
  const NetworkGraph net = generate_grid(spec);
  const NetworkGraph back = parse_network(serialize_network(net));
  REQUIRE(back.n_nodes() == net.n_nodes());
  REQUIRE(back.n_arcs() == net.n_arcs());
  for (int i = 0; i < net.n_nodes(); ++i) {
    CHECK(back.nodes[i].kind == net.nodes[i].kind);
    CHECK(back.nodes[i].x == net.nodes[i].x);
    CHECK(back.nodes[i].y == net.nodes[i].y);
  }
  for (int a = 0; a < net.n_arcs(); ++a) {
    CHECK(back.arcs[a].from == net.arcs[a].from);
    CHECK(back.arcs[a].to == net.arcs[a].to);
    CHECK(back.arcs[a].kind == net.arcs[a].kind);
    CHECK(back.arcs[a].length == net.arcs[a].length);
    CHECK(back.arcs[a].diameter_group == net.arcs[a].diameter_group);
  }
  REQUIRE(back.consumers.size() == net.consumers.size());
  for (size_t k = 0; k < net.consumers.size(); ++k) {
    CHECK(back.consumers[k].arc == net.consumers[k].arc);
    CHECK(back.consumers[k].Q_d == net.consumers[k].Q_d);
    CHECK(back.consumers[k].xi == net.consumers[k].xi);
    CHECK(back.consumers[k].zeta == net.consumers[k].zeta);
  }
  CHECK(back.reference_pressure_node == net.reference_pressure_node);
  CHECK(back.scenario.T_inf == net.scenario.T_inf);
  CHECK(serialize_network(back) == serialize_network(net));
}

TEST_CASE("duplicate and unclaimed arcs are rejected") {
  NetworkGraph net = testing::two_node_network(true);
  ConsumerSpec dup = net.consumers[0];
  net.consumers.push_back(dup);
  CHECK_THROWS_WITH_AS(net.finalize(), doctest::Contains("claimed twice"), NetworkError);

  NetworkGraph net2 = testing::two_node_network(false);
  net2.arcs.push_back({2, 1, 0, ArcKind::consumer_heating, 0.0, -1});
  CHECK_THROWS_WITH_AS(net2.finalize(), doctest::Contains("no consumer/producer entry"),
                       NetworkError);
}

TEST_CASE("reference pressure node must sit on a producer return node") {
  NetworkGraph net = testing::two_node_network(false);
  net.reference_pressure_node = 1;  // feed side
  CHECK_THROWS_WITH_AS(net.finalize(), doctest::Contains("return-side node"), NetworkError);
}

}  // TEST_SUITE
