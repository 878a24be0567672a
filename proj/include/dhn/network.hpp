// Superstructure graph for district heating networks: typed node/arc
// partitions, per-arc consumer/producer data, ambient scenario, incidence
// matrices, and (de)serialization of the network definition file.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

namespace dhn {

using NodeId = std::int32_t;
using ArcId = std::int32_t;

enum class NodeKind { producer, consumer, internal };
enum class ArcKind { internal, consumer_heating, consumer_bypass, producer };

const char* to_string(NodeKind k);
const char* to_string(ArcKind k);

struct NetworkError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Node {
  NodeId id = -1;
  NodeKind kind = NodeKind::internal;
  double x = 0.0;  // [m], plotting only; physics uses arc lengths
  double y = 0.0;
};

struct Arc {
  ArcId id = -1;
  NodeId from = -1;
  NodeId to = -1;
  ArcKind kind = ArcKind::internal;
  double length = 0.0;      // [m], internal arcs only
  int diameter_group = -1;  // internal arcs: shared-diameter design group
};

// Consumer substation characteristics (heating system + optional bypass).
struct ConsumerSpec {
  ArcId arc = -1;         // heating arc
  ArcId bypass_arc = -1;  // optional, -1 if the consumer has no bypass
  double Q_d = 0.0;       // desired heat [W]
  double xi = 0.0;        // radiator coefficient [W/K^n]
  double n = 1.0;         // radiator exponent [-]
  double zeta = 0.0;      // heating valve constant [Pa s^2/m^6]
  double theta_house = 0.0;  // indoor minus ambient temperature [K]
  double q_max_b = 0.0;      // maximal bypass flow [m^3/s]
  double dp_des_b = 0.0;     // bypass design pressure drop [Pa]
};

struct ProducerSpec {
  ArcId arc = -1;
  double theta_b = 0.0;    // supply temperature over ambient [K]
  double q_b_max = 0.0;    // maximal volumetric inflow [m^3/s]
};

struct FluidProperties {
  double rho = 983.2;    // [kg/m^3], water at 60 C
  double mu = 4.67e-4;   // [Pa s]
  double c_p = 4185.0;   // [J/(kg K)]
};

// Buried-pipe geometry and thermal parameters shared by all internal arcs.
struct PipeProperties {
  double roughness = 4.5e-5;       // absolute roughness eps [m]
  double casing_ratio = 2.0;       // outer casing / inner diameter r [-]
  double burial_depth = 1.0;       // h [m]
  double lambda_insulation = 0.025;  // [W/(m K)]
  double lambda_ground = 1.5;        // [W/(m K)]
  double Re_LT = 2720.0;           // laminar-turbulent transition
};

struct Scenario {
  double T_inf = -8.0;  // ambient temperature [degC]
  FluidProperties fluid;
  PipeProperties pipe;
};

class NetworkGraph {
 public:
  std::vector<Node> nodes;
  std::vector<Arc> arcs;
  std::vector<ConsumerSpec> consumers;
  std::vector<ProducerSpec> producers;
  NodeId reference_pressure_node = -1;
  Scenario scenario;

  // Derived index structure, built by finalize().
  std::vector<ArcId> internal_arcs;
  std::vector<ArcId> heating_arcs;   // ordered as `consumers`
  std::vector<ArcId> bypass_arcs;    // consumers with bypass, consumer order
  std::vector<ArcId> producer_arcs;  // ordered as `producers`
  std::vector<int> consumer_of_arc;  // arc -> consumer index or -1
  std::vector<int> producer_of_arc;  // arc -> producer index or -1
  std::vector<int> bypass_index_of_arc;  // arc -> bypass slot or -1
  int n_diameter_groups = 0;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_arcs() const { return static_cast<int>(arcs.size()); }
  int n_consumers() const { return static_cast<int>(consumers.size()); }
  int n_producers() const { return static_cast<int>(producers.size()); }
  int n_bypass() const { return static_cast<int>(bypass_arcs.size()); }

  // Validates invariants and rebuilds the derived index structure.
  // Throws NetworkError on any violation.
  void finalize();
};

enum class ArcFilter { all, internal, consumer, consumer_heating, consumer_bypass, producer };

// Arcs selected by a filter, in ascending arc-id order.
std::vector<ArcId> select_arcs(const NetworkGraph& net, ArcFilter filter);

// Node-arc incidence matrix restricted to the selected arc columns:
// +1 at the start node, -1 at the end node of each arc.
Eigen::SparseMatrix<double> incidence(const NetworkGraph& net, ArcFilter filter = ArcFilter::all);

// Arc inflow/outflow matrices A_in = max(A diag(sgn q), 0) and
// A_out = min(A diag(sgn q), 0), with sgn(0) = 0.
std::pair<Eigen::SparseMatrix<double>, Eigen::SparseMatrix<double>>
inflow_outflow_matrices(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& q);

NetworkGraph load_network(const std::string& path);
NetworkGraph parse_network(const std::string& json_text);
std::string serialize_network(const NetworkGraph& net);
void save_network(const NetworkGraph& net, const std::string& path);

}  // namespace dhn
