#include "dhn/network.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dhn {

using nlohmann::json;

const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::producer: return "producer";
    case NodeKind::consumer: return "consumer";
    case NodeKind::internal: return "internal";
  }
  return "?";
}

const char* to_string(ArcKind k) {
  switch (k) {
    case ArcKind::internal: return "internal";
    case ArcKind::consumer_heating: return "consumer_heating";
    case ArcKind::consumer_bypass: return "consumer_bypass";
    case ArcKind::producer: return "producer";
  }
  return "?";
}

namespace {

NodeKind node_kind_from(const std::string& s) {
  if (s == "producer") return NodeKind::producer;
  if (s == "consumer") return NodeKind::consumer;
  if (s == "internal") return NodeKind::internal;
  throw NetworkError("unknown node kind '" + s + "'");
}

ArcKind arc_kind_from(const std::string& s) {
  if (s == "internal") return ArcKind::internal;
  if (s == "consumer_heating") return ArcKind::consumer_heating;
  if (s == "consumer_bypass") return ArcKind::consumer_bypass;
  if (s == "producer") return ArcKind::producer;
  throw NetworkError("unknown arc kind '" + s + "'");
}

double require_positive(double v, const char* what) {
  if (!(v > 0.0)) throw NetworkError(std::string(what) + " must be > 0");
  return v;
}

}  // namespace

void NetworkGraph::finalize() {
  const int n = n_nodes();
  const int m = n_arcs();
  if (n == 0) throw NetworkError("network has no nodes");

  std::set<NodeId> node_ids;
  for (int i = 0; i < n; ++i) {
    if (nodes[i].id != i)
      throw NetworkError("node ids must be dense and 0-based (node " + std::to_string(i) + ")");
    if (!node_ids.insert(nodes[i].id).second)
      throw NetworkError("duplicate node id " + std::to_string(nodes[i].id));
  }

  internal_arcs.clear();
  heating_arcs.clear();
  bypass_arcs.clear();
  producer_arcs.clear();
  consumer_of_arc.assign(m, -1);
  producer_of_arc.assign(m, -1);
  bypass_index_of_arc.assign(m, -1);

  std::set<ArcId> arc_ids;
  for (int a = 0; a < m; ++a) {
    const Arc& arc = arcs[a];
    if (arc.id != a)
      throw NetworkError("arc ids must be dense and 0-based (arc " + std::to_string(a) + ")");
    if (!arc_ids.insert(arc.id).second)
      throw NetworkError("duplicate arc id " + std::to_string(arc.id));
    if (arc.from < 0 || arc.from >= n || arc.to < 0 || arc.to >= n)
      throw NetworkError("dangling arc " + std::to_string(arc.id));
    if (arc.from == arc.to)
      throw NetworkError("self-loop arc " + std::to_string(arc.id));
    if (arc.kind == ArcKind::internal) {
      if (!(arc.length > 0.0))
        throw NetworkError("internal arc " + std::to_string(arc.id) + " needs length > 0");
      internal_arcs.push_back(arc.id);
    } else if (arc.length != 0.0) {
      throw NetworkError("non-internal arc " + std::to_string(arc.id) + " must not carry a length");
    }
  }

  // Diameter design groups: explicit where given, else one group per arc.
  std::vector<int> group_map;
  for (ArcId a : internal_arcs) {
    int g = arcs[a].diameter_group;
    if (g < 0) continue;
    if (static_cast<size_t>(g) >= group_map.size()) group_map.resize(g + 1, -1);
    group_map[g] = 0;
  }
  for (size_t g = 0; g < group_map.size(); ++g)
    if (group_map[g] < 0)
      throw NetworkError("diameter groups must be dense; group " + std::to_string(g) + " unused");
  int next_group = static_cast<int>(group_map.size());
  for (ArcId a : internal_arcs)
    if (arcs[a].diameter_group < 0) arcs[a].diameter_group = next_group++;
  n_diameter_groups = next_group;

  // Consumers: heating arc mandatory, bypass optional per consumer.
  std::vector<char> claimed(m, 0);
  for (size_t k = 0; k < consumers.size(); ++k) {
    const ConsumerSpec& c = consumers[k];
    if (c.arc < 0 || c.arc >= m || arcs[c.arc].kind != ArcKind::consumer_heating)
      throw NetworkError("consumer " + std::to_string(k) + " must reference a consumer_heating arc");
    if (claimed[c.arc]++) throw NetworkError("heating arc claimed twice");
    heating_arcs.push_back(c.arc);
    consumer_of_arc[c.arc] = static_cast<int>(k);
    if (c.bypass_arc >= 0) {
      if (c.bypass_arc >= m || arcs[c.bypass_arc].kind != ArcKind::consumer_bypass)
        throw NetworkError("consumer " + std::to_string(k) + " bypass must be a consumer_bypass arc");
      if (claimed[c.bypass_arc]++) throw NetworkError("bypass arc claimed twice");
      bypass_index_of_arc[c.bypass_arc] = static_cast<int>(bypass_arcs.size());
      bypass_arcs.push_back(c.bypass_arc);
      consumer_of_arc[c.bypass_arc] = static_cast<int>(k);
      require_positive(c.q_max_b, "q_max_b");
      require_positive(c.dp_des_b, "dp_des_b");
    }
    require_positive(c.Q_d, "Q_d");
    require_positive(c.xi, "xi");
    require_positive(c.zeta, "zeta");
    if (!(c.n >= 1.0)) throw NetworkError("radiator exponent n must be >= 1");
  }

  for (size_t k = 0; k < producers.size(); ++k) {
    const ProducerSpec& p = producers[k];
    if (p.arc < 0 || p.arc >= m || arcs[p.arc].kind != ArcKind::producer)
      throw NetworkError("producer " + std::to_string(k) + " must reference a producer arc");
    if (claimed[p.arc]++) throw NetworkError("producer arc claimed twice");
    producer_arcs.push_back(p.arc);
    producer_of_arc[p.arc] = static_cast<int>(k);
    require_positive(p.theta_b, "theta_b");
    require_positive(p.q_b_max, "q_b_max");
  }

  for (int a = 0; a < m; ++a) {
    if (arcs[a].kind == ArcKind::internal) continue;
    if (!claimed[a])
      throw NetworkError("arc " + std::to_string(a) + " (" + to_string(arcs[a].kind) +
                         ") has no consumer/producer entry");
  }

  if (producers.empty()) throw NetworkError("network needs at least one producer");
  if (reference_pressure_node < 0 || reference_pressure_node >= n)
    throw NetworkError("reference_pressure_node out of range");
  bool ref_on_producer_return = false;
  for (ArcId a : producer_arcs)
    if (arcs[a].from == reference_pressure_node) ref_on_producer_return = true;
  if (!ref_on_producer_return)
    throw NetworkError("reference pressure node must be the return-side node of a producer arc");

  // Whole superstructure (feed + return, coupled over consumer/producer
  // arcs) must be a single component, else the pressure level decouples.
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> adj(n);
  for (const Arc& a : arcs) {
    adj[a.from].push_back(a.to);
    adj[a.to].push_back(a.from);
  }
  std::vector<int> stack = {0};
  comp[0] = 0;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int w : adj[v])
      if (comp[w] < 0) {
        comp[w] = 0;
        stack.push_back(w);
      }
  }
  for (int v = 0; v < n; ++v)
    if (comp[v] < 0) throw NetworkError("graph is disconnected (node " + std::to_string(v) + ")");

  const Scenario& sc = scenario;
  require_positive(sc.fluid.rho, "fluid.rho");
  require_positive(sc.fluid.mu, "fluid.mu");
  require_positive(sc.fluid.c_p, "fluid.c_p");
  require_positive(sc.pipe.roughness, "pipe.roughness");
  require_positive(sc.pipe.lambda_insulation, "pipe.lambda_insulation");
  require_positive(sc.pipe.lambda_ground, "pipe.lambda_ground");
  require_positive(sc.pipe.burial_depth, "pipe.burial_depth");
  require_positive(sc.pipe.Re_LT, "pipe.Re_LT");
  if (!(sc.pipe.casing_ratio > 1.0)) throw NetworkError("pipe.casing_ratio must be > 1");
}

std::vector<ArcId> select_arcs(const NetworkGraph& net, ArcFilter filter) {
  std::vector<ArcId> out;
  for (const Arc& a : net.arcs) {
    bool take = false;
    switch (filter) {
      case ArcFilter::all: take = true; break;
      case ArcFilter::internal: take = a.kind == ArcKind::internal; break;
      case ArcFilter::consumer:
        take = a.kind == ArcKind::consumer_heating || a.kind == ArcKind::consumer_bypass;
        break;
      case ArcFilter::consumer_heating: take = a.kind == ArcKind::consumer_heating; break;
      case ArcFilter::consumer_bypass: take = a.kind == ArcKind::consumer_bypass; break;
      case ArcFilter::producer: take = a.kind == ArcKind::producer; break;
    }
    if (take) out.push_back(a.id);
  }
  return out;
}

Eigen::SparseMatrix<double> incidence(const NetworkGraph& net, ArcFilter filter) {
  const std::vector<ArcId> cols = select_arcs(net, filter);
  Eigen::SparseMatrix<double> A(net.n_nodes(), static_cast<int>(cols.size()));
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * cols.size());
  for (size_t j = 0; j < cols.size(); ++j) {
    const Arc& a = net.arcs[cols[j]];
    trips.emplace_back(a.from, static_cast<int>(j), 1.0);
    trips.emplace_back(a.to, static_cast<int>(j), -1.0);
  }
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

std::pair<Eigen::SparseMatrix<double>, Eigen::SparseMatrix<double>>
inflow_outflow_matrices(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& q) {
  if (q.size() != A.cols()) throw NetworkError("inflow_outflow_matrices: q size mismatch");
  Eigen::SparseMatrix<double> in(A.rows(), A.cols());
  Eigen::SparseMatrix<double> out(A.rows(), A.cols());
  std::vector<Eigen::Triplet<double>> ti, to;
  for (int j = 0; j < A.outerSize(); ++j) {
    const double s = q[j] > 0.0 ? 1.0 : (q[j] < 0.0 ? -1.0 : 0.0);
    if (s == 0.0) continue;
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, j); it; ++it) {
      const double v = it.value() * s;
      if (v > 0.0)
        ti.emplace_back(it.row(), j, v);
      else
        to.emplace_back(it.row(), j, v);
    }
  }
  in.setFromTriplets(ti.begin(), ti.end());
  out.setFromTriplets(to.begin(), to.end());
  return {in, out};
}

namespace {

json scenario_to_json(const Scenario& s) {
  return json{{"T_inf", s.T_inf},
              {"fluid", {{"rho", s.fluid.rho}, {"mu", s.fluid.mu}, {"c_p", s.fluid.c_p}}},
              {"pipe",
               {{"roughness", s.pipe.roughness},
                {"casing_ratio", s.pipe.casing_ratio},
                {"burial_depth", s.pipe.burial_depth},
                {"lambda_insulation", s.pipe.lambda_insulation},
                {"lambda_ground", s.pipe.lambda_ground},
                {"Re_LT", s.pipe.Re_LT}}}};
}

template <typename T>
T get_field(const json& j, const char* key) {
  if (!j.contains(key)) throw NetworkError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw NetworkError(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

NetworkGraph parse_network(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw NetworkError(std::string("network file is not valid JSON: ") + e.what());
  }

  NetworkGraph net;
  for (const json& jn : get_field<json>(j, "nodes")) {
    Node n;
    n.id = get_field<NodeId>(jn, "id");
    n.kind = node_kind_from(get_field<std::string>(jn, "kind"));
    if (jn.contains("position")) {
      auto pos = jn.at("position");
      n.x = pos.at(0).get<double>();
      n.y = pos.at(1).get<double>();
    }
    net.nodes.push_back(n);
  }
  for (const json& ja : get_field<json>(j, "arcs")) {
    Arc a;
    a.id = get_field<ArcId>(ja, "id");
    a.from = get_field<NodeId>(ja, "from");
    a.to = get_field<NodeId>(ja, "to");
    a.kind = arc_kind_from(get_field<std::string>(ja, "kind"));
    if (ja.contains("length")) a.length = ja.at("length").get<double>();
    if (ja.contains("diameter_group")) a.diameter_group = ja.at("diameter_group").get<int>();
    net.arcs.push_back(a);
  }
  for (const json& jc : get_field<json>(j, "consumers")) {
    ConsumerSpec c;
    c.arc = get_field<ArcId>(jc, "arc");
    if (jc.contains("bypass_arc")) c.bypass_arc = jc.at("bypass_arc").get<ArcId>();
    c.Q_d = get_field<double>(jc, "Q_d");
    c.xi = get_field<double>(jc, "xi");
    c.n = get_field<double>(jc, "n");
    c.zeta = get_field<double>(jc, "zeta");
    c.theta_house = get_field<double>(jc, "theta_house");
    if (jc.contains("q_max_b")) c.q_max_b = jc.at("q_max_b").get<double>();
    if (jc.contains("dp_des_b")) c.dp_des_b = jc.at("dp_des_b").get<double>();
    net.consumers.push_back(c);
  }
  for (const json& jp : get_field<json>(j, "producers")) {
    ProducerSpec p;
    p.arc = get_field<ArcId>(jp, "arc");
    p.theta_b = get_field<double>(jp, "theta_b");
    p.q_b_max = get_field<double>(jp, "q_b_max");
    net.producers.push_back(p);
  }
  net.reference_pressure_node = get_field<NodeId>(j, "reference_pressure_node");
  if (j.contains("scenario")) {
    const json& js = j.at("scenario");
    if (js.contains("T_inf")) net.scenario.T_inf = js.at("T_inf").get<double>();
    if (js.contains("fluid")) {
      const json& jf = js.at("fluid");
      if (jf.contains("rho")) net.scenario.fluid.rho = jf.at("rho").get<double>();
      if (jf.contains("mu")) net.scenario.fluid.mu = jf.at("mu").get<double>();
      if (jf.contains("c_p")) net.scenario.fluid.c_p = jf.at("c_p").get<double>();
    }
    if (js.contains("pipe")) {
      const json& jp = js.at("pipe");
      if (jp.contains("roughness")) net.scenario.pipe.roughness = jp.at("roughness").get<double>();
      if (jp.contains("casing_ratio"))
        net.scenario.pipe.casing_ratio = jp.at("casing_ratio").get<double>();
      if (jp.contains("burial_depth"))
        net.scenario.pipe.burial_depth = jp.at("burial_depth").get<double>();
      if (jp.contains("lambda_insulation"))
        net.scenario.pipe.lambda_insulation = jp.at("lambda_insulation").get<double>();
      if (jp.contains("lambda_ground"))
        net.scenario.pipe.lambda_ground = jp.at("lambda_ground").get<double>();
      if (jp.contains("Re_LT")) net.scenario.pipe.Re_LT = jp.at("Re_LT").get<double>();
    }
  }
  net.finalize();
  return net;
}

NetworkGraph load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NetworkError("cannot open network file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_network(ss.str());
}

std::string serialize_network(const NetworkGraph& net) {
  json j;
  j["nodes"] = json::array();
  for (const Node& n : net.nodes)
    j["nodes"].push_back(
        {{"id", n.id}, {"kind", to_string(n.kind)}, {"position", {n.x, n.y}}});
  j["arcs"] = json::array();
  for (const Arc& a : net.arcs) {
    json ja{{"id", a.id}, {"from", a.from}, {"to", a.to}, {"kind", to_string(a.kind)}};
    if (a.kind == ArcKind::internal) {
      ja["length"] = a.length;
      ja["diameter_group"] = a.diameter_group;
    }
    j["arcs"].push_back(ja);
  }
  j["consumers"] = json::array();
  for (const ConsumerSpec& c : net.consumers) {
    json jc{{"arc", c.arc},   {"Q_d", c.Q_d},
            {"xi", c.xi},     {"n", c.n},
            {"zeta", c.zeta}, {"theta_house", c.theta_house}};
    if (c.bypass_arc >= 0) {
      jc["bypass_arc"] = c.bypass_arc;
      jc["q_max_b"] = c.q_max_b;
      jc["dp_des_b"] = c.dp_des_b;
    }
    j["consumers"].push_back(jc);
  }
  j["producers"] = json::array();
  for (const ProducerSpec& p : net.producers)
    j["producers"].push_back({{"arc", p.arc}, {"theta_b", p.theta_b}, {"q_b_max", p.q_b_max}});
  j["reference_pressure_node"] = net.reference_pressure_node;
  j["scenario"] = scenario_to_json(net.scenario);
  return j.dump(2);
}

void save_network(const NetworkGraph& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw NetworkError("cannot write network file '" + path + "'");
  out << serialize_network(net) << "\n";
}

}  // namespace dhn
