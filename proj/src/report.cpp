#include "dhn/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dhn {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ReportError("cannot write '" + path + "'");
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_state_csv(const NetworkGraph& net, const ModelAssembler& model,
                     const DesignVector& projected, const StateVector& state,
                     const std::string& nodes_path, const std::string& arcs_path) {
  const StateLayout& lay = model.state_layout();
  {
    std::ofstream out = open_out(nodes_path);
    out << "id,kind,x,y,p_pa,theta_k,T_degC\n";
    for (const Node& n : net.nodes) {
      const double theta = state.z[lay.theta_n_at(n.id)];
      out << n.id << "," << to_string(n.kind) << "," << n.x << "," << n.y << ","
          << state.y[lay.p_at(n.id)] << "," << theta << "," << theta + net.scenario.T_inf
          << "\n";
    }
  }
  std::ofstream out = open_out(arcs_path);
  out << "id,kind,from,to,length_m,diameter_m,q_m3s,theta_exit_k,Q_w\n";
  for (const Arc& a : net.arcs) {
    double d = 0.0;
    if (a.kind == ArcKind::internal) d = projected.diameters[a.diameter_group];
    double heat = 0.0;
    if (a.kind == ArcKind::consumer_heating)
      heat = state.z[lay.heat_at(net.consumer_of_arc[a.id])];
    out << a.id << "," << to_string(a.kind) << "," << a.from << "," << a.to << "," << a.length
        << "," << d << "," << state.y[lay.q_at(a.id)] << "," << state.z[lay.theta_a_at(a.id)]
        << "," << heat << "\n";
  }
}

void write_energy_balance(const NetworkGraph& net, const ModelAssembler& model,
                          const DesignVector& projected, const StateVector& state,
                          const std::string& path) {
  const EnergyBalance bal = energy_balance(net, model, projected, state);
  std::ofstream out = open_out(path);
  out << "quantity,watts\n";
  out << "producer_heat_in," << bal.producer_in << "\n";
  out << "consumer_heat_out," << bal.consumer_out << "\n";
  out << "pipe_losses," << bal.pipe_loss << "\n";
  out << "balance_defect," << bal.defect() << "\n";
}

void write_convergence_csv(const std::vector<IterateLog>& history, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "stage,iteration,objective,pump,piping,h_ks,merit,step_norm,adjoint_solves,wall_s\n";
  for (const IterateLog& l : history)
    out << l.stage << "," << l.iteration << "," << l.objective << "," << l.pump << ","
        << l.piping << "," << l.h_ks << "," << l.merit << "," << l.step_norm << ","
        << l.adjoint_solves << "," << l.wall_s << "\n";
}

void write_geojson(const NetworkGraph& net, const DesignVector& projected,
                   const PipeCatalog& cat, const std::string& path) {
  json features = json::array();
  for (const Arc& a : net.arcs) {
    const Node& nf = net.nodes[a.from];
    const Node& nt = net.nodes[a.to];
    json props{{"arc", a.id}, {"kind", to_string(a.kind)}};
    json geometry;
    if (a.kind == ArcKind::internal) {
      const double d = projected.diameters[a.diameter_group];
      const int snap = cat.snap_index(d);
      const bool removed = snap == 0;
      props["diameter_group"] = a.diameter_group;
      props["diameter_m"] = d;
      props["snapped_diameter_m"] = cat.diameters[snap];
      props["length_m"] = a.length;
      props["removed"] = removed;
      props["stroke"] = removed ? "#999999" : "#d62728";
      geometry = {{"type", "LineString"},
                  {"coordinates", {{nf.x, nf.y}, {nt.x, nt.y}}}};
    } else {
      geometry = {{"type", "Point"}, {"coordinates", {nf.x, nf.y}}};
    }
    features.push_back({{"type", "Feature"}, {"geometry", geometry}, {"properties", props}});
  }
  json root{{"type", "FeatureCollection"}, {"features", features}};
  open_out(path) << root.dump(2) << "\n";
}

void write_diameter_histogram(const NetworkGraph& net, const DesignVector& projected,
                              const PipeCatalog& cat, const std::string& path) {
  std::vector<double> length(cat.size(), 0.0);
  std::vector<int> count(cat.size(), 0);
  for (ArcId a : net.internal_arcs) {
    const Arc& arc = net.arcs[a];
    const int snap = cat.snap_index(projected.diameters[arc.diameter_group]);
    length[snap] += arc.length;
    ++count[snap];
  }
  std::ofstream out = open_out(path);
  out << "diameter_m,cost_per_m,total_arc_length_m,n_arcs\n";
  for (int i = 0; i < cat.size(); ++i)
    out << cat.diameters[i] << "," << cat.costs[i] << "," << length[i] << "," << count[i]
        << "\n";
}

void save_design(const DesignVector& phi, const std::string& path) {
  json j;
  j["diameters"] = std::vector<double>(phi.diameters.data(),
                                       phi.diameters.data() + phi.diameters.size());
  j["alpha"] = std::vector<double>(phi.alpha.data(), phi.alpha.data() + phi.alpha.size());
  j["beta"] = std::vector<double>(phi.beta.data(), phi.beta.data() + phi.beta.size());
  j["producer_flow"] = std::vector<double>(phi.producer_flow.data(),
                                           phi.producer_flow.data() + phi.producer_flow.size());
  open_out(path) << j.dump(2) << "\n";
}

void save_design_report(const NetworkGraph& net, const DesignVector& raw,
                        const DesignVector& projected, const PipeCatalog& cat,
                        const std::string& path) {
  json j;
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  j["raw"] = {{"diameters", vec(raw.diameters)},
              {"alpha", vec(raw.alpha)},
              {"beta", vec(raw.beta)},
              {"producer_flow", vec(raw.producer_flow)}};
  std::vector<double> snapped;
  std::vector<bool> removed;
  for (int k = 0; k < projected.diameters.size(); ++k) {
    const int s = cat.snap_index(projected.diameters[k]);
    snapped.push_back(cat.diameters[s]);
    removed.push_back(s == 0);
  }
  j["projected_diameters"] = vec(projected.diameters);
  j["snapped_diameters"] = snapped;
  j["removed"] = removed;
  j["n_diameter_groups"] = net.n_diameter_groups;
  open_out(path) << j.dump(2) << "\n";
}

DesignVector load_design(const NetworkGraph& net, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ReportError("cannot open design file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ReportError(std::string("design file is not valid JSON: ") + e.what());
  }
  auto fetch = [&](const char* key, int expected) {
    const auto v = j.at(key).get<std::vector<double>>();
    if (static_cast<int>(v.size()) != expected)
      throw ReportError(std::string("design field '") + key + "' has size " +
                        std::to_string(v.size()) + ", expected " + std::to_string(expected));
    return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()).eval();
  };
  DesignVector phi;
  phi.diameters = fetch("diameters", net.n_diameter_groups);
  phi.alpha = fetch("alpha", net.n_consumers());
  phi.beta = fetch("beta", net.n_bypass());
  phi.producer_flow = fetch("producer_flow", net.n_producers());
  return phi;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void write_manifest(const std::string& path, const std::string& config_json, std::uint64_t seed,
                    const std::vector<std::string>& input_files) {
  json j;
  j["tool"] = tool_version();
  j["seed"] = seed;
  try {
    j["config"] = json::parse(config_json);
  } catch (const json::exception&) {
    j["config"] = config_json;
  }
  j["config_hash"] = fnv1a64(config_json);
  json inputs = json::array();
  for (const std::string& f : input_files) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    inputs.push_back({{"path", f}, {"fnv1a64", fnv1a64(ss.str())}});
  }
  j["inputs"] = inputs;
  open_out(path) << j.dump(2) << "\n";
}

}  // namespace dhn
