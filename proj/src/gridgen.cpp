#include "dhn/gridgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dhn {

namespace {

// Bounded draw and Fisher-Yates shuffle on top of the (standardized)
// mt19937 sequence, so fixtures are identical across platforms.
std::uint32_t draw(std::mt19937& eng, std::uint32_t n) { return eng() % n; }

template <typename T>
void shuffle_vec(std::vector<T>& v, std::mt19937& eng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw(eng, i)]);
}

double log_mean_value(double x, double y) {
  if (std::abs(x - y) < 1e-9 * std::max(x, y)) return 0.5 * (x + y);
  return (x - y) / std::log(x / y);
}

}  // namespace

ConsumerType dwelling_type() { return {"dwelling", 15e3, 55.0, 20.0, 1.2, 50e3}; }
ConsumerType renovated_dwelling_type() {
  return {"renovated_dwelling", 5e3, 55.0, 20.0, 1.42, 50e3};
}
ConsumerType commercial_type() { return {"commercial", 50e3, 55.0, 20.0, 1.2, 50e3}; }

ConsumerSpec make_consumer_spec(const ConsumerType& type, const FluidProperties& fluid,
                                double T_inf, double T_room) {
  ConsumerSpec c;
  c.Q_d = type.Q_d;
  c.n = type.n;
  c.theta_house = T_room - T_inf;
  const double T_out = type.T_in_design - type.dT_design;
  const double lm = log_mean_value(type.T_in_design - T_room, T_out - T_room);
  c.xi = type.Q_d / std::pow(lm, type.n);
  const double q_design = type.Q_d / (fluid.rho * fluid.c_p * type.dT_design);
  c.zeta = type.dp_design / (q_design * q_design);
  c.q_max_b = 0.1 * q_design;
  c.dp_des_b = type.dp_design;
  return c;
}

NetworkGraph generate_grid(const GridSpec& spec) {
  if (spec.rows < 2 || spec.cols < 2) throw NetworkError("grid needs rows, cols >= 2");
  const int sites = spec.rows * spec.cols;
  const int n_consumers = spec.n_dwelling + spec.n_renovated + spec.n_commercial;
  if (n_consumers > sites) throw NetworkError("more consumers than grid sites");
  if (spec.n_producers < 1 || spec.n_producers > 4 || spec.n_producers > sites)
    throw NetworkError("supported producer counts: 1..4");

  NetworkGraph net;
  net.scenario.T_inf = spec.T_inf;
  const FluidProperties& fluid = net.scenario.fluid;

  auto feed_node = [&](int r, int c) { return r * spec.cols + c; };
  auto return_node = [&](int r, int c) { return sites + r * spec.cols + c; };

  for (int pass = 0; pass < 2; ++pass)
    for (int r = 0; r < spec.rows; ++r)
      for (int c = 0; c < spec.cols; ++c) {
        Node nd;
        nd.id = static_cast<NodeId>(net.nodes.size());
        nd.kind = NodeKind::internal;
        nd.x = c * spec.spacing;
        nd.y = r * spec.spacing;
        net.nodes.push_back(nd);
      }

  // Streets: horizontal then vertical, one shared diameter group per
  // street, feed and return arcs in opposite directions.
  int group = 0;
  auto add_street = [&](int rf, int cf, int rt, int ct) {
    Arc feed;
    feed.id = static_cast<ArcId>(net.arcs.size());
    feed.from = feed_node(rf, cf);
    feed.to = feed_node(rt, ct);
    feed.kind = ArcKind::internal;
    feed.length = spec.spacing;
    feed.diameter_group = group;
    net.arcs.push_back(feed);
    Arc ret;
    ret.id = static_cast<ArcId>(net.arcs.size());
    ret.from = return_node(rt, ct);
    ret.to = return_node(rf, cf);
    ret.kind = ArcKind::internal;
    ret.length = spec.spacing;
    ret.diameter_group = group;
    net.arcs.push_back(ret);
    ++group;
  };
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c + 1 < spec.cols; ++c) add_street(r, c, r, c + 1);
  for (int r = 0; r + 1 < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) add_street(r, c, r + 1, c);

  // Producer sites at the grid corners.
  const std::vector<std::pair<int, int>> corners = {{0, 0},
                                                    {spec.rows - 1, spec.cols - 1},
                                                    {0, spec.cols - 1},
                                                    {spec.rows - 1, 0}};
  std::vector<int> producer_sites;
  for (int k = 0; k < spec.n_producers; ++k) {
    const auto [r, c] = corners[k];
    producer_sites.push_back(r * spec.cols + c);
  }

  // Consumer sites: seeded sample over the remaining junctions.
  std::mt19937 eng(spec.seed);
  std::vector<int> candidates;
  for (int s = 0; s < sites; ++s)
    if (std::find(producer_sites.begin(), producer_sites.end(), s) == producer_sites.end())
      candidates.push_back(s);
  shuffle_vec(candidates, eng);
  for (int s : producer_sites) candidates.push_back(s);  // co-locate only if needed
  std::vector<ConsumerType> types;
  for (int i = 0; i < spec.n_dwelling; ++i) types.push_back(dwelling_type());
  for (int i = 0; i < spec.n_renovated; ++i) types.push_back(renovated_dwelling_type());
  for (int i = 0; i < spec.n_commercial; ++i) types.push_back(commercial_type());
  shuffle_vec(types, eng);

  for (int k = 0; k < n_consumers; ++k) {
    const int site = candidates[k];
    const int r = site / spec.cols;
    const int c = site % spec.cols;
    ConsumerSpec cs = make_consumer_spec(types[k], fluid, spec.T_inf);
    Arc heat;
    heat.id = static_cast<ArcId>(net.arcs.size());
    heat.from = feed_node(r, c);
    heat.to = return_node(r, c);
    heat.kind = ArcKind::consumer_heating;
    net.arcs.push_back(heat);
    Arc byp;
    byp.id = static_cast<ArcId>(net.arcs.size());
    byp.from = feed_node(r, c);
    byp.to = return_node(r, c);
    byp.kind = ArcKind::consumer_bypass;
    net.arcs.push_back(byp);
    cs.arc = heat.id;
    cs.bypass_arc = byp.id;
    net.consumers.push_back(cs);
    if (net.nodes[heat.from].kind == NodeKind::internal) {
      net.nodes[heat.from].kind = NodeKind::consumer;
      net.nodes[heat.to].kind = NodeKind::consumer;
    }
  }

  for (int k = 0; k < spec.n_producers; ++k) {
    const int site = producer_sites[k];
    const int r = site / spec.cols;
    const int c = site % spec.cols;
    const double T_b = spec.producer_T_b[k % spec.producer_T_b.size()];
    Arc arc;
    arc.id = static_cast<ArcId>(net.arcs.size());
    arc.from = return_node(r, c);
    arc.to = feed_node(r, c);
    arc.kind = ArcKind::producer;
    net.arcs.push_back(arc);
    ProducerSpec p;
    p.arc = arc.id;
    p.theta_b = T_b - spec.T_inf;
    p.q_b_max = spec.producer_Q_max /
                (fluid.rho * fluid.c_p * std::max(T_b - spec.T_out_design, 1.0));
    net.producers.push_back(p);
    net.nodes[arc.from].kind = NodeKind::producer;
    net.nodes[arc.to].kind = NodeKind::producer;
  }

  net.reference_pressure_node = net.arcs[net.producers[0].arc].from;
  net.finalize();
  return net;
}

NetworkGraph random_test_network(std::uint32_t seed) {
  std::mt19937 eng(seed);
  GridSpec spec;
  spec.rows = 2;
  spec.cols = 3;
  spec.n_dwelling = 2;
  spec.n_renovated = 1;
  spec.n_commercial = 1;
  spec.n_producers = 2;
  spec.seed = seed;

  // 2x3 grid: 7 streets = 14 internal arcs; tree needs only 5 streets, so
  // drop two (seeded) while keeping the graph connected. 5 streets + 4
  // consumers + 2 producers give exactly 20 arcs.
  NetworkGraph full = generate_grid(spec);
  std::vector<int> groups(full.n_diameter_groups);
  for (size_t i = 0; i < groups.size(); ++i) groups[i] = static_cast<int>(i);
  shuffle_vec(groups, eng);

  for (int attempt = 0; attempt < static_cast<int>(groups.size()); ++attempt) {
    std::vector<char> drop_group(full.n_diameter_groups, 0);
    drop_group[groups[attempt % groups.size()]] = 1;
    drop_group[groups[(attempt + 1) % groups.size()]] = 1;

    NetworkGraph net;
    net.scenario = full.scenario;
    net.nodes = full.nodes;
    net.reference_pressure_node = full.reference_pressure_node;
    std::vector<ArcId> remap(full.n_arcs(), -1);
    for (const Arc& a : full.arcs) {
      if (a.kind == ArcKind::internal && drop_group[a.diameter_group]) continue;
      Arc copy = a;
      copy.id = static_cast<ArcId>(net.arcs.size());
      if (a.kind == ArcKind::internal)
        copy.length = 30.0 + draw(eng, 51);  // randomized street lengths [30, 80] m
      remap[a.id] = copy.id;
      net.arcs.push_back(copy);
    }
    // The feed sub-network must stay connected, else consumers decouple
    // from the producers and the fixture is ill-posed.
    {
      const int sites = spec.rows * spec.cols;
      std::vector<std::vector<int>> adj(sites);
      for (const Arc& a : net.arcs)
        if (a.kind == ArcKind::internal && a.from < sites && a.to < sites) {
          adj[a.from].push_back(a.to);
          adj[a.to].push_back(a.from);
        }
      std::vector<char> seen(sites, 0);
      std::vector<int> stack = {0};
      seen[0] = 1;
      int count = 1;
      while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w : adj[v])
          if (!seen[w]) {
            seen[w] = 1;
            ++count;
            stack.push_back(w);
          }
      }
      if (count != sites) continue;
    }
    // Compact the surviving diameter groups.
    std::vector<int> group_map(full.n_diameter_groups, -1);
    int next = 0;
    for (Arc& a : net.arcs) {
      if (a.kind != ArcKind::internal) continue;
      if (group_map[a.diameter_group] < 0) group_map[a.diameter_group] = next++;
      a.diameter_group = group_map[a.diameter_group];
    }
    // Mirror lengths within each pair (feed first, return second).
    for (size_t i = 0; i + 1 < net.arcs.size(); ++i)
      if (net.arcs[i].kind == ArcKind::internal && net.arcs[i + 1].kind == ArcKind::internal &&
          net.arcs[i].diameter_group == net.arcs[i + 1].diameter_group)
        net.arcs[i + 1].length = net.arcs[i].length;
    for (const ConsumerSpec& c : full.consumers) {
      ConsumerSpec cc = c;
      cc.arc = remap[c.arc];
      cc.bypass_arc = c.bypass_arc >= 0 ? remap[c.bypass_arc] : -1;
      net.consumers.push_back(cc);
    }
    for (const ProducerSpec& p : full.producers) {
      ProducerSpec pp = p;
      pp.arc = remap[p.arc];
      net.producers.push_back(pp);
    }
    try {
      net.finalize();
      return net;  // connected: done
    } catch (const NetworkError&) {
      continue;  // dropped streets disconnected the grid; try another pair
    }
  }
  throw NetworkError("random_test_network: could not build a connected fixture");
}

}  // namespace dhn
