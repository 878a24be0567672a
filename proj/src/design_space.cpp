#include "dhn/design_space.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dhn {

using nlohmann::json;

void PipeCatalog::validate() const {
  if (diameters.size() != costs.size() || diameters.size() < 2)
    throw DesignSpaceError("catalog needs matching diameter/cost arrays of size >= 2");
  if (diameters[0] != 0.0 || costs[0] != 0.0)
    throw DesignSpaceError("catalog must start with the 0 m / 0 eur entry");
  for (int i = 1; i < size(); ++i) {
    if (!(diameters[i] > diameters[i - 1]))
      throw DesignSpaceError("catalog diameters must be strictly ascending");
    if (costs[i] < costs[i - 1])
      throw DesignSpaceError("catalog costs must be nondecreasing");
  }
  if (!(overshoot_width > 0.0)) throw DesignSpaceError("overshoot width must be positive");
}

int PipeCatalog::snap_index(double d) const {
  int best = 0;
  double dist = std::abs(d - diameters[0]);
  for (int i = 1; i < size(); ++i) {
    const double di = std::abs(d - diameters[i]);
    if (di < dist) {
      dist = di;
      best = i;
    }
  }
  return best;
}

PipeCatalog PipeCatalog::standard() {
  PipeCatalog cat;
  cat.diameters.resize(8);
  cat.diameters << 0.0, 0.032, 0.065, 0.1, 0.15, 0.2, 0.3, 0.4;
  cat.costs.resize(8);
  cat.costs << 0.0, 2202.0, 2218.0, 2258.0, 2448.0, 2461.0, 2665.0, 2922.0;
  cat.overshoot_width = 0.1;
  cat.overshoot_cost = 10.0 * cat.costs[7];
  return cat;
}

PipeCatalog PipeCatalog::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DesignSpaceError("cannot open catalog file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DesignSpaceError(std::string("catalog file is not valid JSON: ") + e.what());
  }
  PipeCatalog cat;
  const auto d = j.at("diameters").get<std::vector<double>>();
  const auto c = j.at("costs").get<std::vector<double>>();
  cat.diameters = Eigen::Map<const Eigen::VectorXd>(d.data(), d.size());
  cat.costs = Eigen::Map<const Eigen::VectorXd>(c.data(), c.size());
  if (j.contains("overshoot_width")) cat.overshoot_width = j.at("overshoot_width").get<double>();
  cat.overshoot_cost = j.contains("overshoot_cost") ? j.at("overshoot_cost").get<double>()
                                                    : 10.0 * cat.costs[cat.size() - 1];
  cat.validate();
  return cat;
}

void PipeCatalog::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DesignSpaceError("cannot write catalog file '" + path + "'");
  json j;
  j["diameters"] = std::vector<double>(diameters.data(), diameters.data() + size());
  j["costs"] = std::vector<double>(costs.data(), costs.data() + size());
  j["overshoot_width"] = overshoot_width;
  j["overshoot_cost"] = overshoot_cost;
  out << j.dump(2) << "\n";
}

void ContinuationSchedule::validate() const {
  if (stages.empty()) throw DesignSpaceError("continuation schedule has no stages");
  for (size_t i = 0; i < stages.size(); ++i) {
    const Stage& s = stages[i];
    if (!(s.gamma > 0.0)) throw DesignSpaceError("gamma must be positive");
    if (s.chi < 0.0 || s.omega < 0.0) throw DesignSpaceError("chi/omega must be nonnegative");
    if (s.upsilon < 0.0 || s.upsilon > 1.0) throw DesignSpaceError("upsilon must be in [0, 1]");
    if (i > 0) {
      const Stage& p = stages[i - 1];
      if (s.gamma < p.gamma || s.chi < p.chi || s.upsilon < p.upsilon || s.omega < p.omega)
        throw DesignSpaceError("continuation sequences must be nondecreasing");
    }
  }
}

ContinuationSchedule ContinuationSchedule::defaults(int n_stages, double gamma_lo, double gamma_hi,
                                                    double chi_hi, double omega_hi) {
  ContinuationSchedule sched;
  for (int i = 0; i < n_stages; ++i) {
    const double t = n_stages > 1 ? static_cast<double>(i) / (n_stages - 1) : 0.0;
    Stage s;
    s.gamma = gamma_lo * std::pow(gamma_hi / gamma_lo, t);
    s.chi = t * chi_hi;
    s.upsilon = t;
    s.omega = t * omega_hi;
    sched.stages.push_back(s);
  }
  return sched;
}

ContinuationSchedule ContinuationSchedule::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DesignSpaceError("cannot open schedule file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DesignSpaceError(std::string("schedule file is not valid JSON: ") + e.what());
  }
  ContinuationSchedule sched;
  for (const json& js : j.at("stages")) {
    Stage s;
    s.gamma = js.at("gamma").get<double>();
    s.chi = js.at("chi").get<double>();
    s.upsilon = js.at("upsilon").get<double>();
    s.omega = js.at("omega").get<double>();
    sched.stages.push_back(s);
  }
  sched.validate();
  return sched;
}

void ContinuationSchedule::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DesignSpaceError("cannot write schedule file '" + path + "'");
  json j;
  j["stages"] = json::array();
  for (const Stage& s : stages)
    j["stages"].push_back(
        {{"gamma", s.gamma}, {"chi", s.chi}, {"upsilon", s.upsilon}, {"omega", s.omega}});
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

double project(double x, double eta, double chi) {
  if (chi == 0.0) return x;  // analytic limit of the tanh ratio
  const double den = std::tanh(chi * eta) + std::tanh(chi * (1.0 - eta));
  return (std::tanh(chi * eta) + std::tanh(chi * (x - eta))) / den;
}

double project_derivative(double x, double eta, double chi) {
  if (chi == 0.0) return 1.0;
  const double den = std::tanh(chi * eta) + std::tanh(chi * (1.0 - eta));
  const double t = std::tanh(chi * (x - eta));
  return chi * (1.0 - t) * (1.0 + t) / den;
}

namespace {

// Piece selection shared by projection and cost: returns the catalog index
// j with diameters[j] <= d < diameters[j+1], or size()-1 for the overshoot
// band above the largest diameter.
int piece_of(double d, const PipeCatalog& cat) {
  if (d < 0.0) throw DesignSpaceError("diameter must be nonnegative");
  if (d >= cat.d_max() + cat.overshoot_width)
    throw DesignSpaceError("diameter exceeds the catalog overshoot band");
  int j = 0;
  while (j + 1 < cat.size() && d >= cat.diameters[j + 1]) ++j;
  return j;
}

}  // namespace

double multi_project(double d, const PipeCatalog& cat, double chi) {
  const int j = piece_of(d, cat);
  if (j + 1 < cat.size()) {
    const double lo = cat.diameters[j];
    const double hi = cat.diameters[j + 1];
    return lo + (hi - lo) * project((d - lo) / (hi - lo), 0.5, chi);
  }
  const double dn = cat.d_max();
  return dn + cat.overshoot_width * project((d - dn) / cat.overshoot_width, 0.0, chi);
}

double multi_project_derivative(double d, const PipeCatalog& cat, double chi) {
  const int j = piece_of(d, cat);
  if (j + 1 < cat.size()) {
    const double lo = cat.diameters[j];
    const double hi = cat.diameters[j + 1];
    return project_derivative((d - lo) / (hi - lo), 0.5, chi);
  }
  const double dn = cat.d_max();
  return project_derivative((d - dn) / cat.overshoot_width, 0.0, chi);
}

CostEval pipe_cost(double d, const PipeCatalog& cat, double upsilon, double omega) {
  const int j = piece_of(d, cat);
  const int n = cat.size() - 1;
  const double d1 = cat.diameters[1];
  const double dn = cat.d_max();
  const double cn = cat.costs[n];

  const double lin = cn * (d - d1) / (dn - d1);
  const double dlin = cn / (dn - d1);

  double stair, dstair;
  if (j + 1 < cat.size()) {
    const double lo = cat.diameters[j];
    const double hi = cat.diameters[j + 1];
    const double c_lo = cat.costs[j];
    const double c_hi = cat.costs[j + 1];
    const double x = (d - lo) / (hi - lo);
    stair = c_lo + (c_hi - c_lo) * project(x, 0.0, omega);
    dstair = (c_hi - c_lo) * project_derivative(x, 0.0, omega) / (hi - lo);
  } else {
    const double x = (d - dn) / cat.overshoot_width;
    stair = cn + cat.overshoot_cost * project(x, 0.0, omega);
    dstair = cat.overshoot_cost * project_derivative(x, 0.0, omega) / cat.overshoot_width;
  }

  CostEval out;
  out.cost = upsilon * stair + (1.0 - upsilon) * lin;
  out.dcost_dd = upsilon * dstair + (1.0 - upsilon) * dlin;
  return out;
}

double ks_aggregate(const Eigen::VectorXd& h, double gamma) {
  if (h.size() == 0) throw DesignSpaceError("ks_aggregate needs at least one constraint");
  if (!(gamma > 0.0)) throw DesignSpaceError("ks_aggregate needs gamma > 0");
  const double m = h.maxCoeff();
  double sum = 0.0;
  for (int i = 0; i < h.size(); ++i) sum += std::exp(gamma * (h[i] - m));
  return m + std::log(sum) / gamma;
}

Eigen::VectorXd ks_weights(const Eigen::VectorXd& h, double gamma) {
  const double m = h.maxCoeff();
  Eigen::VectorXd w(h.size());
  for (int i = 0; i < h.size(); ++i) w[i] = std::exp(gamma * (h[i] - m));
  return w / w.sum();
}

// ---------------------------------------------------------------------------

Eigen::VectorXd comfort_constraints(const NetworkGraph& net,
                                    const Eigen::VectorXd& consumer_heat) {
  const int nc = net.n_consumers();
  Eigen::VectorXd h(2 * nc);
  for (int k = 0; k < nc; ++k) {
    const double rel = consumer_heat[k] / net.consumers[k].Q_d;
    h[2 * k] = 0.95 - rel;
    h[2 * k + 1] = rel - 1.05;
  }
  return h;
}

ObjectiveBreakdown objective(const NetworkGraph& net, const ModelAssembler& model,
                             const DesignVector& projected, const StateVector& state,
                             const PipeCatalog& cat, const CostWeights& weights, double upsilon,
                             double omega) {
  const StateLayout& lay = model.state_layout();
  ObjectiveBreakdown out;
  for (ArcId a : net.internal_arcs) {
    const Arc& arc = net.arcs[a];
    const double dp = state.y[lay.p_at(arc.from)] - state.y[lay.p_at(arc.to)];
    out.pump += weights.lambda_pump * dp * state.y[lay.q_at(a)];
    out.piping +=
        pipe_cost(projected.diameters[arc.diameter_group], cat, upsilon, omega).cost * arc.length;
  }
  out.total = out.pump + out.piping;
  return out;
}

ObjectiveBreakdown objective_snapped(const NetworkGraph& net, const ModelAssembler& model,
                                     const DesignVector& projected, const StateVector& state,
                                     const PipeCatalog& cat, const CostWeights& weights) {
  const StateLayout& lay = model.state_layout();
  ObjectiveBreakdown out;
  for (ArcId a : net.internal_arcs) {
    const Arc& arc = net.arcs[a];
    const double dp = state.y[lay.p_at(arc.from)] - state.y[lay.p_at(arc.to)];
    out.pump += weights.lambda_pump * dp * state.y[lay.q_at(a)];
    out.piping += cat.costs[cat.snap_index(projected.diameters[arc.diameter_group])] * arc.length;
  }
  out.total = out.pump + out.piping;
  return out;
}

QuantityOfInterest objective_qoi(const NetworkGraph& net, const ModelAssembler& model,
                                 const DesignVector& projected, const StateVector& state,
                                 const PipeCatalog& cat, const CostWeights& weights,
                                 double upsilon, double omega) {
  const StateLayout& lay = model.state_layout();
  const DesignLayout& dl = model.design_layout();
  QuantityOfInterest j = QuantityOfInterest::zero(lay, dl);
  const ObjectiveBreakdown ob =
      objective(net, model, projected, state, cat, weights, upsilon, omega);
  j.value = ob.total;
  for (ArcId a : net.internal_arcs) {
    const Arc& arc = net.arcs[a];
    const double q = state.y[lay.q_at(a)];
    const double dp = state.y[lay.p_at(arc.from)] - state.y[lay.p_at(arc.to)];
    j.dJ_dy[lay.p_at(arc.from)] += weights.lambda_pump * q;
    j.dJ_dy[lay.p_at(arc.to)] -= weights.lambda_pump * q;
    j.dJ_dy[lay.q_at(a)] += weights.lambda_pump * dp;
    const CostEval ce = pipe_cost(projected.diameters[arc.diameter_group], cat, upsilon, omega);
    j.dJ_dphi[dl.d_at(arc.diameter_group)] += ce.dcost_dd * arc.length;
  }
  return j;
}

QuantityOfInterest ks_comfort_qoi(const NetworkGraph& net, const ModelAssembler& model,
                                  const StateVector& state, double gamma) {
  const StateLayout& lay = model.state_layout();
  QuantityOfInterest j = QuantityOfInterest::zero(lay, model.design_layout());
  const Eigen::VectorXd h = comfort_constraints(net, state.consumer_heat(lay));
  j.value = ks_aggregate(h, gamma);
  const Eigen::VectorXd w = ks_weights(h, gamma);
  for (int k = 0; k < net.n_consumers(); ++k)
    j.dJ_dz[lay.heat_at(k)] = (-w[2 * k] + w[2 * k + 1]) / net.consumers[k].Q_d;
  return j;
}

QuantityOfInterest heat_mismatch_qoi(const NetworkGraph& net, const ModelAssembler& model,
                                     const StateVector& state, double target_factor) {
  const StateLayout& lay = model.state_layout();
  QuantityOfInterest j = QuantityOfInterest::zero(lay, model.design_layout());
  for (int k = 0; k < net.n_consumers(); ++k) {
    const double qd = net.consumers[k].Q_d;
    const double rel = (state.z[lay.heat_at(k)] - target_factor * qd) / qd;
    j.value += rel * rel;
    j.dJ_dz[lay.heat_at(k)] = 2.0 * rel / qd;
  }
  return j;
}

Eigen::VectorXd chain_gradient(const Eigen::VectorXd& grad_projected, const DesignVector& raw,
                               const PipeCatalog& cat, double chi, const DesignLayout& layout) {
  Eigen::VectorXd g = grad_projected;
  for (int k = 0; k < layout.n_d; ++k)
    g[layout.d_at(k)] *= multi_project_derivative(raw.diameters[k], cat, chi);
  return g;
}

DesignVector project_design(const DesignVector& raw, const PipeCatalog& cat, double chi) {
  DesignVector out = raw;
  for (int k = 0; k < out.diameters.size(); ++k)
    out.diameters[k] = multi_project(raw.diameters[k], cat, chi);
  return out;
}

}  // namespace dhn
