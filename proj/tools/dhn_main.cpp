// dhn: simulate, optimize, and generate district heating network designs.
//
// Exit codes: 0 success, 1 verification failure (check-gradients),
// 2 configuration error, 3 solver failure, 4 optimizer failure.
#include <filesystem>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dhn/gradient_audit.hpp"
#include "dhn/gridgen.hpp"
#include "dhn/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dhn;

namespace {

RadiatorModel radiator_from(const std::string& s) {
  if (s == "lmtd") return RadiatorModel::lmtd;
  if (s == "mean") return RadiatorModel::arithmetic_mean;
  throw CLI::ValidationError("--radiator-model", "expected 'lmtd' or 'mean'");
}

std::string out_path(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

struct SimulateArgs {
  std::string network, design, out, trace;
  std::string radiator = "lmtd";
};

int run_simulate(const SimulateArgs& args) {
  fs::create_directories(args.out);
  NetworkGraph net = load_network(args.network);
  ModelOptions model;
  model.radiator = radiator_from(args.radiator);
  SolverOptions sopts;
  sopts.trace_path = args.trace;
  StateSolver solver(net, model, sopts);

  DesignVector phi = args.design.empty() ? DesignVector::uniform(net, 0.15, 1.0, 1.0, 1.0)
                                         : load_design(net, args.design);
  StateVector state;
  const SolveReport rep = solver.solve_fresh(phi, state);
  if (!rep.converged) {
    std::cerr << "state solve failed: " << rep.error << "\n";
    std::cerr << "  hydraulic iterations: " << rep.hydraulic.iterations;
    if (!rep.hydraulic.residual_norms.empty())
      std::cerr << ", last residual " << rep.hydraulic.residual_norms.back();
    std::cerr << "\n  thermal iterations: " << rep.thermal.iterations;
    if (!rep.thermal.residual_norms.empty())
      std::cerr << ", last residual " << rep.thermal.residual_norms.back();
    std::cerr << "\n";
    return 3;
  }

  write_state_csv(net, solver.model(), phi, state, out_path(args.out, "nodes.csv"),
                  out_path(args.out, "arcs.csv"));
  write_energy_balance(net, solver.model(), phi, state, out_path(args.out, "energy_balance.csv"));
  const EnergyBalance bal = energy_balance(net, solver.model(), phi, state);
  std::cout << "solved: hydraulic " << rep.hydraulic.iterations << " it, thermal "
            << rep.thermal.iterations << " it\n";
  std::cout << "producers in " << bal.producer_in / 1e3 << " kW, consumers out "
            << bal.consumer_out / 1e3 << " kW, pipe losses " << bal.pipe_loss / 1e3
            << " kW, defect " << bal.defect() << " W\n";

  json cfg{{"command", "simulate"},
           {"network", args.network},
           {"design", args.design},
           {"radiator", args.radiator}};
  write_manifest(out_path(args.out, "manifest.json"), cfg.dump(), 0,
                 args.design.empty() ? std::vector<std::string>{args.network}
                                     : std::vector<std::string>{args.network, args.design});
  return 0;
}

struct OptimizeArgs {
  std::string network, catalog, schedule, out;
  std::string radiator = "lmtd";
  int stages = 20;
  std::uint64_t seed = 0;
  bool freeze_operations = false;
  bool skip_warm_start = false;
  double initial_diameter = 0.15;
  double lambda_pump = 1e4;
  double alpha_min = 1e-2;
};

int run_optimize(const OptimizeArgs& args) {
  fs::create_directories(args.out);
  NetworkGraph net = load_network(args.network);
  PipeCatalog cat = args.catalog.empty() ? PipeCatalog::standard() : PipeCatalog::load(args.catalog);
  ContinuationSchedule sched = args.schedule.empty() ? ContinuationSchedule::defaults(args.stages)
                                                     : ContinuationSchedule::load(args.schedule);
  sched.validate();

  ModelOptions model;
  model.radiator = radiator_from(args.radiator);
  CostWeights weights;
  weights.lambda_pump = args.lambda_pump;
  OptimizerOptions oopts;
  oopts.freeze_operations = args.freeze_operations;
  oopts.alpha_min = args.alpha_min;
  Optimizer opt(net, cat, weights, model, SolverOptions{}, oopts);

  DesignVector phi = DesignVector::uniform(net, args.initial_diameter, 1.0, 1.0, 1.0);
  if (!args.skip_warm_start) {
    const WarmStartReport ws = opt.warm_start(phi);
    std::cout << "warm start: max mismatch " << ws.max_mismatch * 100.0 << " %, heat budget "
              << ws.heat_budget / 1e6 << " MW vs demand " << ws.heat_demand / 1e6 << " MW\n";
    if (ws.heat_budget < ws.heat_demand) {
      std::cerr << "infeasible scenario: " << ws.error << "\n";
      return 4;
    }
    if (!ws.converged) std::cout << "warm start note: " << ws.error << "\n";
  }

  const OptimizeReport rep = opt.optimize(phi, sched);
  if (rep.history.empty()) {
    std::cerr << "optimization could not start: " << rep.error << "\n";
    return 3;
  }
  if (rep.projected.diameters.size() == 0) {
    write_convergence_csv(rep.history, out_path(args.out, "convergence.csv"));
    std::cerr << "optimization failed: " << rep.error << "\n";
    return 4;
  }

  write_convergence_csv(rep.history, out_path(args.out, "convergence.csv"));
  save_design(rep.raw, out_path(args.out, "design.json"));
  save_design_report(net, rep.raw, rep.projected, cat, out_path(args.out, "design_report.json"));
  write_geojson(net, rep.projected, cat, out_path(args.out, "network.geojson"));
  write_diameter_histogram(net, rep.projected, cat, out_path(args.out, "diameters.csv"));
  ModelAssembler assembler(net, model);
  write_state_csv(net, assembler, rep.projected, rep.state, out_path(args.out, "nodes.csv"),
                  out_path(args.out, "arcs.csv"));
  write_energy_balance(net, assembler, rep.projected, rep.state,
                       out_path(args.out, "energy_balance.csv"));

  int removed = 0;
  for (int g = 0; g < rep.projected.diameters.size(); ++g)
    if (cat.snap_index(rep.projected.diameters[g]) == 0) ++removed;
  std::cout << "objective " << rep.snapped_objective.total / 1e6 << " Meur (pump "
            << rep.snapped_objective.pump / 1e6 << ", piping " << rep.snapped_objective.piping / 1e6
            << "), h_ks " << rep.h_ks << ", removed groups " << removed << "/"
            << rep.projected.diameters.size() << ", max snap distance " << rep.max_snap_distance
            << " m\n";
  if (!rep.failed_stages.empty()) {
    std::cout << "stages without full convergence:";
    for (int s : rep.failed_stages) std::cout << " " << s;
    std::cout << " (" << rep.error << ")\n";
  }

  json cfg{{"command", "optimize"},
           {"network", args.network},
           {"catalog", args.catalog},
           {"schedule", args.schedule},
           {"stages", args.stages},
           {"radiator", args.radiator},
           {"freeze_operations", args.freeze_operations},
           {"skip_warm_start", args.skip_warm_start},
           {"initial_diameter", args.initial_diameter},
           {"lambda_pump", args.lambda_pump},
           {"alpha_min", args.alpha_min}};
  std::vector<std::string> inputs{args.network};
  if (!args.catalog.empty()) inputs.push_back(args.catalog);
  if (!args.schedule.empty()) inputs.push_back(args.schedule);
  write_manifest(out_path(args.out, "manifest.json"), cfg.dump(), args.seed, inputs);
  return rep.success ? 0 : 4;
}

struct GenGridArgs {
  std::string out;
  int rows = 4, cols = 4;
  double spacing = 50.0;
  int dwellings = 10, renovated = 2, commercial = 2;
  int producers = 2;
  double t_inf = -8.0;
  double producer_q_max = 2e6;
  std::uint64_t seed = 1;
};

int run_gen_grid(const GenGridArgs& args) {
  GridSpec spec;
  spec.rows = args.rows;
  spec.cols = args.cols;
  spec.spacing = args.spacing;
  spec.n_dwelling = args.dwellings;
  spec.n_renovated = args.renovated;
  spec.n_commercial = args.commercial;
  spec.n_producers = args.producers;
  spec.T_inf = args.t_inf;
  spec.producer_Q_max = args.producer_q_max;
  spec.seed = static_cast<std::uint32_t>(args.seed);
  const NetworkGraph net = generate_grid(spec);
  if (const fs::path parent = fs::path(args.out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  save_network(net, args.out);

  const DesignLayout dl = DesignLayout::of(net);
  double demand = 0.0;
  for (const ConsumerSpec& c : net.consumers) demand += c.Q_d;
  std::cout << "grid " << args.rows << "x" << args.cols << ": " << net.n_nodes() << " nodes, "
            << net.n_arcs() << " arcs, " << net.n_consumers() << " consumers ("
            << demand / 1e6 << " MW), " << net.n_producers() << " producers, " << dl.dim()
            << " design variables\n";

  json cfg{{"command", "gen-grid"}, {"rows", args.rows},
           {"cols", args.cols},     {"spacing", args.spacing},
           {"dwellings", args.dwellings}, {"renovated", args.renovated},
           {"commercial", args.commercial}, {"producers", args.producers},
           {"t_inf", args.t_inf},   {"producer_q_max", args.producer_q_max}};
  write_manifest(args.out + ".manifest.json", cfg.dump(), args.seed, {});
  return 0;
}

struct CheckGradArgs {
  std::string network, out;
  std::uint64_t seed = 7;
  double gamma = 5e3, chi = 10.0, upsilon = 0.5, omega = 10.0;
  double rel_step = 1e-4;
  double tol = 1e-5;
};

int run_check_gradients(const CheckGradArgs& args) {
  NetworkGraph net = args.network.empty()
                         ? random_test_network(static_cast<std::uint32_t>(args.seed))
                         : load_network(args.network);
  const PipeCatalog cat = PipeCatalog::standard();
  const CostWeights weights;

  std::mt19937 eng(static_cast<std::uint32_t>(args.seed) + 1);
  auto unit = [&] { return (eng() & 0xffffff) / double(0x1000000); };
  DesignVector phi = DesignVector::uniform(net, 0.15, 1.0, 0.3, 0.7);
  for (int i = 0; i < phi.diameters.size(); ++i) {
    double d = 0.05 + 0.25 * unit();
    // keep the FD stencil away from catalog points, where the projection
    // and cost curves are intentionally non-differentiable
    const double margin = 1e-3;
    const int snap = cat.snap_index(d);
    if (std::abs(d - cat.diameters[snap]) < margin)
      d = cat.diameters[snap] + (d < cat.diameters[snap] ? -margin : margin);
    phi.diameters[i] = d;
  }
  for (int i = 0; i < phi.alpha.size(); ++i) phi.alpha[i] = 0.5 + 0.5 * unit();
  for (int i = 0; i < phi.beta.size(); ++i) phi.beta[i] = 0.05 + 0.45 * unit();
  for (int i = 0; i < phi.producer_flow.size(); ++i)
    phi.producer_flow[i] = (0.5 + 0.45 * unit()) * net.producers[i].q_b_max;

  ContinuationSchedule::Stage stage;
  stage.gamma = args.gamma;
  stage.chi = args.chi;
  stage.upsilon = args.upsilon;
  stage.omega = args.omega;

  const GradientAuditResult res =
      audit_gradients(net, cat, weights, stage, phi, ModelOptions{}, SolverOptions{},
                      args.rel_step);
  std::cout << "objective gradient: max rel error " << res.max_rel_objective << " (component "
            << res.worst_objective_index << ")\n";
  std::cout << "aggregated constraint gradient: max rel error " << res.max_rel_ks
            << " (component " << res.worst_ks_index << ")\n";
  std::cout << "design dimension " << res.adjoint_objective.size() << ", wall " << res.wall_s
            << " s\n";

  if (!args.out.empty()) {
    std::ofstream csv(args.out);
    csv << "index,adjoint_objective,fd_objective,adjoint_ks,fd_ks\n";
    for (int i = 0; i < res.adjoint_objective.size(); ++i)
      csv << i << "," << res.adjoint_objective[i] << "," << res.fd_objective[i] << ","
          << res.adjoint_ks[i] << "," << res.fd_ks[i] << "\n";
  }
  const bool ok = res.pass(args.tol);
  std::cout << (ok ? "PASS" : "FAIL") << " (tolerance " << args.tol << ")\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"district heating network topology and pipe sizing by adjoint optimization"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "solve the network state for a fixed design");
  c_sim->add_option("--network", sim.network, "network definition file")->required();
  c_sim->add_option("--design", sim.design, "design file (default: uniform 0.15 m, valves open)");
  c_sim->add_option("--out", sim.out, "output directory")->required();
  c_sim->add_option("--trace", sim.trace, "per-iteration solver trace CSV");
  c_sim->add_option("--radiator-model", sim.radiator, "radiator model: lmtd|mean");

  OptimizeArgs opt;
  CLI::App* c_opt = app.add_subcommand("optimize", "warm start + continuation optimization");
  c_opt->add_option("--network", opt.network, "network definition file")->required();
  c_opt->add_option("--catalog", opt.catalog, "pipe catalog file (default: built-in)");
  c_opt->add_option("--schedule", opt.schedule, "continuation schedule file");
  c_opt->add_option("--stages", opt.stages, "stage count for the default schedule");
  c_opt->add_option("--out", opt.out, "output directory")->required();
  c_opt->add_option("--seed", opt.seed, "seed recorded in the manifest");
  c_opt->add_flag("--freeze-operations", opt.freeze_operations,
                  "hold valve controls and producer inflows fixed");
  c_opt->add_flag("--skip-warm-start", opt.skip_warm_start, "skip the operations warm start");
  c_opt->add_option("--initial-diameter", opt.initial_diameter, "uniform starting diameter [m]");
  c_opt->add_option("--lambda-pump", opt.lambda_pump, "pump cost weight [eur/W]");
  c_opt->add_option("--alpha-min", opt.alpha_min, "lower bound of the heating valve control");
  c_opt->add_option("--radiator-model", opt.radiator, "radiator model: lmtd|mean");

  GenGridArgs gen;
  CLI::App* c_gen = app.add_subcommand("gen-grid", "generate a street-grid superstructure");
  c_gen->add_option("--rows", gen.rows, "grid rows")->check(CLI::Range(2, 1000));
  c_gen->add_option("--cols", gen.cols, "grid columns")->check(CLI::Range(2, 1000));
  c_gen->add_option("--spacing", gen.spacing, "street segment length [m]");
  c_gen->add_option("--dwellings", gen.dwellings, "number of dwelling consumers");
  c_gen->add_option("--renovated", gen.renovated, "number of renovated dwellings");
  c_gen->add_option("--commercial", gen.commercial, "number of commercial consumers");
  c_gen->add_option("--producers", gen.producers, "number of producers (1..4)");
  c_gen->add_option("--t-inf", gen.t_inf, "ambient design temperature [degC]");
  c_gen->add_option("--producer-q-max", gen.producer_q_max, "producer heat capacity [W]");
  c_gen->add_option("--seed", gen.seed, "placement seed");
  c_gen->add_option("--out", gen.out, "output network file")->required();

  CheckGradArgs chk;
  CLI::App* c_chk = app.add_subcommand("check-gradients",
                                       "finite-difference audit of the adjoint gradients");
  c_chk->add_option("--network", chk.network, "network file (default: random 20-arc fixture)");
  c_chk->add_option("--seed", chk.seed, "fixture/design randomization seed");
  c_chk->add_option("--gamma", chk.gamma, "aggregation sharpness");
  c_chk->add_option("--chi", chk.chi, "projection steepness");
  c_chk->add_option("--upsilon", chk.upsilon, "cost interpolation weight");
  c_chk->add_option("--omega", chk.omega, "cost steepness");
  c_chk->add_option("--rel-step", chk.rel_step, "relative FD step");
  c_chk->add_option("--tol", chk.tol, "pass tolerance on the relative error");
  c_chk->add_option("--out", chk.out, "per-component CSV report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(c_sim)) return run_simulate(sim);
    if (app.got_subcommand(c_opt)) return run_optimize(opt);
    if (app.got_subcommand(c_gen)) return run_gen_grid(gen);
    if (app.got_subcommand(c_chk)) return run_check_gradients(chk);
  } catch (const NetworkError& e) {
    std::cerr << "network error: " << e.what() << "\n";
    return 2;
  } catch (const DesignSpaceError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const ReportError& e) {
    std::cerr << "output error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
