#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dhn/network.hpp"
#include "dhn/physics.hpp"
#include "dhn/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DHN_CLI_PATH) + " " + args + " > cli_stdout.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::path("cli_test") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gen-grid writes a loadable network and a manifest") {
  TempDir dir("gen");
  const std::string net_path = (dir.path / "net.json").string();
  REQUIRE(run_cli("gen-grid --rows 3 --cols 3 --dwellings 3 --renovated 1 --commercial 0 "
                  "--producers 1 --seed 4 --out " + net_path) == 0);
  const dhn::NetworkGraph net = dhn::load_network(net_path);
  CHECK(net.n_consumers() == 4);
  CHECK(fs::exists(net_path + ".manifest.json"));
}

TEST_CASE("simulate writes state files with a closed energy balance") {
  TempDir dir("sim");
  const std::string net_path = (dir.path / "net.json").string();
  REQUIRE(run_cli("gen-grid --rows 2 --cols 2 --dwellings 2 --renovated 0 --commercial 0 "
                  "--producers 1 --seed 4 --out " + net_path) == 0);
  const std::string out = (dir.path / "sim").string();
  REQUIRE(run_cli("simulate --network " + net_path + " --out " + out) == 0);
  for (const char* f : {"nodes.csv", "arcs.csv", "energy_balance.csv", "manifest.json"})
    CHECK(fs::exists(fs::path(out) / f));
  const std::string balance = slurp((fs::path(out) / "energy_balance.csv").string());
  double in = 0.0, defect = 1e99;
  std::istringstream ss(balance);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind("producer_heat_in,", 0) == 0) in = std::stod(line.substr(18));
    if (line.rfind("balance_defect,", 0) == 0) defect = std::stod(line.substr(15));
  }
  CHECK(std::abs(defect) <= 1e-6 * in);
}

TEST_CASE("single-path simulate CSV matches the hand solution") {
  TempDir dir("path");
  // producer arc 0->1, one pipe 1->0: flow equals the imposed inflow and
  // the pipe pressure drop is q / g with g from the friction correlation
  dhn::NetworkGraph net;
  net.nodes.push_back({0, dhn::NodeKind::producer, 0, 0});
  net.nodes.push_back({1, dhn::NodeKind::producer, 10, 0});
  net.arcs.push_back({0, 0, 1, dhn::ArcKind::producer, 0.0, -1});
  net.arcs.push_back({1, 1, 0, dhn::ArcKind::internal, 40.0, -1});
  net.producers.push_back({0, 73.0, 5e-3});
  net.reference_pressure_node = 0;
  net.finalize();
  const std::string net_path = (dir.path / "net.json").string();
  dhn::save_network(net, net_path);
  dhn::DesignVector phi = dhn::DesignVector::uniform(net, 0.1, 1.0, 1.0, 0.6);
  const std::string design = (dir.path / "design.json").string();
  dhn::save_design(phi, design);
  const std::string out = (dir.path / "sim").string();
  REQUIRE(run_cli("simulate --network " + net_path + " --design " + design + " --out " + out) ==
          0);

  const double q = 0.6 * 5e-3;
  std::ifstream arcs((fs::path(out) / "arcs.csv").string());
  std::string line;
  std::getline(arcs, line);
  double q_pipe = 0.0, theta_exit = 0.0;
  while (std::getline(arcs, line)) {
    std::istringstream ls(line);
    std::vector<std::string> f;
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f[0] == "1") {
      q_pipe = std::stod(f[6]);
      theta_exit = std::stod(f[7]);
    }
  }
  CHECK(q_pipe == doctest::Approx(q).epsilon(1e-9));
  const double Rt = dhn::thermal_resistance(0.1, net.scenario.pipe);
  const double f_ret = dhn::heat_retention(q, 40.0, Rt, net.scenario.fluid);
  CHECK(theta_exit == doctest::Approx(f_ret * 73.0).epsilon(1e-7));

  std::ifstream nodes((fs::path(out) / "nodes.csv").string());
  std::getline(nodes, line);
  double p1 = 0.0;
  while (std::getline(nodes, line)) {
    std::istringstream ls(line);
    std::vector<std::string> f;
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f[0] == "1") p1 = std::stod(f[4]);
  }
  const double g =
      dhn::conductance(q, 0.1, 40.0, net.scenario.fluid, net.scenario.pipe);
  CHECK(p1 == doctest::Approx(q / g).epsilon(1e-7));
}

TEST_CASE("zero-inflow scenario produces an all-zero flow table") {
  TempDir dir("zero");
  const std::string net_path = (dir.path / "net.json").string();
  REQUIRE(run_cli("gen-grid --rows 2 --cols 2 --dwellings 0 --renovated 0 --commercial 0 "
                  "--producers 1 --seed 4 --out " + net_path) == 0);
  const dhn::NetworkGraph net = dhn::load_network(net_path);
  dhn::DesignVector phi = dhn::DesignVector::uniform(net, 0.15, 1.0, 1.0, 0.0);
  const std::string design = (dir.path / "design.json").string();
  dhn::save_design(phi, design);
  const std::string out = (dir.path / "sim").string();
  REQUIRE(run_cli("simulate --network " + net_path + " --design " + design + " --out " + out) ==
          0);
  std::ifstream arcs((fs::path(out) / "arcs.csv").string());
  std::string line;
  std::getline(arcs, line);  // header
  while (std::getline(arcs, line)) {
    std::istringstream ls(line);
    std::string field;
    for (int i = 0; i <= 6; ++i) std::getline(ls, field, ',');
    CHECK(std::stod(field) == 0.0);  // q_m3s column
  }
}

TEST_CASE("starved radiators exit with the solver failure code") {
  TempDir dir("starved");
  const std::string net_path = (dir.path / "net.json").string();
  REQUIRE(run_cli("gen-grid --rows 2 --cols 2 --dwellings 2 --renovated 0 --commercial 0 "
                  "--producers 1 --seed 4 --out " + net_path) == 0);
  const dhn::NetworkGraph net = dhn::load_network(net_path);
  dhn::DesignVector phi = dhn::DesignVector::uniform(net, 0.15, 1.0, 0.0, 1.0);
  phi.producer_flow[0] = 1e-8;  // far below demand
  const std::string design = (dir.path / "design.json").string();
  dhn::save_design(phi, design);
  CHECK(run_cli("simulate --network " + net_path + " --design " + design + " --out " +
                (dir.path / "sim").string()) == 3);
}

TEST_CASE("optimize produces design, logs, geojson, histogram, and is repeatable") {
  TempDir dir("opt");
  const std::string net_path = (dir.path / "net.json").string();
  REQUIRE(run_cli("gen-grid --rows 2 --cols 2 --dwellings 2 --renovated 0 --commercial 0 "
                  "--producers 1 --seed 4 --out " + net_path) == 0);
  const std::string out1 = (dir.path / "run1").string();
  const std::string out2 = (dir.path / "run2").string();
  const std::string flags = " --stages 5 --seed 11 --out ";
  REQUIRE(run_cli("optimize --network " + net_path + flags + out1) == 0);
  REQUIRE(run_cli("optimize --network " + net_path + flags + out2) == 0);
  for (const char* f : {"design.json", "design_report.json", "convergence.csv",
                        "network.geojson", "diameters.csv", "manifest.json", "nodes.csv",
                        "arcs.csv"})
    CHECK(fs::exists(fs::path(out1) / f));
  // identical inputs give identical results
  CHECK(slurp((fs::path(out1) / "design.json").string()) ==
        slurp((fs::path(out2) / "design.json").string()));
  CHECK(slurp((fs::path(out1) / "network.geojson").string()) ==
        slurp((fs::path(out2) / "network.geojson").string()));

  // GeoJSON covers every arc exactly once and validates structurally
  const json geo = json::parse(slurp((fs::path(out1) / "network.geojson").string()));
  CHECK(geo.at("type") == "FeatureCollection");
  const dhn::NetworkGraph net = dhn::load_network(net_path);
  std::vector<int> seen(net.n_arcs(), 0);
  for (const json& f : geo.at("features")) {
    CHECK(f.at("type") == "Feature");
    CHECK(f.contains("geometry"));
    ++seen[f.at("properties").at("arc").get<int>()];
  }
  for (int count : seen) CHECK(count == 1);
}

TEST_CASE("design files validate their dimensions") {
  TempDir dir("design");
  const dhn::NetworkGraph net = dhn::load_network([&] {
    const std::string p = (dir.path / "net.json").string();
    REQUIRE(run_cli("gen-grid --rows 2 --cols 2 --dwellings 1 --renovated 0 --commercial 0 "
                    "--producers 1 --seed 4 --out " + p) == 0);
    return p;
  }());
  const std::string bad = (dir.path / "bad.json").string();
  std::ofstream(bad) << R"({"diameters": [0.1], "alpha": [1.0], "beta": [1.0],
                            "producer_flow": [0.001]})";
  CHECK_THROWS_WITH_AS(dhn::load_design(net, bad), doctest::Contains("has size"),
                       dhn::ReportError);
}

TEST_CASE("a schedule with decreasing gamma is a configuration error") {
  TempDir dir("sched");
  const std::string net_path = (dir.path / "net.json").string();
  REQUIRE(run_cli("gen-grid --rows 2 --cols 2 --dwellings 1 --renovated 0 --commercial 0 "
                  "--producers 1 --seed 4 --out " + net_path) == 0);
  const std::string sched = (dir.path / "bad_schedule.json").string();
  std::ofstream(sched) << R"({"stages": [
    {"gamma": 1e4, "chi": 0, "upsilon": 0, "omega": 0},
    {"gamma": 5e3, "chi": 10, "upsilon": 0.5, "omega": 10}]})";
  CHECK(run_cli("optimize --network " + net_path + " --schedule " + sched + " --out " +
                (dir.path / "out").string()) == 2);
}

TEST_CASE("missing files and bad flags map to the config exit code") {
  CHECK(run_cli("simulate --network does_not_exist.json --out cli_test/none") == 2);
  CHECK(run_cli("gen-grid --rows 1 --cols 2 --out cli_test/bad.json") == 2);
}

TEST_CASE("check-gradients passes on the built-in fixture") {
  CHECK(run_cli("check-gradients --seed 3") == 0);
}

}  // TEST_SUITE
