// Benchmark of the residual/Jacobian assembly kernels: OpenMP-parallel
// production path against the straight-line serial reference, on grids of
// increasing size.
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dhn/gridgen.hpp"
#include "dhn/reference_models.hpp"

using namespace dhn;

namespace {

double time_ms(const std::function<void()>& fn) {
  // warm up once, then repeat until ~0.2 s elapsed
  fn();
  int reps = 1;
  double elapsed = 0.0;
  while (true) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (elapsed > 0.2) break;
    reps *= 4;
  }
  return 1e3 * elapsed / reps;
}

}  // namespace

int main() {
  const std::vector<std::pair<int, int>> sizes = {{10, 10}, {30, 30}, {60, 60}};
#ifdef _OPENMP
  const int max_threads = omp_get_max_threads();
#else
  const int max_threads = 1;
#endif

  std::printf("%-10s %8s %8s %-28s %8s %10s\n", "grid", "arcs", "threads", "kernel", "ms",
              "speedup");
  for (const auto& [r, c] : sizes) {
    GridSpec spec;
    spec.rows = r;
    spec.cols = c;
    const int sites = r * c;
    spec.n_dwelling = std::min(sites - 2, 3 * sites / 4);
    spec.n_renovated = 0;
    spec.n_commercial = 0;
    spec.producer_Q_max = 20e6;
    const NetworkGraph net = generate_grid(spec);
    const ModelOptions opts;
    const ModelAssembler assembler(net, opts);
    const StateLayout lay = assembler.state_layout();

    DesignVector phi = DesignVector::uniform(net, 0.15, 0.9, 0.3, 0.8);
    std::mt19937 eng(42);
    auto unit = [&] { return (eng() & 0xffffff) / double(0x1000000); };
    StateVector st = StateVector::zero(lay);
    for (int i = 0; i < st.y.size(); ++i) st.y[i] = i < lay.n_nodes ? 1e5 * unit() : 1e-3 * (unit() - 0.3);
    for (int i = 0; i < st.z.size(); ++i) st.z[i] = 40.0 + 30.0 * unit();

    HydraulicsOut hyd;
    ThermalOut th;
    SpMat JHy, JHphi, JEz, JEy, JEphi;

    const double ms_ref = time_ms([&] {
      reference::hydraulic_residual(net, phi, st.y, opts);
      reference::thermal_residual(net, phi, st.y, st.z, opts);
    });
    std::printf("%-10s %8d %8s %-28s %8.3f %10s\n", (std::to_string(r) + "x" + std::to_string(c)).c_str(),
                net.n_arcs(), "1", "reference residuals (serial)", ms_ref, "-");

    double ms_res_1 = 0.0, ms_jac_1 = 0.0;
    for (int threads = 1; threads <= max_threads; threads *= 2) {
#ifdef _OPENMP
      omp_set_num_threads(threads);
#endif
      const double ms_res = time_ms([&] {
        hyd.J_y = nullptr;
        hyd.J_phi = nullptr;
        th.J_z = th.J_y = th.J_phi = nullptr;
        assembler.hydraulics(phi, st.y, hyd);
        assembler.thermal(phi, st.y, st.z, th);
      });
      const double ms_jac = time_ms([&] {
        hyd.J_y = &JHy;
        hyd.J_phi = &JHphi;
        th.J_z = &JEz;
        th.J_y = &JEy;
        th.J_phi = &JEphi;
        assembler.hydraulics(phi, st.y, hyd);
        assembler.thermal(phi, st.y, st.z, th);
      });
      if (threads == 1) {
        ms_res_1 = ms_res;
        ms_jac_1 = ms_jac;
      }
      const double base_res = ms_res_1 / ms_res;
      const double base_jac = ms_jac_1 / ms_jac;
      std::printf("%-10s %8d %8d %-28s %8.3f %9.2fx\n",
                  (std::to_string(r) + "x" + std::to_string(c)).c_str(), net.n_arcs(), threads,
                  "production residuals", ms_res, base_res);
      std::printf("%-10s %8d %8d %-28s %8.3f %9.2fx\n",
                  (std::to_string(r) + "x" + std::to_string(c)).c_str(), net.n_arcs(), threads,
                  "production residuals+jacobians", ms_jac, base_jac);
    }
  }
#ifdef _OPENMP
  omp_set_num_threads(max_threads);
#endif
  return 0;
}
