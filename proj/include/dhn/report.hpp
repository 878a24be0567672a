// Run outputs: state CSVs, the optimizer convergence log, GeoJSON of the
// resulting layout, the diameter histogram, design files, and the run
// manifest. Plain files so any plotting tool can consume them.
#pragma once

#include <string>

#include "dhn/design_space.hpp"
#include "dhn/optimizer.hpp"

namespace dhn {

struct ReportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_state_csv(const NetworkGraph& net, const ModelAssembler& model,
                     const DesignVector& projected, const StateVector& state,
                     const std::string& nodes_path, const std::string& arcs_path);

void write_energy_balance(const NetworkGraph& net, const ModelAssembler& model,
                          const DesignVector& projected, const StateVector& state,
                          const std::string& path);

void write_convergence_csv(const std::vector<IterateLog>& history, const std::string& path);

// Every arc appears exactly once: internal arcs as LineStrings (removed
// pipes styled grey, placed pipes red), consumer/producer arcs as Points.
void write_geojson(const NetworkGraph& net, const DesignVector& projected,
                   const PipeCatalog& cat, const std::string& path);

// Total installed arc length per snapped catalog diameter.
void write_diameter_histogram(const NetworkGraph& net, const DesignVector& projected,
                              const PipeCatalog& cat, const std::string& path);

void save_design(const DesignVector& phi, const std::string& path);
void save_design_report(const NetworkGraph& net, const DesignVector& raw,
                        const DesignVector& projected, const PipeCatalog& cat,
                        const std::string& path);
DesignVector load_design(const NetworkGraph& net, const std::string& path);

// FNV-1a hash of a byte string, for manifest reproducibility stamps.
std::uint64_t fnv1a64(const std::string& bytes);

// Writes manifest.json with the tool version, the canonical configuration,
// the seed, and input-file hashes.
void write_manifest(const std::string& path, const std::string& config_json, std::uint64_t seed,
                    const std::vector<std::string>& input_files);

inline const char* tool_version() { return "dhn 0.1.0"; }

}  // namespace dhn
