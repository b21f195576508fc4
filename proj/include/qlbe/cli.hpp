#pragma once

#include "qlbe/grid.hpp"
#include "qlbe/rates.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace qlbe::cli {

struct RatesTableParams {
  std::vector<Vec3> momenta;
  std::vector<Vec3> transfers;  // optional; adds the gain table at every (P, Q)
};

struct ClassicalSimParams {
  std::size_t trajectories = 10000;
  Vec3 initial_momentum;
  double t_end = 10.0;
  double output_interval = 1.0;
  double dt_factor = 0.05;
  int histogram_bins = 40;
  double histogram_max = 0.0;
  double p_table_max = 0.0;  // 0: 12 thermal momenta of the tracer plus |P0|
  std::optional<Vec3> fit_direction;
  double stationary_fraction = 0.25;
};

struct QlbeEvolveParams {
  int n = 24;
  double half_width = 0.0;  // 0: extent times the transferred momentum scale
  double extent = 8.0;
  std::array<int, 3> dP_steps{};
  Vec3 initial_center;
  double initial_width = 1.0;
  Vec3 initial_phase;
  double t_end = 1.0;
  double dt = 0.0;
  double output_interval = 0.0;
  CellRule cell_rule = CellRule::FourthOrder;
  KernelKind kernel = KernelKind::Full;
  int n_plane = 32;
  bool snapshots = true;
};

struct DecoherenceParams {
  Vec3 direction{1.0, 0.0, 0.0};
  std::vector<double> separations;
};

struct RefractionParams {
  std::vector<double> wavenumbers;
};

struct BornCheckParams {
  int points = 20;
  double momentum_scale = 1.0;  // in gas thermal momenta
};

struct DiffusiveParams {};

using ScenarioParams = std::variant<RatesTableParams, ClassicalSimParams, QlbeEvolveParams, DecoherenceParams,
                                    RefractionParams, BornCheckParams, DiffusiveParams>;

// Names in variant order.
inline constexpr std::array<const char*, 7> kScenarioNames = {
    "rates-table", "classical-sim", "qlbe-evolve", "decoherence", "refraction", "born-check", "diffusive"};

struct ScenarioConfig {
  ScenarioParams params;
  CollisionSystem system;
  nlohmann::json system_json;  // normalised system block, echoed back verbatim
  std::uint64_t seed = 0;
  std::filesystem::path output;
  std::vector<std::string> warnings;

  std::string scenario() const { return kScenarioNames[params.index()]; }
};

// Strict parse: unknown keys and out-of-range values throw Error(Config) with
// the dotted key path. Relative file paths resolve against base_dir.
ScenarioConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ScenarioConfig load_config(const std::filesystem::path& path);

// Canonical form of a parsed config; parse_config accepts it unchanged.
nlohmann::json to_json(const ScenarioConfig& cfg);

// Physics hints that do not stop a run.
std::vector<std::string> physics_warnings(const ScenarioConfig& cfg);

std::string sha256_hex(std::string_view data);

struct OutputFile {
  std::string name;
  std::string sha256;
  std::size_t bytes = 0;
};

struct RunOptions {
  int threads = 1;
};

struct RunReport {
  std::vector<OutputFile> outputs;  // manifest.json excluded
  nlohmann::json metrics;
};

// Executes the scenario and writes its outputs plus manifest.json into
// cfg.output. Numerical and input failures propagate as qlbe::Error.
RunReport run(const ScenarioConfig& cfg, const RunOptions& opt);

// 0 success, 2 bad input, 3 numerical failure.
int exit_code(const std::exception& e);

}  // namespace qlbe::cli
