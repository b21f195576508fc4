#include "qlbe/cli.hpp"

#include "qlbe/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace qlbe::cli {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& why) { fail(ErrorKind::Config, path + ": " + why); }

// Walks one JSON object, remembering which keys were read so that leftovers
// can be rejected.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      bad(where(), "expected an object");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      bad(at(key), "missing");
    }
    return j_.at(key);
  }

  Reader child(const std::string& key) { return Reader(raw(key), at(key)); }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) {
      bad(at(key), "expected a number");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
      bad(at(key), "must be finite");
    }
    return x;
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : (seen_.insert(key), fallback); }

  double positive(const std::string& key) {
    const double x = number(key);
    if (!(x > 0.0)) {
      bad(at(key), "must be positive");
    }
    return x;
  }
  double positive(const std::string& key, double fallback) { return has(key) ? positive(key) : fallback; }
  double nonnegative(const std::string& key, double fallback) {
    const double x = number(key, fallback);
    if (x < 0.0) {
      bad(at(key), "must not be negative");
    }
    return x;
  }

  std::int64_t integer(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_integer()) {
      bad(at(key), "expected an integer");
    }
    return v.get<std::int64_t>();
  }
  std::int64_t integer(const std::string& key, std::int64_t lo, std::int64_t hi) {
    const auto x = integer(key);
    if (x < lo || x > hi) {
      bad(at(key), "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return x;
  }
  std::int64_t integer(const std::string& key, std::int64_t lo, std::int64_t hi, std::int64_t fallback) {
    return has(key) ? integer(key, lo, hi) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) {
      return fallback;
    }
    const json& v = raw(key);
    if (!v.is_boolean()) {
      bad(at(key), "expected true or false");
    }
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) {
      bad(at(key), "expected a string");
    }
    return v.get<std::string>();
  }

  Vec3 vec3(const std::string& key) { return to_vec3(raw(key), at(key)); }
  Vec3 vec3(const std::string& key, const Vec3& fallback) { return has(key) ? vec3(key) : fallback; }

  std::vector<double> numbers(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array() || v.empty()) {
      bad(at(key), "expected a non-empty array of numbers");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
        bad(at(key) + "[" + std::to_string(i) + "]", "expected a finite number");
      }
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<Vec3> vectors(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array() || v.empty()) {
      bad(at(key), "expected a non-empty array of 3-vectors");
    }
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(to_vec3(v[i], at(key) + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  // Rejects keys nobody asked for.
  void done() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) {
        bad(at(key), "unknown key");
      }
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  static Vec3 to_vec3(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 3) {
      bad(path, "expected [x, y, z]");
    }
    std::array<double, 3> c{};
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
        bad(path, "expected [x, y, z] with finite numbers");
      }
      c[i] = v[i].get<double>();
    }
    return {c[0], c[1], c[2]};
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

json vecs_json(const std::vector<Vec3>& vs) {
  json out = json::array();
  for (const Vec3& v : vs) {
    out.push_back(vec_json(v));
  }
  return out;
}

// Rethrows library validation failures under the config key that caused them.
template <class F>
auto under(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) {
      throw;
    }
    bad(path, e.what());
  }
}

struct ParsedSystem {
  CollisionSystem sys;
  json echo;
};

ParsedSystem parse_system(Reader r, const std::filesystem::path& base_dir) {
  json echo;

  Reader rm = r.child("masses");
  const double m = rm.positive("gas");
  const double M = rm.positive("tracer");
  rm.done();
  const MassPair masses(m, M);
  echo["masses"] = {{"gas", m}, {"tracer", M}};

  Reader rg = r.child("gas");
  const std::string kind = rg.string("distribution");
  const double density = rg.positive("density");
  json gas_echo = {{"distribution", kind}, {"density", density}};
  std::optional<GasDistribution> dist;
  double tracer_p_scale = 0.0;
  if (kind == "maxwell-boltzmann") {
    const double beta = rg.positive("beta");
    const Vec3 drift = rg.vec3("drift", {});
    dist = MaxwellBoltzmann(m, beta, drift);
    gas_echo["beta"] = beta;
    gas_echo["drift"] = vec_json(drift);
    tracer_p_scale = std::sqrt(2.0 * M / beta);
  } else if (kind == "tabulated") {
    std::filesystem::path file = rg.string("file");
    if (file.is_relative()) {
      file = base_dir / file;
    }
    file = std::filesystem::absolute(file).lexically_normal();
    dist = under(rg.at("file"), [&] { return GasDistribution(load_tabulated_csv(file)); });
    gas_echo["file"] = file.string();
    tracer_p_scale = thermal_momentum(*dist) * std::sqrt(M / m);
  } else {
    bad(rg.at("distribution"), "expected \"maxwell-boltzmann\" or \"tabulated\"");
  }
  rg.done();
  echo["gas"] = gas_echo;

  Reader rmod = r.child("model");
  const std::string type = rmod.string("type");
  std::optional<ScatteringModel> model;
  json model_echo = {{"type", type}};
  if (type == "constant-s-wave") {
    const json& f0 = rmod.raw("f0");
    if (!f0.is_array() || f0.size() != 2 || !f0[0].is_number() || !f0[1].is_number()) {
      bad(rmod.at("f0"), "expected [re, im]");
    }
    const complex f{f0[0].get<double>(), f0[1].get<double>()};
    model = ConstantSWave{f};
    model_echo["f0"] = {f.real(), f.imag()};
  } else if (type == "hard-sphere") {
    const double radius = rmod.positive("radius");
    int l_max = 0;
    if (rmod.has("l_max")) {
      l_max = static_cast<int>(rmod.integer("l_max", 0, 2000));
    } else {
      // Relative momenta reach the gas support plus a share of eight tracer
      // thermal momenta.
      const double k_max = masses.m_star() / m * (center(*dist).norm() + support_radius(*dist)) +
                           masses.m_star() / M * 8.0 * tracer_p_scale;
      l_max = recommended_lmax(radius, k_max);
    }
    model = under(rmod.at("radius"), [&] { return make_hard_sphere(radius, l_max); });
    model_echo["radius"] = radius;
    model_echo["l_max"] = l_max;
  } else if (type == "born-gaussian") {
    const double V0 = rmod.number("V0");
    const double s = rmod.positive("range");
    model = under(rmod.at("V0"), [&] { return make_born_gaussian(V0, s, masses); });
    model_echo["V0"] = V0;
    model_echo["range"] = s;
  } else {
    bad(rmod.at("type"), "expected \"constant-s-wave\", \"hard-sphere\" or \"born-gaussian\"");
  }
  rmod.done();
  echo["model"] = model_echo;

  QuadratureBudget quad;
  if (r.has("quadrature")) {
    Reader rq = r.child("quadrature");
    quad.n_radial = static_cast<int>(rq.integer("n_radial", 4, 4096, quad.n_radial));
    quad.n_angular = static_cast<int>(rq.integer("n_angular", 4, 4096, quad.n_angular));
    quad.n_plane = static_cast<int>(rq.integer("n_plane", 4, 4096, quad.n_plane));
    quad.plane_extent = rq.positive("plane_extent", quad.plane_extent);
    quad.mc_samples = static_cast<long>(rq.integer("mc_samples", 1, 1'000'000'000'000, quad.mc_samples));
    quad.rel_tol = rq.positive("rel_tol", quad.rel_tol);
    quad.max_doublings = static_cast<int>(rq.integer("max_doublings", 0, 12, quad.max_doublings));
    rq.done();
    under(r.at("quadrature"), [&] {
      quad.validate();
      return 0;
    });
  }
  echo["quadrature"] = {{"n_radial", quad.n_radial},   {"n_angular", quad.n_angular},
                        {"n_plane", quad.n_plane},     {"plane_extent", quad.plane_extent},
                        {"mc_samples", quad.mc_samples}, {"rel_tol", quad.rel_tol},
                        {"max_doublings", quad.max_doublings}};
  r.done();
  return {CollisionSystem(masses, GasSpec(*dist, density), *model, quad), echo};
}

void require_mb_at_rest(const CollisionSystem& sys, const std::string& path, const std::string& scenario) {
  const auto* mb = std::get_if<MaxwellBoltzmann>(&sys.distribution());
  if (!mb || !(mb->drift() == Vec3{})) {
    bad(path, scenario + " needs a Maxwell-Boltzmann gas at rest");
  }
}

ScenarioParams parse_params(const std::string& scenario, Reader r, const CollisionSystem& sys,
                            const std::string& sys_path) {
  ScenarioParams out;
  if (scenario == "rates-table") {
    RatesTableParams p;
    p.momenta = r.vectors("momenta");
    if (r.has("transfers")) {
      p.transfers = r.vectors("transfers");
      for (std::size_t i = 0; i < p.transfers.size(); ++i) {
        if (p.transfers[i].norm() <= sys.eps_Q()) {
          bad(r.at("transfers") + "[" + std::to_string(i) + "]", "momentum transfer must be nonzero");
        }
      }
    }
    out = p;
  } else if (scenario == "classical-sim") {
    ClassicalSimParams p;
    p.trajectories = static_cast<std::size_t>(r.integer("trajectories", 1, 100'000'000));
    p.initial_momentum = r.vec3("initial_momentum", {});
    p.t_end = r.positive("t_end");
    p.output_interval = r.positive("output_interval", p.t_end / 20.0);
    p.dt_factor = r.positive("dt_factor", p.dt_factor);
    if (p.dt_factor > 0.1) {
      bad(r.at("dt_factor"), "must not exceed 0.1");
    }
    p.histogram_bins = static_cast<int>(r.integer("histogram_bins", 1, 100000, p.histogram_bins));
    p.histogram_max = r.nonnegative("histogram_max", 0.0);
    p.p_table_max = r.nonnegative("p_table_max", 0.0);
    if (r.has("fit_direction")) {
      p.fit_direction = r.vec3("fit_direction");
      if (p.fit_direction->norm() == 0.0) {
        bad(r.at("fit_direction"), "must be nonzero");
      }
    }
    p.stationary_fraction = r.positive("stationary_fraction", p.stationary_fraction);
    if (p.stationary_fraction >= 1.0) {
      bad(r.at("stationary_fraction"), "must be below 1");
    }
    out = p;
  } else if (scenario == "qlbe-evolve") {
    QlbeEvolveParams p;
    p.n = static_cast<int>(r.integer("n", 8, 256, p.n));
    p.half_width = r.nonnegative("half_width", 0.0);
    p.extent = r.positive("extent", p.extent);
    if (r.has("dP_steps")) {
      const json& v = r.raw("dP_steps");
      if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& x) {
            return x.is_number_integer();
          })) {
        bad(r.at("dP_steps"), "expected three integers");
      }
      for (int i = 0; i < 3; ++i) {
        p.dP_steps[i] = v[i].get<int>();
        if (std::abs(p.dP_steps[i]) >= p.n) {
          bad(r.at("dP_steps"), "offset must be smaller than the grid");
        }
      }
    }
    p.initial_center = r.vec3("initial_center", {});
    p.initial_width = r.positive("initial_width");
    p.initial_phase = r.vec3("initial_phase", {});
    p.t_end = r.positive("t_end");
    p.dt = r.nonnegative("dt", 0.0);
    p.output_interval = r.nonnegative("output_interval", 0.0);
    if (r.has("cell_rule")) {
      const std::string rule = r.string("cell_rule");
      if (rule == "point") {
        p.cell_rule = CellRule::Point;
      } else if (rule != "fourth-order") {
        bad(r.at("cell_rule"), "expected \"point\" or \"fourth-order\"");
      }
    }
    if (r.has("kernel")) {
      const std::string kernel = r.string("kernel");
      if (kernel == "pure-decoherence") {
        p.kernel = KernelKind::PureDecoherence;
      } else if (kernel != "full") {
        bad(r.at("kernel"), "expected \"full\" or \"pure-decoherence\"");
      }
    }
    p.n_plane = static_cast<int>(r.integer("n_plane", 4, 512, p.n_plane));
    p.snapshots = r.boolean("snapshots", p.snapshots);
    out = p;
  } else if (scenario == "decoherence") {
    DecoherenceParams p;
    p.direction = r.vec3("direction", p.direction);
    if (p.direction.norm() == 0.0) {
      bad(r.at("direction"), "must be nonzero");
    }
    p.separations = r.numbers("separations");
    for (std::size_t i = 0; i < p.separations.size(); ++i) {
      if (p.separations[i] < 0.0) {
        bad(r.at("separations") + "[" + std::to_string(i) + "]", "must not be negative");
      }
    }
    out = p;
  } else if (scenario == "refraction") {
    require_mb_at_rest(sys, sys_path, scenario);
    RefractionParams p;
    p.wavenumbers = r.numbers("wavenumbers");
    for (std::size_t i = 0; i < p.wavenumbers.size(); ++i) {
      if (!(p.wavenumbers[i] > 0.0)) {
        bad(r.at("wavenumbers") + "[" + std::to_string(i) + "]", "must be positive");
      }
    }
    out = p;
  } else if (scenario == "born-check") {
    require_mb_at_rest(sys, sys_path, scenario);
    if (!std::holds_alternative<BornGaussian>(sys.model())) {
      bad(sys_path + ".model.type", "born-check needs the born-gaussian model");
    }
    BornCheckParams p;
    p.points = static_cast<int>(r.integer("points", 1, 100000, p.points));
    p.momentum_scale = r.positive("momentum_scale", p.momentum_scale);
    out = p;
  } else if (scenario == "diffusive") {
    require_mb_at_rest(sys, sys_path, scenario);
    if (!std::holds_alternative<ConstantSWave>(sys.model())) {
      bad(sys_path + ".model.type", "diffusive needs the constant-s-wave model");
    }
    out = DiffusiveParams{};
  } else {
    bad("scenario", "unknown scenario " + scenario);
  }
  r.done();
  return out;
}

}  // namespace

ScenarioConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  Reader root(doc, "");
  const std::string scenario = root.string("scenario");
  if (std::find(kScenarioNames.begin(), kScenarioNames.end(), scenario) == kScenarioNames.end()) {
    std::string names;
    for (const char* n : kScenarioNames) {
      names += names.empty() ? n : std::string(", ") + n;
    }
    bad("scenario", "expected one of " + names);
  }
  auto [sys, echo] = parse_system(root.child("system"), base_dir);

  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
  if (root.has("seed")) {
    const json& s = root.raw("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
      bad("seed", "expected a non-negative integer");
    }
    seed = s.get<std::uint64_t>();
  } else {
    warnings.emplace_back("seed missing; using 0");
  }

  const std::string output = root.has("output") ? root.string("output") : scenario + "-out";
  if (output.empty()) {
    bad("output", "must not be empty");
  }
  const json empty = json::object();
  ScenarioParams params = parse_params(
      scenario, root.has("parameters") ? root.child("parameters") : Reader(empty, "parameters"), sys, "system");
  root.done();
  return ScenarioConfig{std::move(params), std::move(sys), std::move(echo), seed, output, std::move(warnings)};
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    bad(path.string(), "cannot open");
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    bad(path.string(), std::string("not valid JSON: ") + e.what());
  }
  return parse_config(doc, path.parent_path());
}

namespace {

json params_json(const RatesTableParams& p) {
  json j = {{"momenta", vecs_json(p.momenta)}};
  if (!p.transfers.empty()) {
    j["transfers"] = vecs_json(p.transfers);
  }
  return j;
}

json params_json(const ClassicalSimParams& p) {
  json j = {{"trajectories", p.trajectories},     {"initial_momentum", vec_json(p.initial_momentum)},
            {"t_end", p.t_end},                   {"output_interval", p.output_interval},
            {"dt_factor", p.dt_factor},           {"histogram_bins", p.histogram_bins},
            {"histogram_max", p.histogram_max},   {"p_table_max", p.p_table_max},
            {"stationary_fraction", p.stationary_fraction}};
  if (p.fit_direction) {
    j["fit_direction"] = vec_json(*p.fit_direction);
  }
  return j;
}

json params_json(const QlbeEvolveParams& p) {
  return {{"n", p.n},
          {"half_width", p.half_width},
          {"extent", p.extent},
          {"dP_steps", p.dP_steps},
          {"initial_center", vec_json(p.initial_center)},
          {"initial_width", p.initial_width},
          {"initial_phase", vec_json(p.initial_phase)},
          {"t_end", p.t_end},
          {"dt", p.dt},
          {"output_interval", p.output_interval},
          {"cell_rule", p.cell_rule == CellRule::Point ? "point" : "fourth-order"},
          {"kernel", p.kernel == KernelKind::Full ? "full" : "pure-decoherence"},
          {"n_plane", p.n_plane},
          {"snapshots", p.snapshots}};
}

json params_json(const DecoherenceParams& p) {
  return {{"direction", vec_json(p.direction)}, {"separations", p.separations}};
}

json params_json(const RefractionParams& p) { return {{"wavenumbers", p.wavenumbers}}; }

json params_json(const BornCheckParams& p) { return {{"points", p.points}, {"momentum_scale", p.momentum_scale}}; }

json params_json(const DiffusiveParams&) { return json::object(); }

}  // namespace

json to_json(const ScenarioConfig& cfg) {
  return {{"scenario", cfg.scenario()},
          {"seed", cfg.seed},
          {"output", cfg.output.string()},
          {"system", cfg.system_json},
          {"parameters", std::visit([](const auto& p) { return params_json(p); }, cfg.params)}};
}

std::vector<std::string> physics_warnings(const ScenarioConfig& cfg) {
  std::vector<std::string> out = cfg.warnings;
  const CollisionSystem& sys = cfg.system;
  if (const auto* born = std::get_if<BornGaussian>(&sys.model())) {
    // Weak coupling needs the scattering length well below the potential range.
    const double f0 = std::abs(born_forward_amplitude(*born));
    if (f0 >= 0.3 * born->s) {
      std::ostringstream msg;
      msg << "system.model: |f_B(0)| = " << f0 << " is comparable to the range " << born->s
          << "; the weak-coupling form is unreliable";
      out.push_back(msg.str());
    }
  }
  if (const auto* p = std::get_if<ClassicalSimParams>(&cfg.params); p && p->trajectories < 1000) {
    out.emplace_back("parameters.trajectories: fewer than 1000 trajectories; moment estimates will be noisy");
  }
  return out;
}

}  // namespace qlbe::cli
