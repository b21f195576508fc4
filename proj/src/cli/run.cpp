#include "qlbe/classical_mc.hpp"
#include "qlbe/cli.hpp"
#include "qlbe/errors.hpp"
#include "qlbe/limits.hpp"
#include "qlbe/statistics.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <concepts>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#ifndef QLBE_VERSION
#define QLBE_VERSION "unknown"
#endif

namespace qlbe::cli {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

int exit_code(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    return is_numerical(err->kind()) ? 3 : 2;
  }
  return 2;
}

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// RFC 4180 table: CRLF line ends, numbers at 17 significant digits.
class Csv {
 public:
  explicit Csv(std::initializer_list<std::string_view> header) {
    bool first = true;
    for (auto h : header) {
      text_ += first ? "" : ",";
      text_ += h;
      first = false;
    }
    text_ += "\r\n";
  }

  template <class... T>
  void row(const T&... cells) {
    bool first = true;
    ((text_ += first ? "" : ",", text_ += cell(cells), first = false), ...);
    text_ += "\r\n";
  }

  const std::string& text() const { return text_; }

 private:
  static std::string cell(double x) { return num(x); }
  template <std::integral I>
  static std::string cell(I x) {
    return std::to_string(x);
  }

  std::string text_;
};

// Only plain file names are accepted, so nothing lands outside the directory.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) {
      fail(ErrorKind::Config, "output: cannot create " + dir_.string() + ": " + ec.message());
    }
  }

  void write(const std::string& name, const std::string& text, bool record = true) {
    const std::filesystem::path p(name);
    if (name.empty() || p.has_parent_path() || p.is_absolute() || name == "." || name == "..") {
      throw std::logic_error("output name must be a bare file name: " + name);
    }
    std::ofstream out(dir_ / p, std::ios::binary | std::ios::trunc);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
      fail(ErrorKind::Config, "output: cannot write " + (dir_ / p).string());
    }
    if (record) {
      files_.push_back({name, sha256_hex(text), text.size()});
    }
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  const std::vector<OutputFile>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<OutputFile> files_;
};

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

// Tagged failure so the caller can still name the scenario.
template <class F>
auto in_scenario(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), name + ": " + std::string(e.what()).substr(to_string(e.kind()).size() + 2));
  }
}

json run_rates_table(const CollisionSystem& sys, const RatesTableParams& p, OutputDir& out) {
  Csv rates({"Px", "Py", "Pz", "m_out_cl", "m_out_cl_error", "energy_shift"});
  for (const Vec3& P : p.momenta) {
    const RateEstimate r = m_out_cl_estimate(sys, P);
    rates.row(P.x, P.y, P.z, r.value, r.est_error, energy_shift(sys, P));
  }
  out.write("rates.csv", rates.text());
  json metrics = {{"momenta", p.momenta.size()}};
  if (!p.transfers.empty()) {
    Csv gain({"Px", "Py", "Pz", "Qx", "Qy", "Qz", "m_in_cl", "m_in_quantum_re", "m_in_quantum_im",
              "m_in_quantum_error"});
    double worst = 0.0;
    for (const Vec3& P : p.momenta) {
      for (const Vec3& Q : p.transfers) {
        const double cl = m_in_cl(sys, P, Q);
        const ComplexRate q = m_in_quantum(sys, P, P, Q);
        gain.row(P.x, P.y, P.z, Q.x, Q.y, Q.z, cl, q.value.real(), q.value.imag(), q.est_error);
        if (cl > 0.0) {
          worst = std::max(worst, std::abs(q.value - cl) / cl);
        }
      }
    }
    out.write("gain.csv", gain.text());
    metrics["max_diagonal_relative_gap"] = worst;
  }
  return metrics;
}

json run_classical(const CollisionSystem& sys, const ClassicalSimParams& p, std::uint64_t seed, int threads,
                   OutputDir& out) {
  const double M = sys.masses().M();
  double tracer_scale = 0.0;
  if (const auto* mb = std::get_if<MaxwellBoltzmann>(&sys.distribution())) {
    tracer_scale = std::sqrt(M / mb->beta()) + M * mb->drift().norm();
  } else {
    tracer_scale = sys.p_beta() * std::sqrt(M / sys.masses().m());
  }
  const double table_max = p.p_table_max > 0.0 ? p.p_table_max : 12.0 * tracer_scale + p.initial_momentum.norm();
  const ClassicalSimulator sim(sys, table_max);
  TrajectoryEnsemble ens(std::vector<Vec3>(p.trajectories, p.initial_momentum), seed);
  ThermalizeOptions opt;
  opt.output_interval = p.output_interval;
  opt.dt_factor = p.dt_factor;
  opt.histogram_bins = p.histogram_bins;
  // Momentum-magnitude histogram range, fixed here so the bin edges can be written.
  opt.histogram_max = p.histogram_max > 0.0 ? p.histogram_max : 5.0 * tracer_scale;
  opt.threads = threads;
  const auto series = sim.thermalize(ens, p.t_end, opt);

  Csv moments({"time", "count", "mean_x", "mean_y", "mean_z", "var_x", "var_y", "var_z", "kinetic_energy",
               "collisions"});
  Csv hist({"time", "P_lo", "P_hi", "density"});
  const double width = opt.histogram_max / opt.histogram_bins;
  for (const MomentSnapshot& s : series) {
    moments.row(s.time, s.count, s.mean.x, s.mean.y, s.mean.z, s.variance.x, s.variance.y, s.variance.z,
                s.kinetic_energy, s.collisions);
    for (std::size_t b = 0; b < s.speed_histogram.size(); ++b) {
      hist.row(s.time, static_cast<double>(b) * width, static_cast<double>(b + 1) * width, s.speed_histogram[b]);
    }
  }
  out.write("moments.csv", moments.text());
  out.write("momentum_histogram.csv", hist.text());

  std::vector<double> speeds;
  speeds.reserve(ens.size());
  for (const Vec3& P : ens.momenta()) {
    speeds.push_back(P.norm() / M);
  }

  const MomentSnapshot& last = series.back();
  json metrics = {{"final_time", last.time},
                  {"final_kinetic_energy", last.kinetic_energy},
                  {"total_collisions", ens.total_collisions()}};
  if (const auto* mb = std::get_if<MaxwellBoltzmann>(&sys.distribution()); mb && mb->drift() == Vec3{}) {
    const double target = 1.5 / mb->beta();
    metrics["equilibrium_kinetic_energy"] = target;
    metrics["kinetic_energy_relative_gap"] = std::abs(last.kinetic_energy - target) / target;
    const double sigma = std::sqrt(1.0 / (mb->beta() * M));
    const double D = ks_statistic(speeds, [&](double v) { return maxwell_speed_cdf(v, sigma); });
    metrics["ks_statistic"] = D;
    metrics["ks_critical_1pct"] = ks_critical_1pct(speeds.size());
  }
  if (p.fit_direction) {
    const DriftDiffusionFit fit = fit_drift_diffusion(series, *p.fit_direction, p.stationary_fraction);
    json f = {{"eta_hat", fit.eta_hat},
              {"Dpp_hat", fit.Dpp_hat},
              {"Dpp_growth", fit.Dpp_growth},
              {"efolds", fit.efolds},
              {"points_used", fit.points_used}};
    if (std::holds_alternative<ConstantSWave>(sys.model()) &&
        std::holds_alternative<MaxwellBoltzmann>(sys.distribution())) {
      const DiffusiveCoefficients c = diffusive_coefficients(sys);
      f["eta_closed_form"] = c.eta;
      f["Dpp_closed_form"] = c.Dpp;
    }
    out.write_json("fit.json", f);
    metrics["eta_hat"] = fit.eta_hat;
  }
  return metrics;
}

json run_qlbe(const CollisionSystem& sys, const QlbeEvolveParams& p, int threads, OutputDir& out) {
  const MomentumGrid grid = p.half_width > 0.0 ? MomentumGrid(p.n, p.half_width)
                                               : MomentumGrid::for_system(sys, p.n, p.extent);
  const double h = grid.spacing();
  const Vec3 dP{p.dP_steps[0] * h, p.dP_steps[1] * h, p.dP_steps[2] * h};
  GridOptions gopt;
  gopt.n_plane = p.n_plane;
  gopt.cell_rule = p.cell_rule;
  gopt.kernel = p.kernel;
  gopt.threads = threads;
  const QlbeGenerator gen(sys, grid, dP, gopt);

  CoherenceSector sector(grid, dP);
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const Vec3 P = grid.node(a);
    const double r2 = (P - p.initial_center).norm2() / (p.initial_width * p.initial_width);
    sector.g[a] = std::exp(-0.5 * r2) * std::polar(1.0, dot(p.initial_phase, P));
  }
  // Unit trace for diagonal sectors, unit mass otherwise.
  const double scale = dP == Vec3{} ? std::abs(sector.trace()) : sector.abs_mass();
  for (complex& g : sector.g) {
    g /= scale;
  }

  EvolveOptions eopt;
  eopt.t_end = p.t_end;
  eopt.dt = p.dt;
  eopt.output_interval = p.output_interval;
  eopt.keep_fields = p.snapshots;
  const EvolveResult res = evolve(gen, sector, eopt);

  Csv series({"time", "trace_re", "trace_im", "abs_mass"});
  for (const SectorSample& s : res.series) {
    series.row(s.time, s.trace.real(), s.trace.imag(), s.abs_mass);
  }
  out.write("series.csv", series.text());

  for (std::size_t k = 0; k < res.fields.size(); ++k) {
    const CoherenceSector& f = res.fields[k];
    Csv field({"Px", "Py", "Pz", "g_re", "g_im"});
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const Vec3 P = grid.node(a);
      field.row(P.x, P.y, P.z, f.g[a].real(), f.g[a].imag());
    }
    char stem[32];
    std::snprintf(stem, sizeof stem, "field_%04zu", k);
    out.write(std::string(stem) + ".csv", field.text());
    out.write_json(std::string(stem) + ".json", {{"time", f.time},
                                                 {"n", grid.n()},
                                                 {"spacing", h},
                                                 {"half_width", grid.half_width()},
                                                 {"center", vec_json(grid.center())},
                                                 {"dP", vec_json(dP)},
                                                 {"trace", {f.trace().real(), f.trace().imag()}},
                                                 {"abs_mass", f.abs_mass()}});
  }

  const SectorSample& first = res.series.front();
  const SectorSample& last = res.series.back();
  double mass_growth = 0.0;
  for (std::size_t k = 1; k < res.series.size(); ++k) {
    mass_growth = std::max(mass_growth, res.series[k].abs_mass - res.series[k - 1].abs_mass);
  }
  return {{"normalization_defect", res.normalization_defect},
          {"dt", res.dt},
          {"max_loss", gen.max_loss()},
          {"spacing", h},
          {"half_width", grid.half_width()},
          {"unique_kernel_values", gen.unique_kernel_values()},
          {"trace_drift", std::abs(last.trace - first.trace)},
          {"max_abs_mass_increase", mass_growth}};
}

json run_decoherence(const CollisionSystem& sys, const DecoherenceParams& p, OutputDir& out) {
  const Vec3 n = p.direction / p.direction.norm();
  const double total = static_scattering_rate(sys);
  Csv table({"separation", "F", "F_over_total_rate"});
  for (double d : p.separations) {
    const double F = localization_rate(sys, d * n);
    table.row(d, F, F / total);
  }
  out.write("localization.csv", table.text());
  return {{"total_rate", total}};
}

json run_refraction(const CollisionSystem& sys, const RefractionParams& p, OutputDir& out) {
  Csv table({"K", "n1", "n2", "n2_attenuation", "f_avg_re", "f_avg_im"});
  double worst = 0.0;
  for (double K : p.wavenumbers) {
    const RefractionResult r = refraction_index(sys, K);
    table.row(r.K, r.n1, r.n2, r.n2_attenuation, r.f_avg.real(), r.f_avg.imag());
    if (r.n2 > 0.0) {
      worst = std::max(worst, std::abs(r.n2 - r.n2_attenuation) / r.n2);
    }
  }
  out.write("refraction.csv", table.text());
  return {{"max_n2_route_gap", worst}};
}

json run_born(const CollisionSystem& sys, const BornCheckParams& p, std::uint64_t seed, OutputDir& out) {
  RngStream rng(seed, 0);
  const double scale = p.momentum_scale * sys.p_beta();
  Csv table({"Px", "Py", "Pz", "Qx", "Qy", "Qz", "born_jump_rate", "diagonal_kernel", "relative_gap"});
  double worst = 0.0;
  for (int i = 0; i < p.points; ++i) {
    const Vec3 P{scale * rng.normal(), scale * rng.normal(), scale * rng.normal()};
    Vec3 Q{scale * rng.normal(), scale * rng.normal(), scale * rng.normal()};
    while (Q.norm() <= 1e-3 * scale) {
      Q = {scale * rng.normal(), scale * rng.normal(), scale * rng.normal()};
    }
    const double born = born_jump_rate(sys, Q, P);
    const double kernel = m_in_quantum(sys, P + Q, P + Q, Q).value.real();
    const double gap = born > 0.0 ? std::abs(kernel - born) / born : std::abs(kernel);
    worst = std::max(worst, gap);
    table.row(P.x, P.y, P.z, Q.x, Q.y, Q.z, born, kernel, gap);
  }
  out.write("born.csv", table.text());
  return {{"max_relative_gap", worst}};
}

json run_diffusive(const CollisionSystem& sys, OutputDir& out) {
  const DiffusiveCoefficients c = diffusive_coefficients(sys);
  out.write_json("coefficients.json", {{"eta", c.eta}, {"Dpp", c.Dpp}, {"Dxx", c.Dxx}});
  return {{"eta", c.eta}};
}

}  // namespace

RunReport run(const ScenarioConfig& cfg, const RunOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  OutputDir out(cfg.output);
  const CollisionSystem& sys = cfg.system;
  const int threads = std::max(1, opt.threads);

  json metrics = in_scenario(cfg.scenario(), [&] {
    return std::visit(
        [&](const auto& p) -> json {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, RatesTableParams>) {
            return run_rates_table(sys, p, out);
          } else if constexpr (std::is_same_v<P, ClassicalSimParams>) {
            return run_classical(sys, p, cfg.seed, threads, out);
          } else if constexpr (std::is_same_v<P, QlbeEvolveParams>) {
            return run_qlbe(sys, p, threads, out);
          } else if constexpr (std::is_same_v<P, DecoherenceParams>) {
            return run_decoherence(sys, p, out);
          } else if constexpr (std::is_same_v<P, RefractionParams>) {
            return run_refraction(sys, p, out);
          } else if constexpr (std::is_same_v<P, BornCheckParams>) {
            return run_born(sys, p, cfg.seed, out);
          } else {
            return run_diffusive(sys, out);
          }
        },
        cfg.params);
  });

  const json echo = to_json(cfg);
  json outputs = json::array();
  for (const OutputFile& f : out.files()) {
    outputs.push_back({{"file", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const json manifest = {{"scenario", cfg.scenario()},
                         {"code_version", QLBE_VERSION},
                         {"config_sha256", sha256_hex(echo.dump())},
                         {"seed", cfg.seed},
                         {"threads", threads},
                         {"wall_time_s", wall},
                         {"outputs", outputs},
                         {"metrics", metrics},
                         {"config", echo}};
  RunReport report{out.files(), metrics};
  out.write("manifest.json", manifest.dump(2) + "\n", false);
  return report;
}

}  // namespace qlbe::cli
