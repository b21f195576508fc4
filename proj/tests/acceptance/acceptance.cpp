// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include "qlbe/classical_mc.hpp"
#include "qlbe/cli.hpp"
#include "qlbe/errors.hpp"
#include "qlbe/grid.hpp"
#include "qlbe/limits.hpp"
#include "qlbe/statistics.hpp"

#include "../oracles/oracles.hpp"
#include "../oracles/q_integral.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace qlbe;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0: no runtime limit
  std::function<Outcome()> body;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Vec3 random_vec(std::mt19937_64& gen, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(gen), u(gen), u(gen)};
}

Vec3 in_plane(const Vec3& p, const Vec3& Q) { return p - dot(p, Q) / Q.norm2() * Q; }

complex swave_f0(double sigma) { return {std::sqrt(sigma / (4.0 * kPi)), 0.0}; }

CollisionSystem swave_system(double m, double M, double f0 = 0.3) {
  return CollisionSystem(MassPair(m, M), GasSpec(MaxwellBoltzmann(m, 1.0), 1.0), ConstantSWave{{f0, 0.0}});
}

CollisionSystem hard_sphere_system(double m, double M, double a, double k_max) {
  return CollisionSystem(MassPair(m, M), GasSpec(MaxwellBoltzmann(m, 1.0), 0.5),
                         make_hard_sphere(a, recommended_lmax(a, k_max)));
}

CollisionSystem born_system(double m, double M) {
  const MassPair mp(m, M);
  return CollisionSystem(mp, GasSpec(MaxwellBoltzmann(m, 1.0), 0.7), make_born_gaussian(0.3, 0.6, mp));
}

Outcome dual_formulation() {
  std::mt19937_64 gen(101);
  const double pb = std::sqrt(2.0);
  double worst = 0.0;
  for (const auto& sys : {swave_system(1.0, 2.0, std::sqrt(1.0 / (4.0 * kPi))),
                          hard_sphere_system(1.0, 1.0, 0.8, 14.0 * pb), born_system(1.0, 4.0)}) {
    for (int i = 0; i < 10; ++i) {
      const Vec3 P = random_vec(gen, 1.0);
      const Vec3 Pp = random_vec(gen, 1.0);
      const Vec3 Q = random_vec(gen, 1.5);
      const complex a = m_in_quantum(sys, P, Pp, Q).value;
      const complex b = oracle::quantum_rate_direct(sys, P, Pp, Q);
      worst = std::max(worst, std::abs(a - b) / std::abs(b));
    }
  }
  return {worst <= 1e-4, fmt("max relative difference %.3g over 30 triples (tolerance 1e-4)", worst)};
}

Outcome diagonal_reduction() {
  std::mt19937_64 gen(102);
  const auto sys = hard_sphere_system(1.0, 2.0, 0.8, 14.0 * std::sqrt(2.0));
  double worst = 0.0;
  bool ok = true;
  for (int i = 0; i < 20; ++i) {
    const Vec3 P = random_vec(gen, 1.5);
    const Vec3 Q = random_vec(gen, 1.5);
    const ComplexRate q = m_in_quantum(sys, P, P, Q);
    const RateEstimate c = m_in_cl_estimate(sys, P, Q);
    const double gap = std::abs(q.value - c.value);
    ok = ok && gap <= 1e-6 * c.value + 3.0 * (q.est_error + c.est_error);
    worst = std::max(worst, gap / c.value);
  }
  return {ok, fmt("max relative gap %.3g over 20 points (tolerance 1e-6 plus quadrature error)", worst)};
}

Outcome probability_conservation() {
  QuadratureBudget quad;
  quad.n_plane = 24;
  const auto sys = CollisionSystem(MassPair(1.0, 2.0), GasSpec(MaxwellBoltzmann(1.0, 1.0), 1.0),
                                   ConstantSWave{swave_f0(1.0)}, quad);
  double worst = 0.0;
  for (const Vec3& P : {Vec3{}, Vec3{0.6, -0.2, 0.4}, Vec3{2.0, 1.0, 0.0}}) {
    const double q_max =
        2.0 * (sys.masses().m_star() / sys.masses().m()) * (7.0 * sys.p_beta() + sys.masses().ratio() * P.norm());
    const double total = oracle::integrated_in_rate(sys, P, 32, q_max);
    const double out = m_out_cl(sys, P);
    worst = std::max(worst, std::abs(total - out) / out);
  }
  return {worst <= 0.01, fmt("max relative gap %.3g on a 32^3 transfer grid, 3 momenta (tolerance 1e-2)", worst)};
}

Outcome optical_theorem() {
  const double a = 1.0;
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double k = 0.1 * std::pow(500.0, i / 9.0);
    const ScatteringModel m = make_hard_sphere(a, recommended_lmax(a, k));
    const Vec3 p = k * Vec3{0.6, 0.0, 0.8};
    worst = std::max(worst, std::abs(optical_theorem_residual(m, p)) / (k * sigma_tot(m, p)));
  }
  return {worst < 1e-10, fmt("max relative residual %.3g for k a in [0.1, 50] (tolerance 1e-10)", worst)};
}

Outcome thermalization() {
  const auto sys = swave_system(1.0, 10.0, 0.5);
  const double M = sys.masses().M();
  const ClassicalSimulator sim(sys, 12.0 * std::sqrt(M) + 8.0);
  TrajectoryEnsemble ens(std::vector<Vec3>(10000, Vec3{8.0, 0.0, 0.0}), 7);
  ThermalizeOptions opt;
  opt.output_interval = 5.0;
  const auto series = sim.thermalize(ens, 40.0, opt);
  const double E = series.back().kinetic_energy;
  const double gap = std::abs(E - 1.5) / 1.5;
  std::vector<double> speeds;
  for (const Vec3& P : ens.momenta()) {
    speeds.push_back(P.norm() / M);
  }
  const double D = ks_statistic(speeds, [&](double v) { return maxwell_speed_cdf(v, std::sqrt(1.0 / M)); });
  const double crit = ks_critical_1pct(speeds.size());
  return {gap <= 0.02 && D < crit,
          fmt("<E_kin> off by %.3g (tolerance 2e-2); KS %.4g vs 1%% critical %.4g", gap, D, crit)};
}

Outcome diffusive_limit() {
  const auto sys = swave_system(1.0, 50.0);
  const double M = sys.masses().M();
  const ClassicalSimulator sim(sys, 12.0 * std::sqrt(M) + 15.0);
  TrajectoryEnsemble ens(std::vector<Vec3>(20000, Vec3{15.0, 0.0, 0.0}), 5);
  ThermalizeOptions opt;
  opt.output_interval = 2.0;
  const auto series = sim.thermalize(ens, 150.0, opt);
  const DriftDiffusionFit fit = fit_drift_diffusion(series, {1.0, 0.0, 0.0});
  const DiffusiveCoefficients c = diffusive_coefficients(sys);
  const double eta_gap = std::abs(fit.eta_hat - c.eta) / c.eta;
  const double fdr = fit.Dpp_hat * 1.0 / (fit.eta_hat * M);
  return {eta_gap <= 0.05 && std::abs(fdr - 1.0) <= 0.05,
          fmt("eta_hat off by %.3g; Dpp beta/(eta_hat M) = %.4f (tolerance 5e-2 each)", eta_gap, fdr)};
}

Outcome decoherence_saturation() {
  const auto sys = swave_system(1.0, 1e4);
  const double pb = sys.p_beta();
  const Vec3 n{0.0, 0.6, 0.8};
  const double F0 = localization_rate(sys, {});
  const double total = static_scattering_rate(sys);
  const double far = localization_rate(sys, 1e3 / pb * n);
  const double sat_gap = std::abs(far - total) / total;
  bool monotone = true;
  double prev = 0.0;
  for (int i = 1; i <= 20; ++i) {
    const double F = localization_rate(sys, (0.25 * i / pb) * n);
    monotone = monotone && F >= prev;
    prev = F;
  }
  return {F0 == 0.0 && sat_gap <= 0.01 && monotone,
          fmt("F(0) = %g; saturation gap %.3g (tolerance 1e-2); %s on 20 points", F0, sat_gap,
              monotone ? "monotone" : "NOT monotone")};
}

Outcome pure_decoherence_limit() {
  const auto sys = hard_sphere_system(1.0, 1e4, 0.8, 14.0 * std::sqrt(2.0));
  std::mt19937_64 gen(108);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Vec3 Q = random_vec(gen, 1.5);
    const Vec3 P = random_vec(gen, 1.5);
    const Vec3 p = in_plane(random_vec(gen, 1.5), Q);
    const complex full = L_fn(sys, p, P, Q);
    const complex lim = L_pure_decoherence(sys, p, Q);
    worst = std::max(worst, std::abs(full - lim) / std::abs(lim));
  }
  return {worst <= 1e-3, fmt("max relative difference %.3g on 50 inputs at m/M = 1e-4 (tolerance 1e-3)", worst)};
}

Outcome weak_coupling() {
  const auto sys = born_system(1.0, 1.5);
  const double pb = sys.p_beta();
  std::mt19937_64 gen(109);
  bool ok = true;
  double worst_kernel = 0.0;
  double worst_plane = 0.0;
  const auto& gl = gauss_legendre(64);
  for (int i = 0; i < 20; ++i) {
    const Vec3 P = random_vec(gen, 1.5);
    const Vec3 Q = random_vec(gen, 1.5);
    const double rate = born_jump_rate(sys, Q, P);
    const ComplexRate diag = m_in_quantum(sys, P + Q, P + Q, Q);
    const double gap = std::abs(diag.value - rate);
    ok = ok && gap <= 1e-6 * rate + 3.0 * diag.est_error;
    worst_kernel = std::max(worst_kernel, gap / rate);

    const Frame fr = orthonormal_frame(Q);
    const double half = 8.0 * pb;
    double plane = 0.0;
    for (int a = 0; a < 64; ++a) {
      for (int b = 0; b < 64; ++b) {
        const Vec3 p = half * gl.nodes[a] * fr.e1 + half * gl.nodes[b] * fr.e2;
        plane += half * half * gl.weights[a] * gl.weights[b] * std::norm(L_born(sys, p, P, Q));
      }
    }
    worst_plane = std::max(worst_plane, std::abs(plane - rate) / rate);
  }
  ok = ok && worst_plane <= 1e-8;
  return {ok, fmt("kernel gap %.3g (quadrature tolerance); plane identity %.3g (tolerance 1e-8)", worst_kernel,
                  worst_plane)};
}

Outcome refraction_routes() {
  const double pb = std::sqrt(2.0);
  const double M = 2.0;
  const auto hs = hard_sphere_system(1.0, M, 1.0 / pb, 14.0 * pb + 3.0 * M * 4.0 * pb);
  double worst_route = 0.0;
  for (double v : {0.0, 0.5, 1.0, 2.0, 3.0}) {
    const ForwardAverage fa = forward_average(hs, {M * v * pb, 0.0, 0.0});
    worst_route = std::max(worst_route, fa.difference / std::abs(fa.quadrature));
  }
  double worst_n2 = 0.0;
  for (double K : {0.5, 2.0, 6.0}) {
    const RefractionResult r = refraction_index(hs, K);
    worst_n2 = std::max(worst_n2, std::abs(r.n2 - r.n2_attenuation) / r.n2);
  }
  return {worst_route <= 1e-6 && worst_n2 <= 1e-6,
          fmt("forward-average routes %.3g, n2 routes %.3g (tolerance 1e-6 each)", worst_route, worst_n2)};
}

// Momentum marginals of a diagonal field and of an ensemble on the grid's cells.
std::vector<double> field_marginal(const CoherenceSector& s, int axis) {
  std::vector<double> m(s.grid.n(), 0.0);
  for (std::size_t a = 0; a < s.grid.size(); ++a) {
    m[s.grid.axes(a)[axis]] += s.g[a].real() * s.grid.cell_volume();
  }
  return m;
}

std::vector<double> ensemble_marginal(const TrajectoryEnsemble& ens, const MomentumGrid& grid, int axis) {
  std::vector<double> m(grid.n(), 0.0);
  const double h = grid.spacing();
  for (const Vec3& P : ens.momenta()) {
    const auto i = static_cast<long>(std::floor((P[axis] + grid.half_width() + 0.5 * h) / h));
    if (i >= 0 && i < grid.n()) {
      m[i] += 1.0 / static_cast<double>(ens.size());
    }
  }
  return m;
}

Outcome solver_cross_check() {
  const auto sys = swave_system(1.0, 1.0);
  const MomentumGrid grid(16, 6.0);
  const double h = grid.spacing();
  const double x0 = 1.0;
  const double sig = 0.8;
  const QlbeGenerator gen(sys, grid, {});
  CoherenceSector s(grid, {});
  // Cell averages of the initial Gaussian, so both solvers start from the same histogram.
  auto cell = [&](double c, double mu) {
    return 0.5 * (std::erf((c + 0.5 * h - mu) / (sig * std::sqrt(2.0))) - std::erf((c - 0.5 * h - mu) / (sig * std::sqrt(2.0)))) / h;
  };
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const Vec3 P = grid.node(a);
    s.g[a] = cell(P.x, x0) * cell(P.y, 0.0) * cell(P.z, 0.0);
  }
  const double tau = 1.0 / m_out_cl(sys, {});
  EvolveOptions eopt;
  eopt.t_end = 2.0 * tau;
  eopt.output_interval = tau;
  const EvolveResult res = evolve(gen, s, eopt);
  const double drift = std::abs(res.series.back().trace - res.series.front().trace);

  const std::size_t n_traj = 200000;
  std::vector<Vec3> init(n_traj);
  RngStream rng(7, 999);
  for (Vec3& p : init) {
    p = Vec3{x0 + sig * rng.normal(), sig * rng.normal(), sig * rng.normal()};
  }
  const ClassicalSimulator sim(sys, 12.0);
  TrajectoryEnsemble ens(init, 11);
  const double dt = 0.02 / sim.rate({8.0, 8.0, 8.0});
  double worst_l1 = 0.0;
  for (int k = 1; k <= 2; ++k) {
    const double target = k * tau;
    while (ens.time() < target - 1e-12) {
      sim.step(ens, std::min(dt, target - ens.time()));
    }
    for (int axis = 0; axis < 3; ++axis) {
      const auto a = field_marginal(res.fields[k], axis);
      const auto b = ensemble_marginal(ens, grid, axis);
      double l1 = 0.0;
      for (int i = 0; i < grid.n(); ++i) {
        l1 += std::abs(a[i] - b[i]);
      }
      worst_l1 = std::max(worst_l1, l1);
    }
  }

  // Off-diagonal sector: sum |g| must never grow.
  const MomentumGrid small(12, 7.0);
  const Vec3 dP{2.0 * small.spacing(), 0.0, 0.0};
  const QlbeGenerator off(sys, small, dP);
  CoherenceSector c(small, dP);
  for (std::size_t a = 0; a < small.size(); ++a) {
    const Vec3 P = small.node(a) - Vec3{0.5 * dP.x, 0.0, 0.0};
    c.g[a] = std::exp(-0.5 * P.norm2() / (0.8 * 0.8)) * std::polar(1.0, 0.7 * P.y);
  }
  EvolveOptions oopt;
  oopt.t_end = 2.0 * tau;
  oopt.keep_fields = false;
  const EvolveResult ro = evolve(off, c, oopt);
  double growth = 0.0;
  for (std::size_t k = 1; k < ro.series.size(); ++k) {
    growth = std::max(growth, ro.series[k].abs_mass - ro.series[k - 1].abs_mass);
  }
  return {worst_l1 <= 0.03 && drift <= 1e-3 && growth <= 0.0,
          fmt("marginal L1 %.3g at tau and 2 tau (tolerance 3e-2); trace drift %.3g (1e-3); "
              "off-diagonal sum|g| max step change %.3g (<= 0)",
              worst_l1, drift, growth)};
}

Outcome covariance_hermiticity() {
  const auto sys = hard_sphere_system(1.0, 2.5, 0.8, 14.0 * std::sqrt(2.0));
  const double M = sys.masses().M();
  const double m = sys.masses().m();
  std::mt19937_64 gen(112);
  double worst_cov = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec3 V = random_vec(gen, 0.5);
    const auto boosted = sys.with_gas(GasSpec(boost(sys.distribution(), V), sys.n_gas()));
    const Vec3 Q = random_vec(gen, 1.5);
    const Vec3 P = random_vec(gen, 1.5);
    const Vec3 p = in_plane(random_vec(gen, 1.5), Q);
    const complex lhs = L_fn(sys, p, P - M * V, Q);
    const complex rhs = L_fn(boosted, p + m * in_plane(V, Q), P, Q);
    worst_cov = std::max(worst_cov, std::abs(lhs - rhs) / std::abs(lhs));
  }
  const auto born = born_system(1.0, 1.5);
  double worst_herm = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Vec3 P = random_vec(gen, 1.5);
    const Vec3 Pp = random_vec(gen, 1.5);
    const Vec3 Q = random_vec(gen, 1.5);
    const complex a = m_in_quantum(born, P, Pp, Q).value;
    const complex b = m_in_quantum(born, Pp, P, Q).value;
    worst_herm = std::max(worst_herm, std::abs(a - std::conj(b)) / std::abs(a));
  }
  return {worst_cov <= 1e-12 && worst_herm <= 1e-12,
          fmt("boost identity %.3g on 100 inputs, hermiticity %.3g (tolerance 1e-12 each)", worst_cov, worst_herm)};
}

Outcome determinism() {
  using nlohmann::json;
  const auto root = std::filesystem::temp_directory_path() / "qlbe_acceptance_determinism";
  std::filesystem::remove_all(root);
  const json system = {{"masses", {{"gas", 1.0}, {"tracer", 5.0}}},
                       {"gas", {{"distribution", "maxwell-boltzmann"}, {"beta", 1.0}, {"density", 1.0}}},
                       {"model", {{"type", "hard-sphere"}, {"radius", 0.6}}}};
  const std::vector<json> docs = {
      {{"scenario", "classical-sim"},
       {"seed", 42},
       {"system", system},
       {"parameters", {{"trajectories", 3000}, {"initial_momentum", {6.0, 0.0, 0.0}}, {"t_end", 4.0}}}},
      {{"scenario", "qlbe-evolve"},
       {"seed", 42},
       {"system",
        {{"masses", {{"gas", 1.0}, {"tracer", 1.0}}},
         {"gas", {{"distribution", "maxwell-boltzmann"}, {"beta", 1.0}, {"density", 1.0}}},
         {"model", {{"type", "constant-s-wave"}, {"f0", {0.3, 0.0}}}}}},
       {"parameters", {{"n", 10}, {"half_width", 7.0}, {"initial_width", 0.8}, {"t_end", 0.2}, {"dP_steps", {1, 0, 0}}}}},
      {{"scenario", "born-check"},
       {"seed", 42},
       {"system",
        {{"masses", {{"gas", 1.0}, {"tracer", 5.0}}},
         {"gas", {{"distribution", "maxwell-boltzmann"}, {"beta", 1.0}, {"density", 1.0}}},
         {"model", {{"type", "born-gaussian"}, {"V0", 0.05}, {"range", 1.0}}}}},
       {"parameters", {{"points", 5}}}}};

  bool rerun_identical = true;
  for (const json& doc : docs) {
    cli::ScenarioConfig cfg = cli::parse_config(doc);
    std::vector<std::string> sums[2];
    for (int rep = 0; rep < 2; ++rep) {
      cfg.output = root / (cfg.scenario() + "_" + std::to_string(rep));
      for (const auto& f : cli::run(cfg, {2}).outputs) {
        sums[rep].push_back(f.name + ":" + f.sha256);
      }
    }
    rerun_identical = rerun_identical && sums[0] == sums[1] && !sums[0].empty();
  }

  // Moments across thread counts.
  const auto sys = swave_system(1.0, 5.0);
  const ClassicalSimulator sim(sys, 40.0);
  std::vector<MomentSnapshot> by_threads[3];
  const int counts[3] = {1, 2, 4};
  for (int i = 0; i < 3; ++i) {
    TrajectoryEnsemble ens(std::vector<Vec3>(4000, Vec3{5.0, 0.0, 0.0}), 9);
    ThermalizeOptions opt;
    opt.output_interval = 1.0;
    opt.threads = counts[i];
    by_threads[i] = sim.thermalize(ens, 4.0, opt);
  }
  double worst = 0.0;
  for (int i = 1; i < 3; ++i) {
    for (std::size_t k = 0; k < by_threads[0].size(); ++k) {
      const auto& a = by_threads[0][k];
      const auto& b = by_threads[i][k];
      worst = std::max(worst, std::abs(a.kinetic_energy - b.kinetic_energy) / a.kinetic_energy);
      for (int c = 0; c < 3; ++c) {
        worst = std::max(worst, std::abs(a.mean[c] - b.mean[c]) / std::max(std::abs(a.mean[c]), 1e-300));
        worst = std::max(worst, std::abs(a.variance[c] - b.variance[c]) / a.variance[c]);
      }
    }
  }
  std::filesystem::remove_all(root);
  return {rerun_identical && worst <= 1e-12,
          fmt("reruns %s across 3 scenarios; moments across 1/2/4 threads differ by %.3g (tolerance 1e-12)",
              rerun_identical ? "byte-identical" : "DIFFER", worst)};
}

}  // namespace

int main() {
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  const std::vector<Criterion> criteria = {
      {1, "dual-formulation kernel equality", 120, dual_formulation},
      {2, "diagonal reduction to the classical in-rate", 60, diagonal_reduction},
      {3, "probability conservation of the classical rates", 120, probability_conservation},
      {4, "optical theorem for hard spheres", 10, optical_theorem},
      {5, "thermalization of the classical ensemble", 300, thermalization},
      {6, "diffusive limit friction and fluctuation-dissipation", 600, diffusive_limit},
      {7, "localization rate saturation and monotonicity", 60, decoherence_saturation},
      {8, "heavy-tracer jump operator limit", 10, pure_decoherence_limit},
      {9, "weak-coupling specialization", 60, weak_coupling},
      {10, "refraction index dual routes", 60, refraction_routes},
      {11, "grid solver against the classical ensemble", 600, solver_cross_check},
      {12, "boost covariance and hermiticity", 10, covariance_hermiticity},
      {13, "determinism", 0, determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.budget_s <= 0.0 || secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::string timing = c.budget_s > 0.0 ? fmt("%.1f s of %.0f s", secs, c.budget_s) : fmt("%.1f s", secs);
    std::printf("criterion %2d %s  %s: %s [%s]\n", c.id, pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                timing.c_str());
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
