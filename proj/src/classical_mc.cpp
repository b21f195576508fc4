#include "qlbe/classical_mc.hpp"

#include "qlbe/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qlbe {

TrajectoryEnsemble::TrajectoryEnsemble(std::vector<Vec3> momenta, std::uint64_t seed)
    : momenta_(std::move(momenta)), collisions_(momenta_.size(), 0), seed_(seed) {
  streams_.reserve(momenta_.size());
  for (std::size_t i = 0; i < momenta_.size(); ++i) {
    if (!momenta_[i].is_finite()) {
      fail(ErrorKind::InvalidArgument, "trajectory momenta must be finite");
    }
    streams_.emplace_back(seed, i);
  }
}

std::uint64_t TrajectoryEnsemble::total_collisions() const {
  std::uint64_t total = 0;
  for (auto c : collisions_) {
    total += c;
  }
  return total;
}

MomentSnapshot moments(const TrajectoryEnsemble& ens, double tracer_mass, int histogram_bins, double histogram_max) {
  MomentSnapshot s;
  s.time = ens.time();
  s.count = ens.size();
  s.collisions = ens.total_collisions();
  if (ens.size() == 0) {
    return s;
  }
  CompensatedSum mx, my, mz, qx, qy, qz;
  for (const Vec3& P : ens.momenta()) {
    mx.add(P.x);
    my.add(P.y);
    mz.add(P.z);
    qx.add(P.x * P.x);
    qy.add(P.y * P.y);
    qz.add(P.z * P.z);
  }
  const double n = static_cast<double>(ens.size());
  s.mean = {mx.value() / n, my.value() / n, mz.value() / n};
  const Vec3 second{qx.value() / n, qy.value() / n, qz.value() / n};
  s.variance = {second.x - s.mean.x * s.mean.x, second.y - s.mean.y * s.mean.y, second.z - s.mean.z * s.mean.z};
  s.kinetic_energy = (second.x + second.y + second.z) / (2.0 * tracer_mass);
  if (histogram_bins > 0 && histogram_max > 0.0) {
    s.speed_histogram.assign(histogram_bins, 0.0);
    const double width = histogram_max / histogram_bins;
    for (const Vec3& P : ens.momenta()) {
      const auto bin = static_cast<std::size_t>(P.norm() / width);
      if (bin < s.speed_histogram.size()) {
        s.speed_histogram[bin] += 1.0;
      }
    }
    for (auto& h : s.speed_histogram) {
      h /= n * width;
    }
  }
  return s;
}

ClassicalSimulator::ClassicalSimulator(CollisionSystem sys, double p_table_max, int table_nodes) : sys_(std::move(sys)) {
  sigma_max_ = sigma_tot_bound(sys_.model());
  if (is_isotropic(sys_.distribution()) && p_table_max > 0.0) {
    if (table_nodes < 8) {
      fail(ErrorKind::InvalidArgument, "rate table needs >= 8 nodes");
    }
    tabulated_ = true;
    table_step_ = p_table_max / (table_nodes - 1);
    // Two extra nodes so the 4-point stencil never leaves the table.
    table_.resize(table_nodes + 2);
    for (std::size_t i = 0; i < table_.size(); ++i) {
      table_[i] = m_out_cl(sys_, {table_step_ * static_cast<double>(i), 0.0, 0.0});
    }
  }
}

double ClassicalSimulator::rate(const Vec3& P) const {
  if (tabulated_) {
    const double x = P.norm() / table_step_;
    const auto last = static_cast<double>(table_.size() - 3);
    if (x <= last) {
      // Four-point Lagrange interpolation; the rate is even in |P|, so the
      // node below 0 mirrors node 1.
      const int i = std::min(static_cast<int>(x), static_cast<int>(last) - 1);
      const double t = x - i;
      auto at = [&](int k) { return table_[static_cast<std::size_t>(std::abs(k))]; };
      const double f0 = at(i - 1);
      const double f1 = at(i);
      const double f2 = at(i + 1);
      const double f3 = at(i + 2);
      return -t * (t - 1.0) * (t - 2.0) / 6.0 * f0 + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * f1 -
             (t + 1.0) * t * (t - 2.0) / 2.0 * f2 + (t + 1.0) * t * (t - 1.0) / 6.0 * f3;
    }
  }
  return m_out_cl(sys_, P);
}

Vec3 ClassicalSimulator::sample_direction(const Vec3& p_rel, RngStream& rng) const {
  const double k = p_rel.norm();
  const double phi = 2.0 * kPi * rng.uniform();
  double c = 0.0;
  if (std::holds_alternative<ConstantSWave>(sys_.model())) {
    c = 2.0 * rng.uniform() - 1.0;
  } else if (const auto* born = std::get_if<BornGaussian>(&sys_.model())) {
    // |f|^2 ~ exp(-lambda u) with u = 1 - cos(theta) in [0, 2].
    const double lambda = 2.0 * k * k * born->s * born->s;
    const double U = rng.uniform();
    const double u = lambda > 1e-12 ? -std::log1p(U * std::expm1(-2.0 * lambda)) / lambda : 2.0 * U;
    c = 1.0 - std::clamp(u, 0.0, 2.0);
  } else {
    const auto& hs = std::get<HardSphere>(sys_.model());
    const PartialWaves pw = hard_sphere_partial_waves(hs, k);
    constexpr int kNodes = 512;
    std::array<double, kNodes> density;
    std::array<double, kNodes> cdf;
    const double h = 2.0 / (kNodes - 1);
    for (int i = 0; i < kNodes; ++i) {
      density[i] = std::norm(pw.amplitude(-1.0 + h * i));
    }
    cdf[0] = 0.0;
    for (int i = 1; i < kNodes; ++i) {
      cdf[i] = cdf[i - 1] + 0.5 * h * (density[i - 1] + density[i]);
    }
    const double target = rng.uniform() * cdf[kNodes - 1];
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    const int i = std::clamp(static_cast<int>(it - cdf.begin()), 1, kNodes - 1);
    // Invert the trapezoid CDF exactly within the cell (linear density).
    const double d0 = density[i - 1];
    const double d1 = density[i];
    const double need = target - cdf[i - 1];
    const double slope = (d1 - d0) / h;
    double x = 0.0;
    if (std::abs(slope) * h < 1e-12 * std::max(d0, 1e-300)) {
      x = d0 > 0.0 ? need / d0 : 0.5 * h;
    } else {
      x = (-d0 + std::sqrt(std::max(0.0, d0 * d0 + 2.0 * slope * need))) / slope;
    }
    c = -1.0 + h * (i - 1) + std::clamp(x, 0.0, h);
  }
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const Vec3 axis = p_rel / k;
  const Frame fr = orthonormal_frame(axis);
  return c * axis + s * std::cos(phi) * fr.e1 + s * std::sin(phi) * fr.e2;
}

CollisionEvent ClassicalSimulator::collide(const Vec3& P, RngStream& rng) const {
  const auto& mp = sys_.masses();
  const double a = mp.m_star() / mp.m();
  const double bP = mp.m_star() / mp.M() * P.norm();
  const auto& dist = sys_.distribution();
  const auto* mb = std::get_if<MaxwellBoltzmann>(&dist);
  // Proposal density mu(p0) * envelope(p0) with envelope >= |rel| sigma_tot.
  // Maxwellian: envelope = (a |p0 - c| + a |c| + bP) sigma_max, drawn as a
  // mixture of the size-biased and the plain Maxwellian around c = mV.
  // Tabulated: |p0| <= p_max gives a constant envelope.
  const Vec3 c = center(dist);
  const double C = a * c.norm() + bP;
  const double pb = thermal_momentum(dist);
  const double mean_abs = 2.0 * pb / std::sqrt(kPi);
  const double p_size_biased = mb != nullptr ? a * mean_abs / (a * mean_abs + C) : 0.0;
  for (;;) {
    Vec3 p0;
    double envelope = 0.0;
    if (mb != nullptr) {
      if (rng.uniform() < p_size_biased) {
        // |x| has density ~ r^3 exp(-r^2 / pb^2): r^2 / pb^2 ~ Gamma(2, 1).
        const double r = pb * std::sqrt(-std::log(rng.uniform()) - std::log(rng.uniform()));
        const double ct = 2.0 * rng.uniform() - 1.0;
        const double phi = 2.0 * kPi * rng.uniform();
        const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        p0 = c + r * Vec3{st * std::cos(phi), st * std::sin(phi), ct};
      } else {
        p0 = sample(dist, rng);
      }
      envelope = (a * (p0 - c).norm() + C) * sigma_max_;
    } else {
      p0 = sample(dist, rng);
      envelope = (a * support_radius(dist) + bP) * sigma_max_;
    }
    const Vec3 r = rel(p0, P, mp);
    const double k = r.norm();
    const double weight = k * sigma_tot(sys_.model(), k);
    if (weight > envelope * (1.0 + 1e-12)) {
      fail(ErrorKind::EnvelopeExceeded, "flux weight " + std::to_string(weight) + " above envelope " +
                                            std::to_string(envelope));
    }
    if (rng.uniform() * envelope < weight) {
      const Vec3 n = sample_direction(r, rng);
      return {p0, n, P, P + r - k * n};
    }
  }
}

std::vector<double> ClassicalSimulator::rates(const TrajectoryEnsemble& ens, int threads) const {
  std::vector<double> R(ens.size());
  parallel_for(ens.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      R[i] = rate(ens.momenta_[i]);
    }
  });
  return R;
}

void ClassicalSimulator::step(TrajectoryEnsemble& ens, double dt, int threads) const {
  if (!(dt > 0.0)) {
    fail(ErrorKind::InvalidArgument, "time step must be > 0");
  }
  const std::vector<double> R = rates(ens, threads);
  for (std::size_t i = 0; i < R.size(); ++i) {
    if (R[i] * dt > kMaxRateStep) {
      fail(ErrorKind::StepTooLarge, "dt R = " + std::to_string(R[i] * dt) + " exceeds " + std::to_string(kMaxRateStep) +
                                        " for trajectory " + std::to_string(i));
    }
  }
  parallel_for(ens.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      RngStream& rng = ens.streams_[i];
      if (rng.uniform() < -std::expm1(-R[i] * dt)) {
        ens.momenta_[i] = collide(ens.momenta_[i], rng).P_after;
        ++ens.collisions_[i];
      }
    }
  });
  ens.time_ += dt;
}

std::vector<MomentSnapshot> ClassicalSimulator::thermalize(TrajectoryEnsemble& ens, double t_end,
                                                            const ThermalizeOptions& opt) const {
  if (!(opt.output_interval > 0.0) || !(opt.dt_factor > 0.0) || opt.dt_factor > kMaxRateStep) {
    fail(ErrorKind::InvalidArgument, "output_interval must be > 0 and dt_factor in (0, 0.1]");
  }
  const auto& mb = sys_.distribution();
  double hist_max = opt.histogram_max;
  if (hist_max <= 0.0) {
    const auto* g = std::get_if<MaxwellBoltzmann>(&mb);
    const double thermal = g != nullptr ? std::sqrt(sys_.masses().M() / g->beta()) : sys_.p_beta();
    hist_max = 5.0 * thermal;
  }
  std::vector<MomentSnapshot> series;
  series.push_back(moments(ens, sys_.masses().M(), opt.histogram_bins, hist_max));
  double next_output = ens.time() + opt.output_interval;
  const double eps = 1e-12 * std::max(1.0, t_end);
  while (ens.time() < t_end - eps) {
    const std::vector<double> R = rates(ens, opt.threads);
    const double r_max = R.empty() ? 0.0 : *std::max_element(R.begin(), R.end());
    double dt = r_max > 0.0 ? opt.dt_factor / r_max : next_output - ens.time();
    dt = std::min({dt, next_output - ens.time(), t_end - ens.time()});
    step(ens, dt, opt.threads);
    if (ens.time() >= next_output - eps || ens.time() >= t_end - eps) {
      series.push_back(moments(ens, sys_.masses().M(), opt.histogram_bins, hist_max));
      next_output += opt.output_interval;
    }
  }
  return series;
}

DriftDiffusionFit fit_drift_diffusion(std::span<const MomentSnapshot> series, const Vec3& direction,
                                      double stationary_fraction) {
  if (series.size() < 4) {
    fail(ErrorKind::FitIllConditioned, "need at least 4 snapshots");
  }
  const double dn = direction.norm();
  if (!(dn > 0.0)) {
    fail(ErrorKind::InvalidArgument, "fit direction must be nonzero");
  }
  const Vec3 u = direction / dn;
  auto projected_var = [&](const MomentSnapshot& s) {
    return u.x * u.x * s.variance.x + u.y * u.y * s.variance.y + u.z * u.z * s.variance.z;
  };
  auto mean_var = [](const MomentSnapshot& s) { return (s.variance.x + s.variance.y + s.variance.z) / 3.0; };

  // Weighted log-linear fit of the projected mean while it stays well above
  // its standard error.
  const double t0 = series.front().time;
  const double m0 = dot(series.front().mean, u);
  if (!(m0 > 0.0)) {
    fail(ErrorKind::FitIllConditioned, "initial mean momentum along the fit direction must be positive");
  }
  double sw = 0.0, st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  double last_log = std::log(m0);
  std::size_t used = 0;
  for (const auto& s : series) {
    const double m = dot(s.mean, u);
    const double var = projected_var(s);
    const double se = s.count > 0 ? std::sqrt(std::max(var, 0.0) / static_cast<double>(s.count)) : 0.0;
    if (!(m > 5.0 * se) || !(m > 0.0)) {
      break;
    }
    const double w = se > 0.0 ? (m * m) / (se * se) : 1e12;
    const double t = s.time - t0;
    const double y = std::log(m);
    sw += w;
    st += w * t;
    sy += w * y;
    stt += w * t * t;
    sty += w * t * y;
    last_log = y;
    ++used;
  }
  DriftDiffusionFit fit;
  fit.points_used = used;
  fit.efolds = std::log(m0) - last_log;
  if (used < 3 || fit.efolds < 2.0) {
    fail(ErrorKind::FitIllConditioned, "mean decay covers " + std::to_string(fit.efolds) + " e-folds (need >= 2)");
  }
  const double det = sw * stt - st * st;
  fit.eta_hat = -(sw * sty - st * sy) / det;

  // Stationary variance over the final fraction of the run.
  const auto tail = std::max<std::size_t>(1, static_cast<std::size_t>(stationary_fraction * series.size()));
  CompensatedSum var_sum;
  for (std::size_t i = series.size() - tail; i < series.size(); ++i) {
    var_sum.add(mean_var(series[i]));
  }
  fit.Dpp_hat = fit.eta_hat * var_sum.value() / static_cast<double>(tail);

  // Var(t) = (D / eta)(1 - exp(-2 eta t)) for an ensemble started at one point.
  CompensatedSum xy;
  CompensatedSum xx;
  for (const auto& s : series) {
    const double x = -std::expm1(-2.0 * fit.eta_hat * (s.time - t0)) / fit.eta_hat;
    xy.add(x * mean_var(s));
    xx.add(x * x);
  }
  fit.Dpp_growth = xx.value() > 0.0 ? xy.value() / xx.value() : 0.0;
  return fit;
}

}  // namespace qlbe
