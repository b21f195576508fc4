#include "qlbe/gas.hpp"

#include "qlbe/errors.hpp"
#include "qlbe/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace qlbe {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Integral of r^k (a + b r) over [r0, r1] for the linear segment through
// (r0, y0), (r1, y1).
double segment_moment(double r0, double r1, double y0, double y1, int k) {
  const double b = (y1 - y0) / (r1 - r0);
  const double a = y0 - b * r0;
  const auto pw = [](double r, int n) { return std::pow(r, n); };
  return a * (pw(r1, k + 1) - pw(r0, k + 1)) / (k + 1) + b * (pw(r1, k + 2) - pw(r0, k + 2)) / (k + 2);
}

}  // namespace

MaxwellBoltzmann::MaxwellBoltzmann(double m, double beta, const Vec3& V) : m_(m), beta_(beta), V_(V) {
  if (!(m > 0.0) || !std::isfinite(m)) {
    fail(ErrorKind::InvalidArgument, "gas mass must be > 0");
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    fail(ErrorKind::InvalidArgument, "beta must be > 0");
  }
  if (!V.is_finite()) {
    fail(ErrorKind::InvalidArgument, "drift velocity must be finite");
  }
  p_beta_ = std::sqrt(2.0 * m / beta);
}

TabulatedIsotropic::TabulatedIsotropic(std::vector<double> p, std::vector<double> weight)
    : p_(std::move(p)), mu_(std::move(weight)) {
  if (p_.size() < 2 || p_.size() != mu_.size()) {
    fail(ErrorKind::InvalidArgument, "tabulated distribution needs >= 2 matching (|p|, weight) rows");
  }
  for (std::size_t i = 0; i < p_.size(); ++i) {
    if (!std::isfinite(p_[i]) || p_[i] < 0.0 || (i > 0 && !(p_[i] > p_[i - 1]))) {
      fail(ErrorKind::InvalidArgument, "tabulated |p| must be finite, >= 0 and strictly increasing");
    }
    if (!std::isfinite(mu_[i]) || mu_[i] < 0.0) {
      fail(ErrorKind::InvalidArgument, "tabulated weights must be finite and >= 0");
    }
  }
  cdf_.assign(p_.size(), 0.0);
  double second = 0.0;
  for (std::size_t i = 1; i < p_.size(); ++i) {
    cdf_[i] = cdf_[i - 1] + 4.0 * kPi * segment_moment(p_[i - 1], p_[i], mu_[i - 1], mu_[i], 2);
    second += 4.0 * kPi * segment_moment(p_[i - 1], p_[i], mu_[i - 1], mu_[i], 4);
  }
  const double total = cdf_.back();
  if (!(total > 0.0)) {
    fail(ErrorKind::InvalidArgument, "tabulated distribution has zero mass");
  }
  for (auto& v : mu_) {
    v /= total;
  }
  for (auto& v : cdf_) {
    v /= total;
  }
  thermal_ = std::sqrt(2.0 * (second / total) / 3.0);
}

double TabulatedIsotropic::density(double r) const {
  if (r < p_.front() || r > p_.back()) {
    return 0.0;
  }
  const auto it = std::upper_bound(p_.begin(), p_.end(), r);
  if (it == p_.end()) {
    return mu_.back();
  }
  const auto i = static_cast<std::size_t>(it - p_.begin());
  const double t = (r - p_[i - 1]) / (p_[i] - p_[i - 1]);
  return mu_[i - 1] + t * (mu_[i] - mu_[i - 1]);
}

double TabulatedIsotropic::first_moment(double a, double b) const {
  a = std::max(a, p_.front());
  b = std::min(b, p_.back());
  double total = 0.0;
  for (std::size_t i = 1; i < p_.size() && a < b; ++i) {
    const double lo = std::max(a, p_[i - 1]);
    const double hi = std::min(b, p_[i]);
    if (lo < hi) {
      total += segment_moment(lo, hi, density(lo), density(hi), 1);
    }
  }
  return total;
}

double TabulatedIsotropic::sample_radius(RngStream& rng) const {
  const double u = rng.uniform();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  auto i = static_cast<std::size_t>(it - cdf_.begin());
  i = std::clamp<std::size_t>(i, 1, p_.size() - 1);
  // Within the segment the radial density is r^2 (a + b r); rejection against
  // r1^2 max(mu).
  const double r0 = p_[i - 1];
  const double r1 = p_[i];
  const double bound = r1 * r1 * std::max(mu_[i - 1], mu_[i]);
  for (;;) {
    const double r = r0 + (r1 - r0) * rng.uniform();
    if (rng.uniform() * bound <= r * r * density(r)) {
      return r;
    }
  }
}

TabulatedIsotropic load_tabulated_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorKind::Config, "cannot open tabulated distribution '" + path.string() + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    fail(ErrorKind::Config, "'" + path.string() + "' is empty (a header line is required)");
  }
  std::vector<double> p;
  std::vector<double> w;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    double a = 0.0;
    double b = 0.0;
    std::string extra;
    if (!(fields >> a >> b) || (fields >> extra)) {
      fail(ErrorKind::Config, path.string() + ":" + std::to_string(row) + ": expected two numeric columns");
    }
    p.push_back(a);
    w.push_back(b);
  }
  return TabulatedIsotropic(std::move(p), std::move(w));
}

double mu(const GasDistribution& dist, const Vec3& p) {
  return std::visit(Overloaded{
                        [&](const MaxwellBoltzmann& g) {
                          const double pb = g.p_beta();
                          const double norm = 1.0 / (std::pow(kPi, 1.5) * pb * pb * pb);
                          return norm * std::exp(-(p - g.center()).norm2() / (pb * pb));
                        },
                        [&](const TabulatedIsotropic& g) { return g.density(p.norm()); },
                    },
                    dist);
}

Vec3 sample(const GasDistribution& dist, RngStream& rng) {
  return std::visit(Overloaded{
                        [&](const MaxwellBoltzmann& g) {
                          const double sd = g.p_beta() / std::sqrt(2.0);
                          const double x = rng.normal();
                          const double y = rng.normal();
                          const double z = rng.normal();
                          return g.center() + sd * Vec3{x, y, z};
                        },
                        [&](const TabulatedIsotropic& g) {
                          const double r = g.sample_radius(rng);
                          const double c = 2.0 * rng.uniform() - 1.0;
                          const double phi = 2.0 * kPi * rng.uniform();
                          const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
                          return r * Vec3{s * std::cos(phi), s * std::sin(phi), c};
                        },
                    },
                    dist);
}

GasDistribution boost(const GasDistribution& dist, const Vec3& V) {
  if (const auto* g = std::get_if<MaxwellBoltzmann>(&dist)) {
    return MaxwellBoltzmann(g->m(), g->beta(), g->drift() + V);
  }
  fail(ErrorKind::UnsupportedVariant, "boost is only defined for Maxwell-Boltzmann gases");
}

double thermal_momentum(const GasDistribution& dist) {
  return std::visit(Overloaded{
                        [](const MaxwellBoltzmann& g) { return g.p_beta(); },
                        [](const TabulatedIsotropic& g) { return g.thermal_momentum(); },
                    },
                    dist);
}

Vec3 center(const GasDistribution& dist) {
  if (const auto* g = std::get_if<MaxwellBoltzmann>(&dist)) {
    return g->center();
  }
  return {};
}

double support_radius(const GasDistribution& dist) {
  return std::visit(Overloaded{
                        [](const MaxwellBoltzmann& g) { return 8.0 * g.p_beta(); },
                        [](const TabulatedIsotropic& g) { return g.p_max(); },
                    },
                    dist);
}

bool is_isotropic(const GasDistribution& dist) {
  if (const auto* g = std::get_if<MaxwellBoltzmann>(&dist)) {
    return g->drift() == Vec3{};
  }
  return true;
}

GasSpec::GasSpec(GasDistribution dist, double density) : distribution(std::move(dist)), n_gas(density) {
  if (!(n_gas >= 0.0) || !std::isfinite(n_gas)) {
    fail(ErrorKind::InvalidArgument, "gas density must be finite and >= 0");
  }
}

}  // namespace qlbe
