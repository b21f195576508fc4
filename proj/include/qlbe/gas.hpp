#pragma once

#include "qlbe/kinematics.hpp"
#include "qlbe/rng.hpp"

#include <filesystem>
#include <variant>
#include <vector>

namespace qlbe {

// Maxwell-Boltzmann gas of particle mass m at inverse temperature beta,
// drifting with velocity V.
class MaxwellBoltzmann {
 public:
  MaxwellBoltzmann(double m, double beta, const Vec3& V = {});

  double m() const { return m_; }
  double beta() const { return beta_; }
  // Most probable momentum sqrt(2m/beta).
  double p_beta() const { return p_beta_; }
  const Vec3& drift() const { return V_; }
  // Peak momentum m V.
  Vec3 center() const { return m_ * V_; }

  friend bool operator==(const MaxwellBoltzmann&, const MaxwellBoltzmann&) = default;

 private:
  double m_;
  double beta_;
  double p_beta_;
  Vec3 V_;
};

// Isotropic distribution given on a radial grid; linear in |p| between nodes
// and zero beyond the last node. Normalised so that the 3D integral is 1.
class TabulatedIsotropic {
 public:
  TabulatedIsotropic(std::vector<double> p, std::vector<double> weight);

  double density(double p) const;
  // Exact integral of s * density(s) over [a, b].
  double first_moment(double a, double b) const;
  double sample_radius(RngStream& rng) const;

  const std::vector<double>& p() const { return p_; }
  const std::vector<double>& values() const { return mu_; }
  double p_max() const { return p_.back(); }
  // sqrt(2 <p^2> / 3), the MB-equivalent thermal momentum.
  double thermal_momentum() const { return thermal_; }

 private:
  std::vector<double> p_;
  std::vector<double> mu_;
  std::vector<double> cdf_;  // shell mass up to node i
  double thermal_ = 0.0;
};

using GasDistribution = std::variant<MaxwellBoltzmann, TabulatedIsotropic>;

// Reads a two-column CSV (|p|, weight) with a header line.
TabulatedIsotropic load_tabulated_csv(const std::filesystem::path& path);

double mu(const GasDistribution& dist, const Vec3& p);
Vec3 sample(const GasDistribution& dist, RngStream& rng);
// Shift the drift velocity by V. Tabulated distributions are not supported.
GasDistribution boost(const GasDistribution& dist, const Vec3& V);

// Width scale used for quadrature extents (p_beta for MB).
double thermal_momentum(const GasDistribution& dist);
// Point the distribution is centred on.
Vec3 center(const GasDistribution& dist);
// Radius around center() outside which mu is negligible (< e^-64 relative for
// MB) or exactly zero (tabulated).
double support_radius(const GasDistribution& dist);
bool is_isotropic(const GasDistribution& dist);

struct GasSpec {
  GasDistribution distribution;
  double n_gas;

  GasSpec(GasDistribution dist, double density);
};

}  // namespace qlbe
