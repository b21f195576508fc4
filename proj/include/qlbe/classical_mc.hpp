#pragma once

#include "qlbe/rates.hpp"
#include "qlbe/rng.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace qlbe {

// Largest admissible collision probability scale R dt per step.
inline constexpr double kMaxRateStep = 0.1;

struct CollisionEvent {
  Vec3 p0;  // gas momentum before the collision
  Vec3 n;   // outgoing direction of the relative momentum
  Vec3 P_before;
  Vec3 P_after;
};

class TrajectoryEnsemble {
 public:
  // All trajectories start at the given momenta; trajectory i draws from
  // stream i of the master seed.
  TrajectoryEnsemble(std::vector<Vec3> momenta, std::uint64_t seed);

  std::size_t size() const { return momenta_.size(); }
  std::span<const Vec3> momenta() const { return momenta_; }
  std::span<const std::uint64_t> collision_counts() const { return collisions_; }
  std::uint64_t total_collisions() const;
  double time() const { return time_; }
  std::uint64_t seed() const { return seed_; }

 private:
  friend class ClassicalSimulator;

  std::vector<Vec3> momenta_;
  std::vector<std::uint64_t> collisions_;
  std::vector<RngStream> streams_;
  double time_ = 0.0;
  std::uint64_t seed_;
};

struct MomentSnapshot {
  double time = 0.0;
  std::size_t count = 0;
  Vec3 mean;
  Vec3 variance;  // per-component population variance
  double kinetic_energy = 0.0;  // <P^2> / 2M
  std::uint64_t collisions = 0;
  std::vector<double> speed_histogram;  // normalised density per bin
};

struct ThermalizeOptions {
  double output_interval = 1.0;
  // dt = dt_factor / (largest rate in the ensemble).
  double dt_factor = 0.05;
  int histogram_bins = 40;
  double histogram_max = 0.0;  // 0: 5 sqrt(M / beta) or 5 |P| scale
  int threads = 1;
};

// Ensemble moments with compensated sums in trajectory order.
MomentSnapshot moments(const TrajectoryEnsemble& ens, double tracer_mass, int histogram_bins = 0,
                       double histogram_max = 0.0);

// Collision machinery for one system: tabulated loss rate, rejection
// envelope and direction samplers.
class ClassicalSimulator {
 public:
  // Rates for |P| <= p_table_max come from a table (isotropic gases only).
  ClassicalSimulator(CollisionSystem sys, double p_table_max, int table_nodes = 256);

  const CollisionSystem& system() const { return sys_; }
  double rate(const Vec3& P) const;

  // Samples one collision for a tracer at P.
  CollisionEvent collide(const Vec3& P, RngStream& rng) const;

  // Advances every trajectory by dt. Throws StepTooLarge if dt R > 0.1 for
  // any trajectory (checked before anything moves).
  void step(TrajectoryEnsemble& ens, double dt, int threads = 1) const;

  // Steps with dt = dt_factor / max rate until t_end, recording moments at
  // every output_interval (and at the start).
  std::vector<MomentSnapshot> thermalize(TrajectoryEnsemble& ens, double t_end, const ThermalizeOptions& opt) const;

  // Outgoing unit direction for relative momentum p_rel, drawn from |f|^2.
  Vec3 sample_direction(const Vec3& p_rel, RngStream& rng) const;

 private:
  std::vector<double> rates(const TrajectoryEnsemble& ens, int threads) const;

  CollisionSystem sys_;
  bool tabulated_ = false;
  double table_step_ = 0.0;
  std::vector<double> table_;
  double sigma_max_ = 0.0;
};

struct DriftDiffusionFit {
  double eta_hat = 0.0;
  // eta_hat * stationary variance (per component, late-time average).
  double Dpp_hat = 0.0;
  // Least-squares fit of Var(t) = (D / eta)(1 - exp(-2 eta t)).
  double Dpp_growth = 0.0;
  double efolds = 0.0;
  std::size_t points_used = 0;
};

// Friction rate from the decay of the mean momentum along `direction` and the
// matching momentum diffusion. Throws FitIllConditioned when fewer than two
// e-folds of the decay are resolved above noise.
DriftDiffusionFit fit_drift_diffusion(std::span<const MomentSnapshot> series, const Vec3& direction,
                                      double stationary_fraction = 0.25);

}  // namespace qlbe
