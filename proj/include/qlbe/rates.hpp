#pragma once

#include "qlbe/gas.hpp"
#include "qlbe/kinematics.hpp"
#include "qlbe/numerics.hpp"
#include "qlbe/scattering.hpp"

namespace qlbe {

struct QuadratureBudget {
  int n_radial = 48;
  int n_angular = 24;
  int n_plane = 48;
  // Half-width of the plane integration square, in thermal momenta.
  double plane_extent = 6.0;
  long mc_samples = 100000;
  double rel_tol = 1e-6;
  // Node-count doublings attempted before giving up.
  int max_doublings = 3;

  void validate() const;
};

class CollisionSystem {
 public:
  CollisionSystem(const MassPair& masses, GasSpec gas, ScatteringModel model, QuadratureBudget quad = {});

  const MassPair& masses() const { return masses_; }
  const GasSpec& gas() const { return gas_; }
  const GasDistribution& distribution() const { return gas_.distribution; }
  const ScatteringModel& model() const { return model_; }
  const QuadratureBudget& quad() const { return quad_; }
  double n_gas() const { return gas_.n_gas; }
  double p_beta() const { return thermal_momentum(gas_.distribution); }
  // Momentum transfers at or below this are treated as Q = 0.
  double eps_Q() const { return 1e-6 * p_beta(); }

  CollisionSystem with_gas(GasSpec gas) const { return {masses_, std::move(gas), model_, quad_}; }
  CollisionSystem with_model(ScatteringModel model) const { return {masses_, gas_, std::move(model), quad_}; }
  CollisionSystem with_quad(QuadratureBudget quad) const { return {masses_, gas_, model_, quad}; }

 private:
  MassPair masses_;
  GasSpec gas_;
  ScatteringModel model_;
  QuadratureBudget quad_;
};

struct RateEstimate {
  double value = 0.0;
  double est_error = 0.0;
};

struct ComplexRate {
  complex value;
  double est_error = 0.0;
};

// Total classical loss rate out of momentum P.
double m_out_cl(const CollisionSystem& sys, const Vec3& P);
RateEstimate m_out_cl_estimate(const CollisionSystem& sys, const Vec3& P);

// Total scattering rate of a static scatterer (M -> infinity kinematics).
double static_scattering_rate(const CollisionSystem& sys);

// Classical rate density for the jump P_f - Q -> P_f.
double m_in_cl(const CollisionSystem& sys, const Vec3& P_f, const Vec3& Q);
RateEstimate m_in_cl_estimate(const CollisionSystem& sys, const Vec3& P_f, const Vec3& Q);

// Jump-operator symbol L(p, P; Q) for p in the plane orthogonal to Q.
complex L_fn(const CollisionSystem& sys, const Vec3& p, const Vec3& P, const Vec3& Q);

// Quantum gain rate coupling <P - Q| rho |P' - Q> into <P| rho |P'>.
ComplexRate m_in_quantum(const CollisionSystem& sys, const Vec3& P, const Vec3& P_prime, const Vec3& Q);

// Single quadrature level with n_plane nodes per axis (no error estimate).
complex m_in_quantum_at(const CollisionSystem& sys, const Vec3& P, const Vec3& P_prime, const Vec3& Q, int n_plane);

// Collisional energy shift E_n(P).
double energy_shift(const CollisionSystem& sys, const Vec3& P);

}  // namespace qlbe
