#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>

namespace qlbe {

// Internal units: hbar = k_B = 1. Every momentum, mass, length and time in
// this library is dimensionless in that system.
struct Units {
  static constexpr double hbar = 1.0;
  static constexpr double kB = 1.0;
  std::string mass_unit = "unspecified";
  std::string momentum_unit = "unspecified";
};

// Cartesian 3-vector. Used for momenta, velocities and position offsets.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  constexpr double norm2() const { return x * x + y * y + z * z; }
  bool is_finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

using MomentumVector = Vec3;

constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
constexpr Vec3 operator/(const Vec3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// Gas mass m, tracer mass M and the cached reduced mass m* = mM/(M+m).
class MassPair {
 public:
  MassPair(double gas_mass, double tracer_mass);

  double m() const { return m_; }
  double M() const { return M_; }
  double m_star() const { return m_star_; }
  // m/M, the parameter every limiting form is organised around.
  double ratio() const { return m_ / M_; }

 private:
  double m_;
  double M_;
  double m_star_;
};

inline constexpr double kAxisEpsilon = 1e-12;

// Relative momentum of a gas particle p and tracer P: (m*/m) p - (m*/M) P.
inline Vec3 rel(const Vec3& p, const Vec3& P, const MassPair& masses) {
  const double a = masses.m_star() / masses.m();
  const double b = masses.m_star() / masses.M();
  return {a * p.x - b * P.x, a * p.y - b * P.y, a * p.z - b * P.z};
}

struct ParallelSplit {
  Vec3 parallel;
  Vec3 perpendicular;
};

// Split v into components along and across axis. Throws ZeroAxis when
// |axis| < eps.
ParallelSplit decompose_parallel(const Vec3& v, const Vec3& axis, double eps = kAxisEpsilon);

struct Frame {
  Vec3 e1;
  Vec3 e2;
};

// Deterministic orthonormal pair spanning the plane normal to axis, with
// (e1, e2, axis/|axis|) right handed. Throws ZeroAxis.
Frame orthonormal_frame(const Vec3& axis, double eps = kAxisEpsilon);

}  // namespace qlbe
