#include "qlbe/kinematics.hpp"

#include "qlbe/errors.hpp"

#include <algorithm>

namespace qlbe {

MassPair::MassPair(double gas_mass, double tracer_mass) : m_(gas_mass), M_(tracer_mass) {
  if (!(gas_mass > 0.0) || !std::isfinite(gas_mass)) {
    fail(ErrorKind::InvalidArgument, "gas mass m must be positive and finite");
  }
  if (!(tracer_mass > 0.0) || !std::isfinite(tracer_mass)) {
    fail(ErrorKind::InvalidArgument, "tracer mass M must be positive and finite");
  }
  m_star_ = m_ * M_ / (M_ + m_);
}

ParallelSplit decompose_parallel(const Vec3& v, const Vec3& axis, double eps) {
  const double a2 = axis.norm2();
  if (!(std::sqrt(a2) >= eps)) {
    fail(ErrorKind::ZeroAxis, "axis norm below threshold");
  }
  const Vec3 par = (dot(v, axis) / a2) * axis;
  return {par, v - par};
}

Frame orthonormal_frame(const Vec3& axis, double eps) {
  const double len = axis.norm();
  if (!(len >= eps)) {
    fail(ErrorKind::ZeroAxis, "axis norm below threshold");
  }
  const Vec3 a = axis / len;
  // Canonical basis vector least aligned with the axis; ties go to the lower index.
  const std::array<double, 3> mag{std::abs(a.x), std::abs(a.y), std::abs(a.z)};
  const auto pick = static_cast<int>(std::min_element(mag.begin(), mag.end()) - mag.begin());
  Vec3 b{pick == 0 ? 1.0 : 0.0, pick == 1 ? 1.0 : 0.0, pick == 2 ? 1.0 : 0.0};
  Vec3 e1 = b - dot(b, a) * a;
  e1 = e1 / e1.norm();
  Vec3 e2 = cross(a, e1);
  e2 = e2 / e2.norm();
  return {e1, e2};
}

}  // namespace qlbe
