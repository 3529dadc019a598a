#include "swarmloc/geom.hpp"

#include <cmath>

#include "swarmloc/error.hpp"

namespace swarmloc {

Quat canonical(const Quat& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw GeomError("cannot normalize a zero or non-finite quaternion");
  }
  // Already-unit inputs are kept bit-for-bit so canonical() is idempotent.
  Quat out = std::abs(n - 1.0) < 4e-16 ? q : Quat(q.w() / n, q.x() / n, q.y() / n, q.z() / n);
  if (out.w() < 0.0) {
    out.coeffs() = -out.coeffs();
  }
  return out;
}

Pose::Pose(const Quat& q, const Vec3& t) : q_(canonical(q)), t_(t) {}

Pose Pose::from_ypr(double yaw, double pitch, double roll, const Vec3& t) {
  const Quat q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                 Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                 Eigen::AngleAxisd(roll, Vec3::UnitX());
  return Pose(q, t);
}

Bearing Bearing::from_vector(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 1e-12) || !std::isfinite(n)) {
    throw GeomError("bearing from a zero-length vector");
  }
  return Bearing{v / n};
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.q() * b.q(), a.q() * b.t() + a.t());
}

Pose inverse(const Pose& p) {
  const Quat qi = p.q().conjugate();
  return Pose(qi, -(qi * p.t()));
}

Pose relative(const Pose& p_i, const Pose& p_j) { return compose(inverse(p_i), p_j); }

Bearing bearing_to(const Pose& observer, const Vec3& target_t) {
  const Vec3 d = target_t - observer.t();
  if (d.norm() <= 1e-6) {
    throw GeomError("bearing_to: observer and target positions coincide");
  }
  return Bearing::from_vector(observer.q().conjugate() * d);
}

Quat exp_so3(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  if (theta2 < 1e-16) {
    const Quat q(1.0 - theta2 / 8.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    return canonical(q);
  }
  const double theta = std::sqrt(theta2);
  const double s = std::sin(0.5 * theta) / theta;
  return canonical(Quat(std::cos(0.5 * theta), s * phi.x(), s * phi.y(), s * phi.z()));
}

Vec3 log_so3(const Quat& q_in) {
  const Quat q = canonical(q_in);
  const Vec3 v = q.vec();
  const double vn = v.norm();
  if (vn < 1e-12) {
    return 2.0 * v / q.w();
  }
  const double theta = 2.0 * std::atan2(vn, q.w());
  return (theta / vn) * v;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

double rotation_angle_between(const Quat& a, const Quat& b) {
  return log_so3(a.conjugate() * b).norm();
}

}  // namespace swarmloc
