#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace swarmloc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Rigid transform (rotation + translation). The quaternion is always unit
/// norm with w >= 0; the rotation matrix is derived on demand.
class Pose {
 public:
  Pose() : q_(Quat::Identity()), t_(Vec3::Zero()) {}
  Pose(const Quat& q, const Vec3& t);

  static Pose identity() { return Pose(); }
  static Pose from_translation(const Vec3& t) { return Pose(Quat::Identity(), t); }
  /// Z-Y-X intrinsic Euler angles in radians.
  static Pose from_ypr(double yaw, double pitch, double roll, const Vec3& t);

  const Quat& q() const { return q_; }
  const Vec3& t() const { return t_; }
  Mat3 rotation() const { return q_.toRotationMatrix(); }

  /// Maps a point expressed in this pose's body frame into the parent frame.
  Vec3 apply(const Vec3& p) const { return q_ * p + t_; }

 private:
  Quat q_;
  Vec3 t_;
};

/// Unit direction in an observer's body frame.
struct Bearing {
  Vec3 u = Vec3::UnitX();

  /// Normalizes `v`; throws GeomError for (near-)zero vectors.
  static Bearing from_vector(const Vec3& v);
};

/// Unit quaternion with w >= 0.
Quat canonical(const Quat& q);

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);
/// Pose of `p_j` expressed in the frame of `p_i`.
Pose relative(const Pose& p_i, const Pose& p_j);

/// Bearing from `observer` to the world point `target_t`, in the observer body
/// frame. Throws GeomError when the two positions coincide (within 1e-6 m).
Bearing bearing_to(const Pose& observer, const Vec3& target_t);

/// Rotation vector (axis * angle) to unit quaternion.
Quat exp_so3(const Vec3& phi);
/// Unit quaternion to rotation vector with angle in [0, pi].
Vec3 log_so3(const Quat& q);

Mat3 skew(const Vec3& v);

/// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Quat& a, const Quat& b);

}  // namespace swarmloc
