#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace osslam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Point3 = Eigen::Vector3d;

/// Tangent-space coordinates of SE(3), rotation first: (rx, ry, rz, tx, ty, tz).
using Tangent6 = Eigen::Matrix<double, 6, 1>;

Mat3 skew(const Vec3& v);

namespace so3 {
Eigen::Quaterniond exp(const Vec3& omega);
Vec3 log(const Eigen::Quaterniond& q);
Mat3 right_jacobian(const Vec3& omega);
Mat3 right_jacobian_inverse(const Vec3& omega);
}  // namespace so3

/// Rigid transform in SE(3). The quaternion is renormalized on every
/// construction so composition chains do not drift off the unit sphere.
class Pose3 {
 public:
  Pose3() = default;
  Pose3(const Eigen::Quaterniond& rotation, const Vec3& translation);
  Pose3(const Mat3& rotation, const Vec3& translation);

  static Pose3 identity() { return {}; }
  static Pose3 from_matrix(const Eigen::Matrix4d& m);
  /// Yaw-only rotation (about +z) with the given translation.
  static Pose3 from_yaw(double yaw, const Vec3& translation = Vec3::Zero());

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }
  const Vec3& translation() const { return translation_; }
  Eigen::Matrix4d matrix() const;

  Pose3 compose(const Pose3& other) const;
  Pose3 inverse() const;
  Pose3 operator*(const Pose3& other) const { return compose(other); }

  /// Maps a point from this pose's local frame to the parent frame.
  Point3 transform_from(const Point3& local) const;
  /// Maps a parent-frame point into this pose's local frame.
  Point3 transform_to(const Point3& world) const;

  /// Adjoint in rotation-first tangent coordinates: p * exp(d) = exp(Ad(p) d) * p.
  Mat6 adjoint() const;

  static Pose3 exp(const Tangent6& xi);
  static Tangent6 log(const Pose3& pose);

  /// Right perturbation: this * exp(delta).
  Pose3 retract(const Tangent6& delta) const;
  /// Inverse of retract: log(this^-1 * other).
  Tangent6 local(const Pose3& other) const;

  bool is_approx(const Pose3& other, double tol = 1e-9) const;

 private:
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Vec3 translation_ = Vec3::Zero();
};

inline Pose3 compose(const Pose3& a, const Pose3& b) { return a.compose(b); }
inline Pose3 inverse(const Pose3& p) { return p.inverse(); }
inline Pose3 retract(const Pose3& p, const Tangent6& delta) { return p.retract(delta); }
inline Tangent6 local(const Pose3& a, const Pose3& b) { return a.local(b); }

struct MeasurementJacobians {
  Eigen::Matrix<double, 3, 6> wrt_pose;
  Mat3 wrt_landmark;
};

/// Predicted landmark position in the sensor frame, inverse(pose) * landmark.
/// Jacobians are taken w.r.t. a right perturbation of the pose.
Point3 measurement_model(const Pose3& pose, const Point3& landmark,
                         MeasurementJacobians* jacobians = nullptr);

struct TimedPose {
  double timestamp = 0.0;
  Pose3 pose;
};

/// One pose per line: `t x y z qx qy qz qw`.
void write_trajectory(std::ostream& out, std::span<const TimedPose> trajectory);
std::vector<TimedPose> read_trajectory(std::istream& in);

}  // namespace osslam
