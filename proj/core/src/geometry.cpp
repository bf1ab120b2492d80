#include "osslam/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "osslam/error.hpp"

namespace osslam {

namespace {
constexpr double kSmallAngle = 1e-5;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

namespace so3 {

Eigen::Quaterniond exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < kSmallAngle) {
    Eigen::Quaterniond q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(theta, omega / theta));
}

Vec3 log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < kSmallAngle) {
    // 2 atan(s/w)/s expanded to second order.
    return (2.0 / q.w()) * (1.0 - s * s / (3.0 * q.w() * q.w())) * v;
  }
  const double theta = 2.0 * std::atan2(s, q.w());
  return (theta / s) * v;
}

Mat3 right_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < kSmallAngle) return Mat3::Identity() - 0.5 * w + (1.0 / 6.0) * w * w;
  const double t2 = theta * theta;
  return Mat3::Identity() - (1.0 - std::cos(theta)) / t2 * w +
         (theta - std::sin(theta)) / (t2 * theta) * w * w;
}

Mat3 right_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < kSmallAngle) return Mat3::Identity() + 0.5 * w + (1.0 / 12.0) * w * w;
  const double coeff =
      1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * w + coeff * w * w;
}

}  // namespace so3

namespace {

// Left Jacobian of SO(3); maps the translational tangent to the translation of exp().
Mat3 se3_v(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < kSmallAngle) return Mat3::Identity() + 0.5 * w + (1.0 / 6.0) * w * w;
  const double t2 = theta * theta;
  return Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * w +
         (theta - std::sin(theta)) / (t2 * theta) * w * w;
}

Mat3 se3_v_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < kSmallAngle) return Mat3::Identity() - 0.5 * w + (1.0 / 12.0) * w * w;
  const double coeff = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) /
                       (theta * theta);
  return Mat3::Identity() - 0.5 * w + coeff * w * w;
}

}  // namespace

Pose3::Pose3(const Eigen::Quaterniond& rotation, const Vec3& translation)
    : rotation_(rotation.normalized()), translation_(translation) {}

Pose3::Pose3(const Mat3& rotation, const Vec3& translation)
    : rotation_(Eigen::Quaterniond(rotation).normalized()), translation_(translation) {}

Pose3 Pose3::from_matrix(const Eigen::Matrix4d& m) {
  return Pose3(Mat3(m.topLeftCorner<3, 3>()), Vec3(m.topRightCorner<3, 1>()));
}

Pose3 Pose3::from_yaw(double yaw, const Vec3& translation) {
  return Pose3(Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ())), translation);
}

Eigen::Matrix4d Pose3::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Pose3 Pose3::compose(const Pose3& other) const {
  return Pose3(rotation_ * other.rotation_, translation_ + rotation_ * other.translation_);
}

Pose3 Pose3::inverse() const {
  const Eigen::Quaterniond inv = rotation_.conjugate();
  return Pose3(inv, -(inv * translation_));
}

Point3 Pose3::transform_from(const Point3& local) const {
  return rotation_ * local + translation_;
}

Point3 Pose3::transform_to(const Point3& world) const {
  return rotation_.conjugate() * (world - translation_);
}

Mat6 Pose3::adjoint() const {
  const Mat3 r = rotation_matrix();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.bottomLeftCorner<3, 3>() = skew(translation_) * r;
  ad.bottomRightCorner<3, 3>() = r;
  return ad;
}

Pose3 Pose3::exp(const Tangent6& xi) {
  const Vec3 omega = xi.head<3>();
  const Vec3 v = xi.tail<3>();
  return Pose3(so3::exp(omega), se3_v(omega) * v);
}

Tangent6 Pose3::log(const Pose3& pose) {
  const Vec3 omega = so3::log(pose.rotation_);
  Tangent6 xi;
  xi.head<3>() = omega;
  xi.tail<3>() = se3_v_inverse(omega) * pose.translation_;
  return xi;
}

Pose3 Pose3::retract(const Tangent6& delta) const { return compose(exp(delta)); }

Tangent6 Pose3::local(const Pose3& other) const { return log(inverse().compose(other)); }

bool Pose3::is_approx(const Pose3& other, double tol) const {
  // q and -q encode the same rotation.
  const double dq = std::min((rotation_.coeffs() - other.rotation_.coeffs()).cwiseAbs().maxCoeff(),
                             (rotation_.coeffs() + other.rotation_.coeffs()).cwiseAbs().maxCoeff());
  return dq <= tol && (translation_ - other.translation_).cwiseAbs().maxCoeff() <= tol;
}

Point3 measurement_model(const Pose3& pose, const Point3& landmark,
                         MeasurementJacobians* jacobians) {
  const Point3 p = pose.transform_to(landmark);
  if (jacobians) {
    jacobians->wrt_pose.leftCols<3>() = skew(p);
    jacobians->wrt_pose.rightCols<3>() = -Mat3::Identity();
    jacobians->wrt_landmark = pose.rotation_matrix().transpose();
  }
  return p;
}

void write_trajectory(std::ostream& out, std::span<const TimedPose> trajectory) {
  char line[256];
  for (const auto& tp : trajectory) {
    const auto& t = tp.pose.translation();
    const auto& q = tp.pose.rotation();
    std::snprintf(line, sizeof(line), "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", tp.timestamp,
                  t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
    out << line;
  }
}

std::vector<TimedPose> read_trajectory(std::istream& in) {
  std::vector<TimedPose> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double t, x, y, z, qx, qy, qz, qw;
    if (!(ss >> t >> x >> y >> z >> qx >> qy >> qz >> qw)) {
      throw DataError("trajectory line " + std::to_string(line_no) +
                      ": expected 't x y z qx qy qz qw'");
    }
    const Eigen::Quaterniond q(qw, qx, qy, qz);
    if (!std::isfinite(q.norm()) || q.norm() < 1e-6) {
      throw DataError("trajectory line " + std::to_string(line_no) + ": degenerate quaternion");
    }
    out.push_back({t, Pose3(q, Vec3(x, y, z))});
  }
  return out;
}

}  // namespace osslam
