#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "osslam/association.hpp"
#include "osslam/geometry.hpp"

namespace osslam {

struct Values {
  std::vector<Pose3> poses;
  std::vector<Point3> landmarks;
};

/// Triangular W with W^T W = covariance^-1, so that ||W r||^2 is the
/// squared Mahalanobis norm. Throws NumericalError if covariance is not SPD.
Mat6 sqrt_information(const Mat6& covariance);
Mat3 sqrt_information(const Mat3& covariance);

struct PriorFactor {
  int pose = -1;
  Pose3 mean;
  Mat6 sqrt_info = Mat6::Identity();
};

/// Relative-pose constraint between two keyframes (odometry).
struct BetweenFactor {
  int from = -1;
  int to = -1;
  Pose3 measured;
  Mat6 sqrt_info = Mat6::Identity();
};

struct ObservationFactor {
  int pose = -1;
  int landmark = -1;
  Point3 measured = Point3::Zero();
  Mat3 sqrt_info = Mat3::Identity();
};

/// Max-mixture over candidate landmarks: the error is the smallest
/// component cost 0.5*||r_j||^2 - log(w_j).
struct MixtureObservationFactor {
  int pose = -1;
  std::vector<WeightedLandmark> components;
  Point3 measured = Point3::Zero();
  Mat3 sqrt_info = Mat3::Identity();
};

/// Observation scaled by an expectation-step weight w in (0, 1].
struct WeightedObservationFactor {
  int pose = -1;
  int landmark = -1;
  Point3 measured = Point3::Zero();
  Mat3 sqrt_info = Mat3::Identity();
  double weight = 1.0;
};

using Factor = std::variant<PriorFactor, BetweenFactor, ObservationFactor, MixtureObservationFactor,
                            WeightedObservationFactor>;

std::string_view factor_type_name(const Factor& factor);

struct VariableRef {
  enum class Kind : std::uint8_t { pose, landmark };
  Kind kind = Kind::pose;
  int index = -1;

  int dim() const { return kind == Kind::pose ? 6 : 3; }
  bool operator==(const VariableRef&) const = default;
};

/// Every variable a factor may touch (all mixture components included).
std::vector<VariableRef> factor_variables(const Factor& factor);

/// Whitened residual and Jacobians at a linearization point. Pose Jacobians
/// are w.r.t. the right-perturbation retract.
struct LinearizedFactor {
  int rows = 0;
  Eigen::Matrix<double, 6, 1> residual = Eigen::Matrix<double, 6, 1>::Zero();
  int num_blocks = 0;
  std::array<VariableRef, 2> variables;
  std::array<Eigen::Matrix<double, 6, 6>, 2> jacobians;
  double offset = 0.0;

  double error() const { return 0.5 * residual.head(rows).squaredNorm() + offset; }
};

double factor_error(const Factor& factor, const Values& values);
LinearizedFactor linearize(const Factor& factor, const Values& values);

}  // namespace osslam
