#pragma once

#include <Eigen/Core>

#include "osslam/geometry.hpp"

namespace osslam {

/// Per-frame object measurement: the latent-space centroid of the object's
/// feature cluster plus its geometric centroid in the sensor frame.
struct ObjectDetection {
  Eigen::VectorXd embedding;
  Point3 point = Point3::Zero();
  Mat3 covariance = Mat3::Identity();
  int area = 0;
};

/// Throws DataError when the embedding is empty/zero/non-finite or the
/// covariance is not symmetric positive definite.
void validate_detection(const ObjectDetection& detection);

}  // namespace osslam
