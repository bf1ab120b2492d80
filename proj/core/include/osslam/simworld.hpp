#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "osslam/detection.hpp"
#include "osslam/geometry.hpp"
#include "osslam/segmentation.hpp"
#include "osslam/slam.hpp"

namespace osslam {

struct DetectionConfig {
  double range = 3.0;          // meters
  double min_range = 0.2;      // meters
  double field_of_view = 1.5707963267948966;  // full cone angle, radians
  double sigma_point = 0.05;   // meters, per axis
  /// Embedding noise magnitude; each of the D components gets sigma_emb / sqrt(D)
  /// so the expected noise norm is sigma_emb regardless of dimension.
  double sigma_emb = 0.1;
};

struct WorldConfig {
  int objects = 12;
  int classes = 7;
  int dim = 32;
  Eigen::Vector3d extent_min{-6.0, -2.0, -0.2};
  Eigen::Vector3d extent_max{6.0, 7.2, 0.4};
  double min_prototype_angle = 1.0471975511965976;  // 60 degrees
  /// Objects placed apart from each other and from the circuit.
  double min_object_separation = 1.0;
  double min_path_clearance = 0.3;
  /// Keyframes of one loop that must see each object (0 disables the check).
  int min_views = 10;
  /// Groups of distinct-class objects packed within close_spacing of a seed object.
  int close_groups = 0;
  int close_group_size = 2;
  double close_spacing = 0.15;
  DetectionConfig detection;

  void validate() const;
};

struct WorldObject {
  Point3 position = Point3::Zero();
  int class_id = 0;
};

struct World {
  std::vector<WorldObject> objects;
  Eigen::MatrixXd prototypes;          // K x D, unit rows
  Eigen::VectorXd background;          // D, unit
  DetectionConfig detection;

  Eigen::VectorXd prototype(int class_id) const { return prototypes.row(class_id).transpose(); }
};

struct TrajectoryConfig {
  int loops = 3;
  int keyframes_per_loop = 500;
  double path_length = 21.7;  // meters per loop
  double aspect = 0.6;        // minor / major axis of the elliptical circuit
  double rate = 5.0;          // keyframes per second
};

/// Closed elliptical circuit starting at the identity heading +x, repeated.
std::vector<TimedPose> generate_trajectory(const TrajectoryConfig& config);

/// Objects are uniform in the extent box; when viewpoints are given every
/// object must be detectable from at least min_views of them.
World generate_world(const WorldConfig& config, std::uint64_t seed, std::span<const Pose3> viewpoints = {});

struct NoiseModel {
  /// sigma x, y, z (meters), roll, pitch, yaw (radians).
  Eigen::Matrix<double, 6, 1> base_sigmas = Eigen::Matrix<double, 6, 1>::Constant(0.001);
  double multiplier = 1.0;

  /// Covariance in the rotation-first tangent.
  Mat6 covariance() const;
  void validate() const;
};

std::vector<Odometry> corrupt_odometry(std::span<const Pose3> true_relatives, const NoiseModel& noise,
                                       std::uint64_t seed);

struct SimulatedDetections {
  std::vector<ObjectDetection> detections;
  std::vector<int> object_ids;
};

bool is_visible(const DetectionConfig& config, const Pose3& pose, const Point3& object);

SimulatedDetections simulate_detections(const World& world, const Pose3& pose, const DetectionConfig& config,
                                        std::uint64_t seed);

struct GridConfig {
  int height = 32;
  int width = 32;
  int heads = 6;
  int patch_size = 8;
  CameraIntrinsics intrinsics;
  double object_size = 0.4;      // meters, square side
  double feature_noise = 0.3;    // expected noise norm per patch
  double object_attention_min = 0.8;
  double object_attention_max = 1.0;
  double background_attention_max = 0.2;
  double near_clip = 0.1;
};

struct SyntheticGrid {
  FeatureGrid grid;
  std::vector<int> object_ids;     // visible objects, one mask each
  std::vector<BinaryMask> masks;
};

/// Body frame is x forward, y left, z up; the camera looks along body x.
Point3 body_to_optical(const Point3& body);
Point3 optical_to_body(const Point3& optical);

SyntheticGrid synthesize_feature_grid(const World& world, const Pose3& pose, const GridConfig& config,
                                      std::uint64_t seed);

struct Keyframe {
  double timestamp = 0.0;
  Odometry odometry;  // relative to the previous keyframe; identity for the first
  std::vector<ObjectDetection> detections;
};

struct Dataset {
  std::vector<Keyframe> keyframes;
  void validate() const;
};

/// Evaluation-only data kept apart from what the estimator consumes.
struct GroundTruth {
  std::vector<TimedPose> trajectory;
  std::vector<std::vector<int>> object_ids;  // per keyframe, per detection
};

struct ScenarioConfig {
  WorldConfig world;
  TrajectoryConfig trajectory;
  NoiseModel noise;
};

struct Simulation {
  World world;
  Dataset dataset;
  GroundTruth truth;
};

Simulation make_dataset(const ScenarioConfig& config, std::uint64_t seed);

struct ClosedSetConfig {
  /// Object classes are removed from the detector's vocabulary until at
  /// least this fraction of objects is invisible to it.
  double drop_fraction = 0.6;
};

/// One-hot class embeddings from the true labels, minus the dropped classes.
Dataset to_closed_set(const Dataset& dataset, const GroundTruth& truth, const World& world,
                      const ClosedSetConfig& config, std::uint64_t seed);

/// Dead reckoning from the first keyframe.
std::vector<TimedPose> integrate_odometry(const Dataset& dataset, const Pose3& start = Pose3());

}  // namespace osslam
