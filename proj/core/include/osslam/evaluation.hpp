#pragma once

#include <span>
#include <utility>
#include <vector>

#include "osslam/association.hpp"
#include "osslam/geometry.hpp"
#include "osslam/simworld.hpp"

namespace osslam {

/// Index pairs (est, gt) whose timestamps are nearest neighbours within max_dt.
std::vector<std::pair<std::size_t, std::size_t>> match_timestamps(std::span<const TimedPose> est,
                                                                  std::span<const TimedPose> gt, double max_dt);

/// Rigid transform T minimizing sum |gt_i - T est_i|^2 (no scale). Throws
/// DataError for fewer than 3 correspondences or mismatched sizes.
Pose3 align_points(std::span<const Point3> est, std::span<const Point3> gt);

/// Matches timestamps (half the median ground-truth period) and aligns the
/// translations.
Pose3 align(std::span<const TimedPose> est, std::span<const TimedPose> gt);

struct ApeStats {
  double rmse = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  bool aligned = false;
  std::size_t count = 0;
};

/// Translation error per matched pose, optionally after rigid alignment.
ApeStats ape(std::span<const TimedPose> est, std::span<const TimedPose> gt, bool align_first = true);

struct MapReport {
  std::size_t estimated = 0;
  std::size_t true_objects = 0;
  std::size_t matched = 0;
  double precision = 0.0;
  double recall = 0.0;
  /// False for an empty map, where precision is reported as 0.
  bool precision_defined = false;
};

/// Greedy nearest one-to-one matching: a pair qualifies when closer than
/// tau and the landmark embedding's cosine to the object's class reference
/// exceeds alpha. The class reference is the prototype, or the one-hot class
/// vector when the embedding has one entry per class.
MapReport map_report(std::span<const Landmark> landmarks, const World& world, double tau = 0.3, double alpha = 0.8);

struct AssociationRecord {
  enum class Kind { new_landmark, associated, withheld };
  int keyframe = 0;
  int detection = 0;
  Kind kind = Kind::new_landmark;
  int landmark = -1;
};

struct DaReport {
  std::size_t detections = 0;
  std::size_t associated = 0;
  std::size_t correct = 0;
  std::size_t new_landmarks = 0;
  std::size_t duplicate_landmarks = 0;
  std::size_t withheld = 0;
  double precision = 0.0;  // correct / associated, 0 when nothing was associated
};

/// A landmark stands for the true object of the detection that spawned it;
/// an association is correct when it binds a detection to a landmark that
/// stands for the detection's own object. truth_ids is indexed [keyframe][detection].
DaReport evaluate_associations(std::span<const AssociationRecord> records,
                               const std::vector<std::vector<int>>& truth_ids);

}  // namespace osslam
