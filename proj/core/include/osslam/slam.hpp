#pragma once

#include <optional>
#include <span>
#include <vector>

#include "osslam/association.hpp"
#include "osslam/factor_graph.hpp"
#include "osslam/optimizer.hpp"

namespace osslam {

/// Relative motion between consecutive keyframes; covariance in the
/// rotation-first tangent of the relative pose.
struct Odometry {
  Pose3 relative;
  Mat6 covariance = Mat6::Identity() * 1e-6;
};

struct SlamConfig {
  DAConfig association;
  LMConfig optimizer;
  /// Keyframes between batch solves; association in between uses the
  /// propagated marginals of the last solve.
  int optimize_every = 100;
  /// Expectation-maximization rounds per solve (em strategy only).
  int em_iterations = 1;
  Pose3 prior_mean;
  Tangent6 prior_sigmas = Tangent6::Constant(1e-4);
};

struct KeyframeReport {
  int pose = -1;
  FrameAssociation association;
  /// Landmark bound (or created) for each detection.
  std::vector<int> landmarks;
  std::optional<OptimizeReport> optimization;
};

/// Posterior association weights from per-component costs 0.5*||W r||^2 of
/// one detection; components share the detection's noise, so normalizers cancel.
std::vector<double> expectation_weights(std::span<const double> costs);

/// Incremental front end over a batch back end: every keyframe is associated
/// against a frozen snapshot and materialized as factors; the whole graph is
/// re-solved every `optimize_every` keyframes.
class SlamSystem {
 public:
  explicit SlamSystem(SlamConfig config);

  KeyframeReport add_keyframe(const Odometry& odometry, std::span<const ObjectDetection> detections);

  /// Solves the graph (one EM round set for the em strategy) and refreshes
  /// the association snapshot.
  OptimizeReport optimize();

  /// Alternates E-steps (recompute weights of every soft-associated
  /// detection from the current estimate) and M-steps (optimize).
  OptimizeReport em_reweight(int iterations);

  /// Final solve if any keyframe arrived since the last one.
  std::optional<OptimizeReport> finish();

  const FactorGraph& graph() const { return graph_; }
  const SlamConfig& config() const { return config_; }
  std::vector<Pose3> trajectory() const { return graph_.values().poses; }
  std::vector<Landmark> landmarks() const;
  const EstimateSnapshot& snapshot() const { return snapshot_; }
  /// Factor indices of each soft-associated detection.
  const std::vector<std::vector<std::size_t>>& weighted_groups() const { return weighted_groups_; }

 private:
  OptimizeReport solve();
  void expectation_step();
  void refresh_snapshot_from_graph();
  void propagate_snapshot(const Pose3& new_pose, const Odometry& odometry);
  int add_new_landmark(int pose, const ObjectDetection& detection, const Mat3& sqrt_info);

  SlamConfig config_;
  FactorGraph graph_;
  std::vector<std::vector<std::size_t>> weighted_groups_;
  EstimateSnapshot snapshot_;
  int since_solve_ = 0;
};

}  // namespace osslam
