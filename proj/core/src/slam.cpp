#include "osslam/slam.hpp"

#include <algorithm>
#include <cmath>

#include "osslam/error.hpp"
#include "osslam/marginals.hpp"

namespace osslam {

SlamSystem::SlamSystem(SlamConfig config) : config_(std::move(config)) {
  config_.association.validate();
  if (config_.optimize_every < 1) throw UsageError("optimize_every must be >= 1");
  if (config_.em_iterations < 1) throw UsageError("em_iterations must be >= 1");
  if (!(config_.prior_sigmas.array() > 0.0).all()) throw UsageError("prior sigmas must be positive");
}

std::vector<Landmark> SlamSystem::landmarks() const {
  std::vector<Landmark> out = snapshot_.landmarks;
  for (auto& lm : out) lm.position = graph_.values().landmarks[lm.id];
  return out;
}

void SlamSystem::propagate_snapshot(const Pose3& new_pose, const Odometry& odometry) {
  // x_new = x * u  =>  delta_new = Ad(u^-1) delta + noise.
  const Mat6 f = odometry.relative.inverse().adjoint();
  Eigen::MatrixXd& p = snapshot_.covariance;
  const Eigen::Index n = p.rows();
  const Mat6 ppp = p.topLeftCorner<6, 6>();
  p.topLeftCorner<6, 6>() = f * ppp * f.transpose() + odometry.covariance;
  if (n > 6) {
    const Eigen::MatrixXd cross = f * p.topRightCorner(6, n - 6);
    p.topRightCorner(6, n - 6) = cross;
    p.bottomLeftCorner(n - 6, 6) = cross.transpose();
  }
  snapshot_.pose = new_pose;
}

int SlamSystem::add_new_landmark(int pose, const ObjectDetection& detection, const Mat3& sqrt_info) {
  const Pose3& x = graph_.values().poses[pose];
  const Point3 world = x.transform_from(detection.point);
  const int id = graph_.add_landmark(world);
  graph_.add_factor(ObservationFactor{pose, id, detection.point, sqrt_info});

  // Push the measurement noise and the pose uncertainty into the new block.
  const Mat3 r = x.rotation_matrix();
  Eigen::Matrix<double, 3, 6> j;
  j << -r * skew(detection.point), r;
  Eigen::MatrixXd& p = snapshot_.covariance;
  const Eigen::Index n = p.rows();
  const Eigen::MatrixXd cross = j * p.topRows(6);
  Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(n + 3, n + 3);
  grown.topLeftCorner(n, n) = p;
  grown.bottomLeftCorner(3, n) = cross;
  grown.topRightCorner(n, 3) = cross.transpose();
  grown.bottomRightCorner<3, 3>() =
      j * p.topLeftCorner<6, 6>() * j.transpose() + r * detection.covariance * r.transpose();
  p = std::move(grown);

  snapshot_.landmarks.push_back(Landmark{id, world, detection.embedding, 1});
  return id;
}

KeyframeReport SlamSystem::add_keyframe(const Odometry& odometry,
                                        std::span<const ObjectDetection> detections) {
  for (const auto& d : detections) validate_detection(d);

  KeyframeReport report;
  if (graph_.num_poses() == 0) {
    report.pose = graph_.add_pose(config_.prior_mean);
    const Mat6 cov = config_.prior_sigmas.array().square().matrix().asDiagonal();
    graph_.add_factor(PriorFactor{report.pose, config_.prior_mean, sqrt_information(cov)});
    snapshot_.pose = config_.prior_mean;
    snapshot_.covariance = cov;
  } else {
    const int prev = graph_.num_poses() - 1;
    const Pose3 initial = graph_.values().poses[prev].compose(odometry.relative);
    report.pose = graph_.add_pose(initial);
    graph_.add_factor(BetweenFactor{prev, report.pose, odometry.relative, sqrt_information(odometry.covariance)});
    propagate_snapshot(initial, odometry);
  }

  report.association = associate_frame(detections, snapshot_, config_.association);
  report.landmarks.assign(detections.size(), -1);

  auto embed = [&](int landmark, const ObjectDetection& d) {
    update_landmark_embedding(snapshot_.landmarks.at(landmark), d.embedding);
  };
  for (std::size_t k = 0; k < detections.size(); ++k) {
    const ObjectDetection& det = detections[k];
    const Mat3 w = sqrt_information(det.covariance);
    const AssociationDecision& decision = report.association.decisions[k];
    const int primary = primary_landmark(decision);
    if (report.association.withheld[k]) continue;
    if (std::holds_alternative<NewLandmark>(decision)) {
      report.landmarks[k] = add_new_landmark(report.pose, det, w);
      continue;
    }
    if (const auto* m = std::get_if<Mixture>(&decision); m && m->components.size() > 1) {
      graph_.add_factor(MixtureObservationFactor{report.pose, m->components, det.point, w});
    } else if (const auto* e = std::get_if<Weighted>(&decision); e && e->components.size() > 1) {
      std::vector<std::size_t> group;
      for (const auto& c : e->components) {
        group.push_back(graph_.add_factor(
            WeightedObservationFactor{report.pose, c.landmark_id, det.point, w, std::max(c.weight, 1e-12)}));
      }
      weighted_groups_.push_back(std::move(group));
    } else {
      graph_.add_factor(ObservationFactor{report.pose, primary, det.point, w});
    }
    embed(primary, det);
    report.landmarks[k] = primary;
  }

  if (++since_solve_ >= config_.optimize_every) report.optimization = optimize();
  return report;
}

OptimizeReport SlamSystem::solve() { return osslam::optimize(graph_, config_.optimizer); }

void SlamSystem::refresh_snapshot_from_graph() {
  const Values& v = graph_.values();
  snapshot_.pose = v.poses.back();
  for (auto& lm : snapshot_.landmarks) lm.position = v.landmarks[lm.id];
  snapshot_.covariance = Marginals(graph_).trailing_covariance();
}

OptimizeReport SlamSystem::optimize() {
  if (config_.association.strategy == Strategy::em && !weighted_groups_.empty()) {
    return em_reweight(config_.em_iterations);
  }
  OptimizeReport r = solve();
  refresh_snapshot_from_graph();
  since_solve_ = 0;
  return r;
}

std::vector<double> expectation_weights(std::span<const double> costs) {
  if (costs.empty()) return {};
  const double best = *std::min_element(costs.begin(), costs.end());
  std::vector<double> w(costs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) total += (w[i] = std::max(std::exp(best - costs[i]), 1e-12));
  for (double& x : w) x = std::min(1.0, x / total);
  return w;
}

void SlamSystem::expectation_step() {
  const Values& v = graph_.values();
  std::vector<double> cost;
  for (const auto& group : weighted_groups_) {
    cost.clear();
    for (std::size_t idx : group) {
      const auto& f = std::get<WeightedObservationFactor>(graph_.factor(idx));
      const Vec3 r = f.sqrt_info * (measurement_model(v.poses[f.pose], v.landmarks[f.landmark]) - f.measured);
      cost.push_back(0.5 * r.squaredNorm());
    }
    const std::vector<double> w = expectation_weights(cost);
    for (std::size_t i = 0; i < group.size(); ++i) graph_.set_weight(group[i], w[i]);
  }
}

OptimizeReport SlamSystem::em_reweight(int iterations) {
  if (iterations < 1) throw UsageError("em iterations must be >= 1");
  OptimizeReport last;
  for (int it = 0; it < iterations; ++it) {
    expectation_step();
    OptimizeReport r = solve();
    if (it == 0) {
      last = std::move(r);
    } else {
      last.final_error = r.final_error;
      last.iterations += r.iterations;
      last.converged = r.converged;
      last.gradient_norm = r.gradient_norm;
      last.error_history.insert(last.error_history.end(), r.error_history.begin(), r.error_history.end());
    }
  }
  refresh_snapshot_from_graph();
  since_solve_ = 0;
  return last;
}

std::optional<OptimizeReport> SlamSystem::finish() {
  if (graph_.num_poses() == 0 || since_solve_ == 0) return std::nullopt;
  return optimize();
}

}  // namespace osslam
