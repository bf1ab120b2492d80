#include "osslam/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include <Eigen/Geometry>

#include "osslam/error.hpp"

namespace osslam {

std::vector<std::pair<std::size_t, std::size_t>> match_timestamps(std::span<const TimedPose> est,
                                                                  std::span<const TimedPose> gt, double max_dt) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t j = 0;
  for (std::size_t i = 0; i < est.size() && !gt.empty(); ++i) {
    const double t = est[i].timestamp;
    while (j + 1 < gt.size() && std::abs(gt[j + 1].timestamp - t) <= std::abs(gt[j].timestamp - t)) ++j;
    if (std::abs(gt[j].timestamp - t) <= max_dt) out.emplace_back(i, j);
  }
  return out;
}

Pose3 align_points(std::span<const Point3> est, std::span<const Point3> gt) {
  if (est.size() != gt.size()) throw DataError("alignment needs equally many points");
  if (est.size() < 3) throw DataError("alignment needs at least 3 correspondences");
  Eigen::Matrix3Xd src(3, est.size()), dst(3, gt.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    src.col(static_cast<Eigen::Index>(i)) = est[i];
    dst.col(static_cast<Eigen::Index>(i)) = gt[i];
  }
  return Pose3::from_matrix(Eigen::umeyama(src, dst, false));
}

namespace {

struct Matched {
  std::vector<Point3> est, gt;
};

Matched matched_positions(std::span<const TimedPose> est, std::span<const TimedPose> gt) {
  double period = 0.0;
  if (gt.size() >= 2) {
    std::vector<double> dt;
    for (std::size_t i = 1; i < gt.size(); ++i) dt.push_back(gt[i].timestamp - gt[i - 1].timestamp);
    std::nth_element(dt.begin(), dt.begin() + dt.size() / 2, dt.end());
    period = dt[dt.size() / 2];
  }
  Matched m;
  for (auto [i, j] : match_timestamps(est, gt, 0.5 * period)) {
    m.est.push_back(est[i].pose.translation());
    m.gt.push_back(gt[j].pose.translation());
  }
  return m;
}

}  // namespace

Pose3 align(std::span<const TimedPose> est, std::span<const TimedPose> gt) {
  const Matched m = matched_positions(est, gt);
  return align_points(m.est, m.gt);
}

ApeStats ape(std::span<const TimedPose> est, std::span<const TimedPose> gt, bool align_first) {
  const Matched m = matched_positions(est, gt);
  if (m.est.empty() || m.est.size() != est.size()) throw DataError("trajectories do not match after timestamp association");
  const Pose3 t = align_first ? align_points(m.est, m.gt) : Pose3();

  std::vector<double> err(m.est.size());
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = (t.transform_from(m.est[i]) - m.gt[i]).norm();
  ApeStats s;
  s.aligned = align_first;
  s.count = err.size();
  double sq = 0.0;
  for (double e : err) {
    s.mean += e;
    sq += e * e;
    s.max = std::max(s.max, e);
  }
  s.mean /= err.size();
  s.rmse = std::sqrt(sq / err.size());
  std::sort(err.begin(), err.end());
  const std::size_t n = err.size();
  s.median = n % 2 ? err[n / 2] : 0.5 * (err[n / 2 - 1] + err[n / 2]);
  return s;
}

MapReport map_report(std::span<const Landmark> landmarks, const World& world, double tau, double alpha) {
  MapReport r;
  r.estimated = landmarks.size();
  r.true_objects = world.objects.size();
  const Eigen::Index k = world.prototypes.rows();
  const Eigen::Index d = world.prototypes.cols();

  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    const Eigen::VectorXd& e = landmarks[i].embedding;
    for (std::size_t j = 0; j < world.objects.size(); ++j) {
      const double dist = (landmarks[i].position - world.objects[j].position).norm();
      if (!(dist < tau)) continue;
      const int cls = world.objects[j].class_id;
      Eigen::VectorXd ref;
      if (e.size() == d) ref = world.prototype(cls);
      else if (e.size() == k) ref = Eigen::VectorXd::Unit(k, cls);
      else throw DataError("landmark embedding size matches neither the prototypes nor the class count");
      if (e.norm() == 0.0 || cosine_similarity(e, ref) <= alpha) continue;
      pairs.emplace_back(dist, i, j);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> lm_used(landmarks.size(), false), obj_used(world.objects.size(), false);
  for (const auto& [dist, i, j] : pairs) {
    if (lm_used[i] || obj_used[j]) continue;
    lm_used[i] = obj_used[j] = true;
    ++r.matched;
  }
  r.precision_defined = r.estimated > 0;
  r.precision = r.precision_defined ? double(r.matched) / r.estimated : 0.0;
  r.recall = r.true_objects > 0 ? double(r.matched) / r.true_objects : 0.0;
  return r;
}

DaReport evaluate_associations(std::span<const AssociationRecord> records,
                               const std::vector<std::vector<int>>& truth_ids) {
  auto truth = [&](const AssociationRecord& r) {
    if (r.keyframe < 0 || static_cast<std::size_t>(r.keyframe) >= truth_ids.size() || r.detection < 0 ||
        static_cast<std::size_t>(r.detection) >= truth_ids[r.keyframe].size())
      throw DataError("association record refers to a detection missing from the dataset");
    return truth_ids[r.keyframe][r.detection];
  };
  DaReport rep;
  std::map<int, int> identity;
  std::set<int> mapped_objects;
  for (const auto& r : records) {
    ++rep.detections;
    if (r.kind != AssociationRecord::Kind::new_landmark) continue;
    const int t = truth(r);
    identity[r.landmark] = t;
    ++rep.new_landmarks;
    if (!mapped_objects.insert(t).second) ++rep.duplicate_landmarks;
  }
  for (const auto& r : records) {
    if (r.kind == AssociationRecord::Kind::withheld) ++rep.withheld;
    if (r.kind != AssociationRecord::Kind::associated) continue;
    ++rep.associated;
    auto it = identity.find(r.landmark);
    if (it != identity.end() && it->second >= 0 && it->second == truth(r)) ++rep.correct;
  }
  rep.precision = rep.associated ? double(rep.correct) / rep.associated : 0.0;
  return rep;
}

}  // namespace osslam
