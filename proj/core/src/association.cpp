#include "osslam/association.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "osslam/error.hpp"

namespace osslam {

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::ml: return "ml";
    case Strategy::em: return "em";
    case Strategy::mm: return "mm";
    case Strategy::geometric_only: return "geometric_only";
    case Strategy::new_only: return "new_only";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::ml, Strategy::em, Strategy::mm, Strategy::geometric_only, Strategy::new_only}) {
    if (to_string(s) == name) return s;
  }
  throw UsageError("unknown association strategy '" + std::string(name) + "'");
}

void DAConfig::validate() const {
  if (!(alpha > -1.0 && alpha < 1.0)) throw UsageError("alpha must lie in (-1, 1)");
  if (!(beta > 0.0 && beta < 1.0)) throw UsageError("beta must lie in (0, 1)");
  if (dof < 1) throw UsageError("dof must be >= 1");
  if (!(gate_radius > 0.0)) throw UsageError("gate_radius must be positive");
  if (!(spawn_beta >= beta && spawn_beta < 1.0)) throw UsageError("spawn_beta must lie in [beta, 1)");
}

int primary_landmark(const AssociationDecision& decision) {
  struct Visitor {
    int operator()(const NewLandmark&) const { return -1; }
    int operator()(const Single& s) const { return s.landmark_id; }
    int operator()(const Mixture& m) const { return heaviest(m.components); }
    int operator()(const Weighted& w) const { return heaviest(w.components); }
    static int heaviest(const std::vector<WeightedLandmark>& c) {
      if (c.empty()) return -1;
      // Components arrive ranked, so the first maximum wins ties.
      return std::max_element(c.begin(), c.end(), [](const auto& a, const auto& b) {
               return a.weight < b.weight;
             })->landmark_id;
    }
  };
  return std::visit(Visitor{}, decision);
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DataError("embedding dimensions differ");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DataError("malformed embedding: zero norm");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

namespace {

Mat3 innovation_covariance_unchecked(const Eigen::Matrix<double, 3, 6>& wrt_pose,
                                     const Mat3& wrt_landmark, const JointCovariance& joint,
                                     const Mat3& measurement) {
  Eigen::Matrix<double, 3, 9> h;
  h << wrt_pose, wrt_landmark;
  Mat3 c = h * joint * h.transpose() + measurement;
  return 0.5 * (c + c.transpose());
}

}  // namespace

Mat3 innovation_covariance(const Eigen::Matrix<double, 3, 6>& wrt_pose, const Mat3& wrt_landmark,
                           const JointCovariance& joint, const Mat3& measurement) {
  if (!joint.allFinite() || (joint - joint.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + joint.norm())) {
    throw NumericalError("joint marginal covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<JointCovariance> eig(joint, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * (1.0 + joint.norm())) {
    throw NumericalError("joint marginal covariance is not positive semi-definite");
  }
  if ((measurement - measurement.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + measurement.norm()) ||
      Eigen::LLT<Mat3>(measurement).info() != Eigen::Success) {
    throw NumericalError("measurement covariance is not positive definite");
  }
  return innovation_covariance_unchecked(wrt_pose, wrt_landmark, joint, measurement);
}

double mahalanobis_d2(const Vec3& innovation, const Mat3& covariance) {
  Eigen::LLT<Mat3> llt(covariance);
  if (llt.info() != Eigen::Success) throw NumericalError("innovation covariance is singular");
  const Vec3 w = llt.matrixL().solve(innovation);
  return w.squaredNorm();
}

JointCovariance EstimateSnapshot::joint_block(std::size_t landmark_index) const {
  const Eigen::Index l = 6 + 3 * static_cast<Eigen::Index>(landmark_index);
  if (covariance.rows() < l + 3 || covariance.cols() < l + 3) {
    throw UsageError("snapshot covariance does not cover landmark " + std::to_string(landmark_index));
  }
  JointCovariance j;
  j.topLeftCorner<6, 6>() = covariance.block<6, 6>(0, 0);
  j.topRightCorner<6, 3>() = covariance.block<6, 3>(0, l);
  j.bottomLeftCorner<3, 6>() = covariance.block<3, 6>(l, 0);
  j.bottomRightCorner<3, 3>() = covariance.block<3, 3>(l, l);
  return j;
}

std::vector<Hypothesis> generate_hypotheses(const ObjectDetection& detection,
                                            const EstimateSnapshot& snapshot,
                                            const DAConfig& config) {
  std::vector<Hypothesis> out;
  if (snapshot.landmarks.empty()) return out;
  const double threshold = chi_square_quantile(config.dof, config.beta);
  const bool use_class_gate = config.strategy != Strategy::geometric_only;
  const double log_2pi = std::log(2.0 * std::numbers::pi);

  for (std::size_t i = 0; i < snapshot.landmarks.size(); ++i) {
    const Landmark& lm = snapshot.landmarks[i];
    MeasurementJacobians jac;
    const Point3 predicted = measurement_model(snapshot.pose, lm.position, &jac);
    const Vec3 innovation = predicted - detection.point;
    if (innovation.norm() > config.gate_radius) continue;

    const double cosine = cosine_similarity(detection.embedding, lm.embedding);
    if (use_class_gate && !(cosine > config.alpha)) continue;

    const Mat3 c = innovation_covariance_unchecked(jac.wrt_pose, jac.wrt_landmark,
                                                   snapshot.joint_block(i), detection.covariance);
    Eigen::LLT<Mat3> llt(c);
    if (llt.info() != Eigen::Success) throw NumericalError("innovation covariance is singular");
    const double d2 = llt.matrixL().solve(innovation).squaredNorm();
    if (!(d2 < threshold)) continue;

    const Mat3 l = llt.matrixL();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    Hypothesis h;
    h.landmark_id = lm.id;
    h.d_squared = d2;
    h.cosine = cosine;
    h.log_marginal = -0.5 * d2 - 0.5 * (3.0 * log_2pi + log_det);
    h.innovation_covariance = c;
    out.push_back(h);
  }
  std::sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.log_marginal != b.log_marginal) return a.log_marginal > b.log_marginal;
    return a.landmark_id < b.landmark_id;
  });
  return out;
}

namespace {

std::vector<WeightedLandmark> softmax_weights(std::span<const Hypothesis> ranked) {
  const double top = std::max_element(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                       return a.log_marginal < b.log_marginal;
                     })->log_marginal;
  std::vector<WeightedLandmark> w;
  w.reserve(ranked.size());
  double total = 0.0;
  for (const auto& h : ranked) {
    const double e = std::exp(h.log_marginal - top);
    w.push_back({h.landmark_id, e});
    total += e;
  }
  for (auto& c : w) c.weight /= total;
  return w;
}

}  // namespace

AssociationDecision decide(std::span<const Hypothesis> ranked, const DAConfig& config) {
  if (ranked.empty() || config.strategy == Strategy::new_only) return NewLandmark{};
  switch (config.strategy) {
    case Strategy::ml:
    case Strategy::geometric_only:
      return Single{ranked.front().landmark_id};
    case Strategy::mm:
      return Mixture{softmax_weights(ranked)};
    case Strategy::em:
      return Weighted{softmax_weights(ranked)};
    case Strategy::new_only:
      break;
  }
  return NewLandmark{};
}

void update_landmark_embedding(Landmark& landmark, const Eigen::VectorXd& observed) {
  if (landmark.embedding.size() == 0 || landmark.observations < 1) {
    landmark.embedding = observed;
    landmark.observations = 1;
    return;
  }
  if (landmark.embedding.size() != observed.size()) throw DataError("embedding dimensions differ");
  const double n = landmark.observations;
  landmark.embedding = (landmark.embedding * n + observed) / (n + 1.0);
  ++landmark.observations;
}

FrameAssociation associate_frame(std::span<const ObjectDetection> detections,
                                 const EstimateSnapshot& snapshot, const DAConfig& config) {
  FrameAssociation out;
  out.hypotheses.resize(detections.size());
  out.decisions.assign(detections.size(), NewLandmark{});
  for (std::size_t k = 0; k < detections.size(); ++k) {
    out.hypotheses[k] = generate_hypotheses(detections[k], snapshot, config);
  }

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto best = [&](std::size_t k) {
    return out.hypotheses[k].empty() ? -std::numeric_limits<double>::infinity()
                                     : out.hypotheses[k].front().log_marginal;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return best(a) > best(b); });

  std::vector<int> claimed;
  for (std::size_t k : order) {
    auto& hyps = out.hypotheses[k];
    std::erase_if(hyps, [&](const Hypothesis& h) {
      return std::find(claimed.begin(), claimed.end(), h.landmark_id) != claimed.end();
    });
    out.decisions[k] = decide(hyps, config);
    const int bound = primary_landmark(out.decisions[k]);
    if (bound >= 0) claimed.push_back(bound);
  }

  out.withheld.assign(detections.size(), false);
  if (config.spawn_beta > config.beta) {
    DAConfig loose = config;
    loose.beta = config.spawn_beta;
    for (std::size_t k = 0; k < detections.size(); ++k) {
      if (!std::holds_alternative<NewLandmark>(out.decisions[k])) continue;
      for (const auto& h : generate_hypotheses(detections[k], snapshot, loose)) {
        if (std::find(claimed.begin(), claimed.end(), h.landmark_id) == claimed.end()) {
          out.withheld[k] = true;
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace osslam
