#pragma once

#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "osslam/detection.hpp"
#include "osslam/geometry.hpp"

namespace osslam {

enum class Strategy { ml, em, mm, geometric_only, new_only };

std::string_view to_string(Strategy strategy);
/// Throws UsageError for unknown names.
Strategy parse_strategy(std::string_view name);

struct DAConfig {
  double alpha = 0.8;        // cosine class gate
  double beta = 0.95;        // chi-square confidence
  int dof = 3;
  double gate_radius = 5.0;  // meters between predicted and measured point
  /// A detection that fails the association gate only spawns a landmark if it
  /// also fails this looser gate for every unclaimed candidate; otherwise it
  /// is withheld. Setting it equal to beta disables withholding.
  double spawn_beta = 0.9999;
  Strategy strategy = Strategy::ml;

  void validate() const;
};

struct Landmark {
  int id = -1;
  Point3 position = Point3::Zero();
  Eigen::VectorXd embedding;
  int observations = 1;
};

struct Hypothesis {
  int landmark_id = -1;
  double d_squared = 0.0;
  double cosine = 0.0;
  double log_marginal = 0.0;
  Mat3 innovation_covariance = Mat3::Identity();
};

struct WeightedLandmark {
  int landmark_id = -1;
  double weight = 0.0;
};

struct NewLandmark {};
struct Single {
  int landmark_id = -1;
};
/// Max-mixture over the gated hypotheses.
struct Mixture {
  std::vector<WeightedLandmark> components;
};
/// Expectation-maximization soft association.
struct Weighted {
  std::vector<WeightedLandmark> components;
};

using AssociationDecision = std::variant<NewLandmark, Single, Mixture, Weighted>;

/// Landmark receiving the embedding update: the single match or the heaviest
/// component; -1 for a new landmark.
int primary_landmark(const AssociationDecision& decision);

/// Throws DataError when either vector has zero norm or the sizes differ.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

using JointCovariance = Eigen::Matrix<double, 9, 9>;

/// C = [H_x | H_l] * joint * [H_x | H_l]^T + measurement. `joint` must be
/// symmetric positive semi-definite and `measurement` positive definite.
Mat3 innovation_covariance(const Eigen::Matrix<double, 3, 6>& wrt_pose, const Mat3& wrt_landmark,
                           const JointCovariance& joint, const Mat3& measurement);

/// r^T C^-1 r; throws NumericalError when C is not positive definite.
double mahalanobis_d2(const Vec3& innovation, const Mat3& covariance);

/// CDF of the chi-square distribution with `dof` degrees of freedom.
double chi_square_cdf(double x, int dof);
/// Inverse CDF; throws UsageError for dof < 1 or confidence outside (0, 1).
double chi_square_quantile(int dof, double confidence);

/// Frozen estimate handed to association: the current pose, the landmarks and
/// the joint covariance over [pose (6), landmark 0 (3), landmark 1 (3), ...].
struct EstimateSnapshot {
  Pose3 pose;
  std::vector<Landmark> landmarks;
  Eigen::MatrixXd covariance;

  JointCovariance joint_block(std::size_t landmark_index) const;
};

/// Gated hypotheses for one detection, sorted by log marginal likelihood
/// (descending), ties broken by ascending landmark id.
std::vector<Hypothesis> generate_hypotheses(const ObjectDetection& detection,
                                            const EstimateSnapshot& snapshot,
                                            const DAConfig& config);

AssociationDecision decide(std::span<const Hypothesis> ranked, const DAConfig& config);

/// Running mean of the associated embeddings; increments the observation count.
void update_landmark_embedding(Landmark& landmark, const Eigen::VectorXd& observed);

struct FrameAssociation {
  std::vector<std::vector<Hypothesis>> hypotheses;  // per detection, after exclusivity
  std::vector<AssociationDecision> decisions;       // per detection, input order
  /// NewLandmark decisions that still lie inside the spawn gate of a
  /// landmark; the estimator neither binds nor spawns them.
  std::vector<bool> withheld;
};

/// Associates all detections of one frame. Detections are served greedily in
/// order of their best log marginal; a landmark bound by one detection is
/// removed from the candidates of the rest.
FrameAssociation associate_frame(std::span<const ObjectDetection> detections,
                                 const EstimateSnapshot& snapshot, const DAConfig& config);

}  // namespace osslam
