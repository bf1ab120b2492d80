#pragma once

#include <memory>
#include <span>

#include <Eigen/Core>

#include "osslam/association.hpp"
#include "osslam/factor_graph.hpp"

namespace osslam {

/// Covariance recovery from the Gauss-Newton information matrix at the
/// graph's current estimate. Variables are ordered poses first, landmarks
/// last, so the newest pose and all landmarks form the trailing block of the
/// Cholesky factor.
class Marginals {
 public:
  explicit Marginals(const FactorGraph& graph);
  ~Marginals();
  Marginals(Marginals&&) noexcept;
  Marginals& operator=(Marginals&&) noexcept;

  /// Joint covariance of the listed variables, in listed order.
  Eigen::MatrixXd joint(std::span<const VariableRef> variables) const;
  JointCovariance pose_landmark(int pose, int landmark) const;
  Mat6 pose(int pose) const;

  /// Covariance over [newest pose, landmark 0, ..., landmark M-1], read off
  /// the trailing block of the factor.
  Eigen::MatrixXd trailing_covariance() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// 9x9 joint marginal of (pose, landmark); throws UsageError if either is missing.
JointCovariance marginal_covariance(const FactorGraph& graph, int pose, int landmark);

}  // namespace osslam
