#pragma once

#include <cstddef>
#include <vector>

#include "osslam/factors.hpp"

namespace osslam {

/// Pose and landmark variables plus the factors between them. Variables are
/// addressed by insertion index.
class FactorGraph {
 public:
  int add_pose(const Pose3& initial);
  int add_landmark(const Point3& initial);
  /// Throws UsageError if the factor references a missing variable.
  std::size_t add_factor(Factor factor);

  int num_poses() const { return static_cast<int>(values_.poses.size()); }
  int num_landmarks() const { return static_cast<int>(values_.landmarks.size()); }
  const std::vector<Factor>& factors() const { return factors_; }
  const Factor& factor(std::size_t i) const { return factors_.at(i); }
  /// Replaces the weight of a WeightedObservationFactor.
  void set_weight(std::size_t factor_index, double weight);

  const Values& values() const { return values_; }
  void set_values(Values values);

  double total_error() const { return total_error(values_); }
  double total_error(const Values& values) const;

  /// Throws NumericalError when the problem has gauge freedom: no prior, a
  /// pose not linked to a prior, or an unobserved landmark.
  void check_well_posed() const;

 private:
  void check_ref(const VariableRef& ref) const;

  Values values_;
  std::vector<Factor> factors_;
};

}  // namespace osslam
