#pragma once

#include <vector>

#include "osslam/factor_graph.hpp"

namespace osslam {

struct LMConfig {
  int max_iterations = 100;
  double relative_error_tolerance = 1e-9;
  double gradient_tolerance = 1e-8;
  double initial_lambda = 1e-5;
  double lambda_factor = 10.0;
  double max_lambda = 1e10;
};

struct OptimizeReport {
  double initial_error = 0.0;
  double final_error = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  /// Total error after each accepted step, starting with the initial error.
  std::vector<double> error_history;
};

/// Levenberg-Marquardt over the graph's current estimate; updates the graph's
/// values in place. Throws NumericalError for gauge-deficient graphs.
OptimizeReport optimize(FactorGraph& graph, const LMConfig& config = {});

}  // namespace osslam
