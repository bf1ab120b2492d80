#include "osslam/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCholesky>

#include "linear_system.hpp"
#include "osslam/error.hpp"

namespace osslam {

OptimizeReport optimize(FactorGraph& graph, const LMConfig& config) {
  graph.check_well_posed();

  OptimizeReport report;
  Values values = graph.values();
  double error = graph.total_error(values);
  report.initial_error = error;
  report.error_history.push_back(error);

  detail::LinearSystem system(graph);
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::NaturalOrdering<int>> solver;
  solver.analyzePattern(system.hessian());

  Eigen::SparseMatrix<double> damped;
  double lambda = config.initial_lambda;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    system.assemble(graph, values);
    report.gradient_norm = system.gradient().norm();
    if (report.gradient_norm < config.gradient_tolerance) {
      report.converged = true;
      break;
    }

    bool accepted = false;
    double new_error = error;
    Values candidate;
    while (lambda <= config.max_lambda) {
      damped = system.hessian();
      for (int pos : system.diagonal_positions()) {
        double& d = damped.valuePtr()[pos];
        d += lambda * std::max(d, 1e-6);
      }
      solver.factorize(damped);
      if (solver.info() == Eigen::Success) {
        const Eigen::VectorXd delta = solver.solve(-system.gradient());
        if (delta.allFinite()) {
          candidate = detail::apply_update(values, delta, graph.num_poses());
          new_error = graph.total_error(candidate);
          if (new_error <= error) {
            accepted = true;
            break;
          }
        }
      }
      lambda *= config.lambda_factor;
    }
    if (!accepted) break;

    lambda = std::max(lambda / config.lambda_factor, 1e-12);
    values = std::move(candidate);
    ++report.iterations;
    const double decrease = error - new_error;
    error = new_error;
    report.error_history.push_back(error);
    if (decrease <= config.relative_error_tolerance * std::max(error + decrease, 1e-300)) {
      report.converged = true;
      break;
    }
  }

  report.final_error = error;
  graph.set_values(std::move(values));
  return report;
}

}  // namespace osslam
