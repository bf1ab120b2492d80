#pragma once

// Block-sparse assembly of the Gauss-Newton system shared by the optimizer
// and covariance recovery. Only the lower triangle is stored.

#include <vector>

#include <Eigen/Sparse>

#include "osslam/factor_graph.hpp"

namespace osslam::detail {

class LinearSystem {
 public:
  explicit LinearSystem(const FactorGraph& graph);

  int dimension() const { return dim_; }
  int offset(const VariableRef& v) const;

  /// Accumulates J^T J (lower triangle) and J^T r at `values`.
  void assemble(const FactorGraph& graph, const Values& values);

  const Eigen::SparseMatrix<double>& hessian() const { return hessian_; }
  Eigen::SparseMatrix<double>& hessian() { return hessian_; }
  const Eigen::VectorXd& gradient() const { return gradient_; }
  const std::vector<int>& diagonal_positions() const { return diagonal_; }

 private:
  int var_index(const VariableRef& v) const;
  void add_block(int row_var, int col_var, const Eigen::Ref<const Eigen::MatrixXd>& block);

  int num_poses_ = 0;
  int dim_ = 0;
  std::vector<int> var_offset_;
  std::vector<int> var_dim_;
  std::vector<std::vector<int>> row_vars_;     // per column var, sorted row vars > col var
  std::vector<std::vector<int>> row_prefix_;   // per column var, row offset within column segment
  Eigen::SparseMatrix<double> hessian_;
  Eigen::VectorXd gradient_;
  std::vector<int> diagonal_;
};

/// Applies a stacked tangent update: poses retract, landmarks add.
Values apply_update(const Values& values, const Eigen::VectorXd& delta, int num_poses);

}  // namespace osslam::detail
