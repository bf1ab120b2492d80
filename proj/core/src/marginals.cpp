#include "osslam/marginals.hpp"

#include <Eigen/SparseCholesky>

#include "linear_system.hpp"
#include "osslam/error.hpp"

namespace osslam {

struct Marginals::Impl {
  explicit Impl(const FactorGraph& graph) : system(graph), num_poses(graph.num_poses()),
                                            num_landmarks(graph.num_landmarks()) {
    system.assemble(graph, graph.values());
    solver.compute(system.hessian());
    if (solver.info() != Eigen::Success) {
      throw NumericalError("information matrix is not positive definite (gauge freedom?)");
    }
  }

  detail::LinearSystem system;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::NaturalOrdering<int>> solver;
  int num_poses;
  int num_landmarks;
};

Marginals::Marginals(const FactorGraph& graph) {
  graph.check_well_posed();
  impl_ = std::make_unique<Impl>(graph);
}

Marginals::~Marginals() = default;
Marginals::Marginals(Marginals&&) noexcept = default;
Marginals& Marginals::operator=(Marginals&&) noexcept = default;

Eigen::MatrixXd Marginals::joint(std::span<const VariableRef> variables) const {
  std::vector<int> index;
  for (const auto& v : variables) {
    const int limit = v.kind == VariableRef::Kind::pose ? impl_->num_poses : impl_->num_landmarks;
    if (v.index < 0 || v.index >= limit) throw UsageError("marginal requested for a variable not in the graph");
    const int off = impl_->system.offset(v);
    for (int k = 0; k < v.dim(); ++k) index.push_back(off + k);
  }
  const int n = impl_->system.dimension();
  const int m = static_cast<int>(index.size());
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, m);
  for (int c = 0; c < m; ++c) rhs(index[c], c) = 1.0;
  const Eigen::MatrixXd cols = impl_->solver.solve(rhs);
  Eigen::MatrixXd out(m, m);
  for (int r = 0; r < m; ++r) out.row(r) = cols.row(index[r]);
  return 0.5 * (out + out.transpose());
}

JointCovariance Marginals::pose_landmark(int pose, int landmark) const {
  const VariableRef vars[] = {{VariableRef::Kind::pose, pose}, {VariableRef::Kind::landmark, landmark}};
  return joint(vars);
}

Mat6 Marginals::pose(int pose) const {
  const VariableRef vars[] = {{VariableRef::Kind::pose, pose}};
  return joint(vars);
}

Eigen::MatrixXd Marginals::trailing_covariance() const {
  const int n = impl_->system.dimension();
  const int start = 6 * (impl_->num_poses - 1);
  const int m = n - start;
  // H = L L^T; the Schur complement onto the trailing variables is L_tt L_tt^T.
  const auto& l = impl_->solver.matrixL().nestedExpression();
  Eigen::MatrixXd ltt = Eigen::MatrixXd::Zero(m, m);
  for (int c = start; c < n; ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(l, c); it; ++it) {
      if (it.row() >= start) ltt(it.row() - start, c - start) = it.value();
    }
  }
  const Eigen::MatrixXd linv =
      ltt.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(m, m));
  Eigen::MatrixXd cov = linv.transpose() * linv;
  return 0.5 * (cov + cov.transpose());
}

JointCovariance marginal_covariance(const FactorGraph& graph, int pose, int landmark) {
  if (pose < 0 || pose >= graph.num_poses() || landmark < 0 || landmark >= graph.num_landmarks()) {
    throw UsageError("marginal requested for a variable not in the graph");
  }
  return Marginals(graph).pose_landmark(pose, landmark);
}

}  // namespace osslam
