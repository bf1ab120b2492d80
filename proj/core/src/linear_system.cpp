#include "linear_system.hpp"

#include <algorithm>

#include "osslam/error.hpp"

namespace osslam::detail {

LinearSystem::LinearSystem(const FactorGraph& graph) : num_poses_(graph.num_poses()) {
  const int num_vars = graph.num_poses() + graph.num_landmarks();
  var_offset_.resize(num_vars);
  var_dim_.resize(num_vars);
  int off = 0;
  for (int v = 0; v < num_vars; ++v) {
    var_offset_[v] = off;
    var_dim_[v] = v < num_poses_ ? 6 : 3;
    off += var_dim_[v];
  }
  dim_ = off;

  row_vars_.assign(num_vars, {});
  auto link = [&](int a, int b) {
    if (a == b) return;
    row_vars_[std::min(a, b)].push_back(std::max(a, b));
  };
  for (const auto& f : graph.factors()) {
    const auto vars = factor_variables(f);
    // Mixture components only ever couple the pose with one landmark at a time.
    for (std::size_t i = 1; i < vars.size(); ++i) link(var_index(vars[0]), var_index(vars[i]));
  }
  row_prefix_.assign(num_vars, {});
  for (int b = 0; b < num_vars; ++b) {
    auto& rows = row_vars_[b];
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    int prefix = 0;
    for (int a : rows) {
      row_prefix_[b].push_back(prefix);
      prefix += var_dim_[a];
    }
  }

  std::vector<int> outer(dim_ + 1, 0);
  std::vector<int> inner;
  for (int b = 0; b < num_vars; ++b) {
    for (int k = 0; k < var_dim_[b]; ++k) {
      const int c = var_offset_[b] + k;
      for (int r = c; r < var_offset_[b] + var_dim_[b]; ++r) inner.push_back(r);
      for (int a : row_vars_[b]) {
        for (int r = 0; r < var_dim_[a]; ++r) inner.push_back(var_offset_[a] + r);
      }
      outer[c + 1] = static_cast<int>(inner.size());
    }
  }
  hessian_.resize(dim_, dim_);
  hessian_.resizeNonZeros(static_cast<Eigen::Index>(inner.size()));
  std::copy(outer.begin(), outer.end(), hessian_.outerIndexPtr());
  std::copy(inner.begin(), inner.end(), hessian_.innerIndexPtr());
  std::fill_n(hessian_.valuePtr(), inner.size(), 0.0);
  diagonal_.assign(outer.begin(), outer.end() - 1);
  gradient_ = Eigen::VectorXd::Zero(dim_);
}

int LinearSystem::var_index(const VariableRef& v) const {
  return v.kind == VariableRef::Kind::pose ? v.index : num_poses_ + v.index;
}

int LinearSystem::offset(const VariableRef& v) const { return var_offset_.at(var_index(v)); }

void LinearSystem::add_block(int row_var, int col_var, const Eigen::Ref<const Eigen::MatrixXd>& block) {
  const int* outer = hessian_.outerIndexPtr();
  double* values = hessian_.valuePtr();
  const int col_off = var_offset_[col_var];
  const int col_dim = var_dim_[col_var];
  if (row_var == col_var) {
    for (int k = 0; k < col_dim; ++k) {
      double* col = values + outer[col_off + k];
      for (int r = k; r < col_dim; ++r) col[r - k] += block(r, k);
    }
    return;
  }
  const auto& rows = row_vars_[col_var];
  const auto it = std::lower_bound(rows.begin(), rows.end(), row_var);
  if (it == rows.end() || *it != row_var) throw NumericalError("hessian block outside the assembled pattern");
  const int prefix = row_prefix_[col_var][it - rows.begin()];
  const int row_dim = var_dim_[row_var];
  for (int k = 0; k < col_dim; ++k) {
    double* col = values + outer[col_off + k] + (col_dim - k) + prefix;
    for (int r = 0; r < row_dim; ++r) col[r] += block(r, k);
  }
}

void LinearSystem::assemble(const FactorGraph& graph, const Values& values) {
  std::fill_n(hessian_.valuePtr(), hessian_.nonZeros(), 0.0);
  gradient_.setZero();
  for (const auto& f : graph.factors()) {
    const LinearizedFactor lin = linearize(f, values);
    const int rows = lin.rows;
    for (int p = 0; p < lin.num_blocks; ++p) {
      const int vp = var_index(lin.variables[p]);
      const int dp = var_dim_[vp];
      const auto jp = lin.jacobians[p].topLeftCorner(rows, dp);
      gradient_.segment(var_offset_[vp], dp) += jp.transpose() * lin.residual.head(rows);
      for (int q = 0; q < lin.num_blocks; ++q) {
        const int vq = var_index(lin.variables[q]);
        if (vp < vq) continue;
        const int dq = var_dim_[vq];
        const auto jq = lin.jacobians[q].topLeftCorner(rows, dq);
        add_block(vp, vq, jp.transpose() * jq);
      }
    }
  }
}

Values apply_update(const Values& values, const Eigen::VectorXd& delta, int num_poses) {
  Values out = values;
  for (int i = 0; i < num_poses; ++i) {
    out.poses[i] = values.poses[i].retract(delta.segment<6>(6 * i));
  }
  const int base = 6 * num_poses;
  for (std::size_t j = 0; j < values.landmarks.size(); ++j) {
    out.landmarks[j] += delta.segment<3>(base + 3 * static_cast<int>(j));
  }
  return out;
}

}  // namespace osslam::detail
