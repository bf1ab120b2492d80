#include "osslam/factors.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "osslam/error.hpp"

namespace osslam {

namespace {

template <int N>
Eigen::Matrix<double, N, N> sqrt_information_impl(const Eigen::Matrix<double, N, N>& covariance) {
  using M = Eigen::Matrix<double, N, N>;
  if (!covariance.allFinite() ||
      (covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + covariance.norm())) {
    throw NumericalError("covariance must be finite and symmetric");
  }
  Eigen::LLT<M> llt(covariance);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance is not positive definite");
  M l = llt.matrixL();
  return l.template triangularView<Eigen::Lower>().solve(M::Identity());
}

// Prior error on SO(3) x R^3: [log(Rm^T R); Rm^T (t - tm)].
Eigen::Matrix<double, 6, 1> prior_error(const Pose3& mean, const Pose3& x, Mat6* jac) {
  const Mat3 rm_t = mean.rotation_matrix().transpose();
  const Eigen::Quaterniond dq = mean.rotation().conjugate() * x.rotation();
  Eigen::Matrix<double, 6, 1> e;
  e.head<3>() = so3::log(dq);
  e.tail<3>() = rm_t * (x.translation() - mean.translation());
  if (jac) {
    jac->setZero();
    jac->topLeftCorner<3, 3>() = so3::right_jacobian_inverse(e.head<3>());
    jac->bottomRightCorner<3, 3>() = dq.toRotationMatrix();
  }
  return e;
}

// Between error of z^-1 * xi^-1 * xj on SO(3) x R^3.
Eigen::Matrix<double, 6, 1> between_error(const Pose3& z, const Pose3& xi, const Pose3& xj,
                                          Mat6* jac_i, Mat6* jac_j) {
  const Mat3 rz_t = z.rotation_matrix().transpose();
  const Mat3 ri_t = xi.rotation_matrix().transpose();
  const Eigen::Quaterniond dq = z.rotation().conjugate() * xi.rotation().conjugate() * xj.rotation();
  const Vec3 d = ri_t * (xj.translation() - xi.translation());
  Eigen::Matrix<double, 6, 1> e;
  e.head<3>() = so3::log(dq);
  e.tail<3>() = rz_t * (d - z.translation());
  if (jac_i || jac_j) {
    const Mat3 jr_inv = so3::right_jacobian_inverse(e.head<3>());
    const Mat3 dr = dq.toRotationMatrix();
    if (jac_i) {
      jac_i->setZero();
      jac_i->topLeftCorner<3, 3>() = -jr_inv * dr.transpose() * rz_t;
      jac_i->bottomLeftCorner<3, 3>() = rz_t * skew(d);
      jac_i->bottomRightCorner<3, 3>() = -rz_t;
    }
    if (jac_j) {
      jac_j->setZero();
      jac_j->topLeftCorner<3, 3>() = jr_inv;
      jac_j->bottomRightCorner<3, 3>() = dr;
    }
  }
  return e;
}

const Pose3& pose_at(const Values& v, int i) { return v.poses.at(static_cast<std::size_t>(i)); }
const Point3& landmark_at(const Values& v, int j) { return v.landmarks.at(static_cast<std::size_t>(j)); }

double observation_cost(const Mat3& sqrt_info, const Point3& measured, const Pose3& x, const Point3& l) {
  return 0.5 * (sqrt_info * (measurement_model(x, l) - measured)).squaredNorm();
}

// Index of the active mixture component and its total cost.
std::pair<std::size_t, double> active_component(const MixtureObservationFactor& f, const Values& v) {
  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  const Pose3& x = pose_at(v, f.pose);
  for (std::size_t c = 0; c < f.components.size(); ++c) {
    const double cost = observation_cost(f.sqrt_info, f.measured, x, landmark_at(v, f.components[c].landmark_id)) -
                        std::log(f.components[c].weight);
    if (cost < best_cost) {
      best_cost = cost;
      best = c;
    }
  }
  return {best, best_cost};
}

void fill_observation(LinearizedFactor& out, int pose, int landmark, const Point3& measured,
                      const Mat3& sqrt_info, double scale, const Values& v) {
  MeasurementJacobians jac;
  const Point3 h = measurement_model(pose_at(v, pose), landmark_at(v, landmark), &jac);
  const Mat3 w = scale * sqrt_info;
  out.rows = 3;
  out.residual.setZero();
  out.residual.head<3>() = w * (h - measured);
  out.num_blocks = 2;
  out.variables[0] = {VariableRef::Kind::pose, pose};
  out.variables[1] = {VariableRef::Kind::landmark, landmark};
  out.jacobians[0].setZero();
  out.jacobians[1].setZero();
  out.jacobians[0].topLeftCorner<3, 6>() = w * jac.wrt_pose;
  out.jacobians[1].topLeftCorner<3, 3>() = w * jac.wrt_landmark;
}

}  // namespace

Mat6 sqrt_information(const Mat6& covariance) { return sqrt_information_impl<6>(covariance); }
Mat3 sqrt_information(const Mat3& covariance) { return sqrt_information_impl<3>(covariance); }

std::string_view factor_type_name(const Factor& factor) {
  struct Visitor {
    std::string_view operator()(const PriorFactor&) const { return "prior"; }
    std::string_view operator()(const BetweenFactor&) const { return "between"; }
    std::string_view operator()(const ObservationFactor&) const { return "observation"; }
    std::string_view operator()(const MixtureObservationFactor&) const { return "mixture_observation"; }
    std::string_view operator()(const WeightedObservationFactor&) const { return "weighted_observation"; }
  };
  return std::visit(Visitor{}, factor);
}

std::vector<VariableRef> factor_variables(const Factor& factor) {
  using K = VariableRef::Kind;
  struct Visitor {
    std::vector<VariableRef> operator()(const PriorFactor& f) const { return {{K::pose, f.pose}}; }
    std::vector<VariableRef> operator()(const BetweenFactor& f) const {
      return {{K::pose, f.from}, {K::pose, f.to}};
    }
    std::vector<VariableRef> operator()(const ObservationFactor& f) const {
      return {{K::pose, f.pose}, {K::landmark, f.landmark}};
    }
    std::vector<VariableRef> operator()(const MixtureObservationFactor& f) const {
      std::vector<VariableRef> v{{K::pose, f.pose}};
      for (const auto& c : f.components) v.push_back({K::landmark, c.landmark_id});
      return v;
    }
    std::vector<VariableRef> operator()(const WeightedObservationFactor& f) const {
      return {{K::pose, f.pose}, {K::landmark, f.landmark}};
    }
  };
  return std::visit(Visitor{}, factor);
}

double factor_error(const Factor& factor, const Values& values) {
  struct Visitor {
    const Values& v;
    double operator()(const PriorFactor& f) const {
      return 0.5 * (f.sqrt_info * prior_error(f.mean, pose_at(v, f.pose), nullptr)).squaredNorm();
    }
    double operator()(const BetweenFactor& f) const {
      return 0.5 * (f.sqrt_info * between_error(f.measured, pose_at(v, f.from), pose_at(v, f.to), nullptr, nullptr))
                       .squaredNorm();
    }
    double operator()(const ObservationFactor& f) const {
      return observation_cost(f.sqrt_info, f.measured, pose_at(v, f.pose), landmark_at(v, f.landmark));
    }
    double operator()(const MixtureObservationFactor& f) const { return active_component(f, v).second; }
    double operator()(const WeightedObservationFactor& f) const {
      return f.weight * observation_cost(f.sqrt_info, f.measured, pose_at(v, f.pose), landmark_at(v, f.landmark));
    }
  };
  return std::visit(Visitor{values}, factor);
}

LinearizedFactor linearize(const Factor& factor, const Values& values) {
  using K = VariableRef::Kind;
  struct Visitor {
    const Values& v;
    LinearizedFactor operator()(const PriorFactor& f) const {
      LinearizedFactor out;
      Mat6 j;
      out.rows = 6;
      out.residual = f.sqrt_info * prior_error(f.mean, pose_at(v, f.pose), &j);
      out.num_blocks = 1;
      out.variables[0] = {K::pose, f.pose};
      out.jacobians[0] = f.sqrt_info * j;
      return out;
    }
    LinearizedFactor operator()(const BetweenFactor& f) const {
      LinearizedFactor out;
      Mat6 ji, jj;
      out.rows = 6;
      out.residual = f.sqrt_info * between_error(f.measured, pose_at(v, f.from), pose_at(v, f.to), &ji, &jj);
      out.num_blocks = 2;
      out.variables[0] = {K::pose, f.from};
      out.variables[1] = {K::pose, f.to};
      out.jacobians[0] = f.sqrt_info * ji;
      out.jacobians[1] = f.sqrt_info * jj;
      return out;
    }
    LinearizedFactor operator()(const ObservationFactor& f) const {
      LinearizedFactor out;
      fill_observation(out, f.pose, f.landmark, f.measured, f.sqrt_info, 1.0, v);
      return out;
    }
    LinearizedFactor operator()(const MixtureObservationFactor& f) const {
      LinearizedFactor out;
      const auto [c, cost] = active_component(f, v);
      (void)cost;
      fill_observation(out, f.pose, f.components[c].landmark_id, f.measured, f.sqrt_info, 1.0, v);
      out.offset = -std::log(f.components[c].weight);
      return out;
    }
    LinearizedFactor operator()(const WeightedObservationFactor& f) const {
      LinearizedFactor out;
      fill_observation(out, f.pose, f.landmark, f.measured, f.sqrt_info, std::sqrt(f.weight), v);
      return out;
    }
  };
  return std::visit(Visitor{values}, factor);
}

}  // namespace osslam
