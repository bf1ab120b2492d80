#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "osslam/error.hpp"
#include "osslam/factor_graph.hpp"
#include "osslam/marginals.hpp"
#include "osslam/optimizer.hpp"

using namespace osslam;

namespace {

struct Problem {
  FactorGraph graph;
  std::vector<Pose3> true_poses;
  std::vector<Point3> true_landmarks;
};

// Square loop of poses observing a ring of landmarks; noise-free measurements.
Problem loop_problem(std::mt19937_64& rng, int poses, int landmarks, double init_noise) {
  Problem p;
  for (int i = 0; i < poses; ++i)
    p.true_poses.push_back(Pose3::from_yaw(2 * M_PI * i / poses, Vec3(3 * std::cos(2 * M_PI * i / poses), 3 * std::sin(2 * M_PI * i / poses), 0)));
  for (int j = 0; j < landmarks; ++j)
    p.true_landmarks.push_back(Point3(5 * std::cos(2 * M_PI * j / landmarks), 5 * std::sin(2 * M_PI * j / landmarks), 0.5));
  for (const auto& x : p.true_poses) p.graph.add_pose(x.retract(init_noise * Tangent6::Random()));
  for (const auto& l : p.true_landmarks) p.graph.add_landmark(l + init_noise * Vec3::Random());
  p.graph.add_factor(PriorFactor{0, p.true_poses[0], sqrt_information(Mat6(Mat6::Identity() * 1e-4))});
  const Mat6 odo = sqrt_information(oracle::random_spd<6>(rng, 1e-3));
  for (int i = 1; i < poses; ++i)
    p.graph.add_factor(BetweenFactor{i - 1, i, p.true_poses[i - 1].inverse() * p.true_poses[i], odo});
  const Mat3 obs = sqrt_information(Mat3(Mat3::Identity() * 0.01));
  for (int i = 0; i < poses; ++i)
    for (int j = 0; j < landmarks; ++j)
      if ((i + j) % 3 != 0) p.graph.add_factor(ObservationFactor{i, j, p.true_poses[i].transform_to(p.true_landmarks[j]), obs});
  return p;
}

// Dense information matrix J^T J with poses first, landmarks after.
Eigen::MatrixXd dense_information(const FactorGraph& g) {
  const int n = 6 * g.num_poses() + 3 * g.num_landmarks();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  auto offset = [&](const VariableRef& r) { return r.kind == VariableRef::Kind::pose ? 6 * r.index : 6 * g.num_poses() + 3 * r.index; };
  for (const auto& f : g.factors()) {
    const LinearizedFactor lin = linearize(f, g.values());
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(lin.rows, n);
    for (int b = 0; b < lin.num_blocks; ++b)
      j.middleCols(offset(lin.variables[b]), lin.variables[b].dim()) = lin.jacobians[b].topLeftCorner(lin.rows, lin.variables[b].dim());
    h += j.transpose() * j;
  }
  return h;
}

}  // namespace

TEST_CASE("single prior converges to its mean") {
  FactorGraph g;
  g.add_pose(Pose3::from_yaw(0.4, Vec3(1, 2, 3)));
  const Pose3 mean = Pose3::from_yaw(-0.2, Vec3(0, 1, 0));
  g.add_factor(PriorFactor{0, mean, Mat6::Identity()});
  const OptimizeReport r = optimize(g);
  CHECK(r.converged);
  CHECK(r.final_error < 1e-18);
  CHECK(g.values().poses[0].is_approx(mean, 1e-9));
}

TEST_CASE("noise-free loop is recovered from a perturbed start") {
  std::mt19937_64 rng(41);
  Problem p = loop_problem(rng, 12, 6, 0.1);
  const OptimizeReport r = optimize(p.graph);
  CHECK(r.converged);
  CHECK(r.final_error < 1e-12);
  CHECK(r.final_error < r.initial_error);
  for (std::size_t i = 1; i < r.error_history.size(); ++i) CHECK(r.error_history[i] <= r.error_history[i - 1]);
  for (std::size_t i = 0; i < p.true_poses.size(); ++i) CHECK(p.graph.values().poses[i].is_approx(p.true_poses[i], 1e-6));
  for (std::size_t j = 0; j < p.true_landmarks.size(); ++j)
    CHECK((p.graph.values().landmarks[j] - p.true_landmarks[j]).norm() < 1e-6);
}

TEST_CASE("noisy problem ends at a stationary point") {
  std::mt19937_64 rng(42);
  Problem p = loop_problem(rng, 8, 4, 0.05);
  // A second, inconsistent prior leaves nonzero residuals at the optimum.
  p.graph.add_factor(PriorFactor{4, p.true_poses[4].retract(0.05 * Tangent6::Random()), Mat6::Identity() * 10.0});
  optimize(p.graph);
  const Values v = p.graph.values();
  const double e0 = p.graph.total_error();
  for (int trial = 0; trial < 50; ++trial) {
    Values w = v;
    for (auto& x : w.poses) x = x.retract(1e-3 * Tangent6::Random());
    for (auto& l : w.landmarks) l += 1e-3 * Vec3::Random();
    CHECK(p.graph.total_error(w) >= e0 - 1e-12);
  }
  // Gradient via dense J^T r is near zero.
  const int n = 6 * p.graph.num_poses() + 3 * p.graph.num_landmarks();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
  for (const auto& f : p.graph.factors()) {
    const LinearizedFactor lin = linearize(f, v);
    for (int b = 0; b < lin.num_blocks; ++b) {
      const auto& ref = lin.variables[b];
      const int off = ref.kind == VariableRef::Kind::pose ? 6 * ref.index : 6 * p.graph.num_poses() + 3 * ref.index;
      grad.segment(off, ref.dim()) += lin.jacobians[b].topLeftCorner(lin.rows, ref.dim()).transpose() * lin.residual.head(lin.rows);
    }
  }
  CHECK(grad.norm() < 1e-5);
}

TEST_CASE("gauge-deficient graphs are rejected") {
  FactorGraph g;
  g.add_pose(Pose3());
  g.add_pose(Pose3());
  g.add_factor(BetweenFactor{0, 1, Pose3(), Mat6::Identity()});
  CHECK_THROWS_AS(optimize(g), NumericalError);
  g.add_factor(PriorFactor{0, Pose3(), Mat6::Identity()});
  CHECK_NOTHROW(optimize(g));
  g.add_landmark(Point3(1, 1, 1));
  CHECK_THROWS_AS(optimize(g), NumericalError);
  FactorGraph h;
  h.add_pose(Pose3());
  h.add_pose(Pose3());
  h.add_factor(PriorFactor{0, Pose3(), Mat6::Identity()});
  CHECK_THROWS_AS(optimize(h), NumericalError);
}

TEST_CASE("marginals equal the dense inverse of the information matrix") {
  std::mt19937_64 rng(43);
  Problem p = loop_problem(rng, 6, 3, 0.0);
  optimize(p.graph);
  const Eigen::MatrixXd cov = dense_information(p.graph).inverse();
  const Marginals m(p.graph);
  const int np = p.graph.num_poses();
  for (int i = 0; i < np; ++i) CHECK((m.pose(i) - cov.block(6 * i, 6 * i, 6, 6)).norm() < 1e-9 * (1.0 + cov.norm()));
  for (int j = 0; j < p.graph.num_landmarks(); ++j) {
    const JointCovariance pl = m.pose_landmark(2, j);
    const int lo = 6 * np + 3 * j;
    CHECK((pl.topLeftCorner<6, 6>() - cov.block(12, 12, 6, 6)).norm() < 1e-9);
    CHECK((pl.topRightCorner<6, 3>() - cov.block(12, lo, 6, 3)).norm() < 1e-9);
    CHECK((pl.bottomRightCorner<3, 3>() - cov.block(lo, lo, 3, 3)).norm() < 1e-9);
    CHECK((marginal_covariance(p.graph, 2, j) - pl).norm() < 1e-12);
  }
  const Eigen::MatrixXd t = m.trailing_covariance();
  REQUIRE(t.rows() == 6 + 3 * p.graph.num_landmarks());
  std::vector<int> idx;
  for (int k = 0; k < 6; ++k) idx.push_back(6 * (np - 1) + k);
  for (int k = 0; k < 3 * p.graph.num_landmarks(); ++k) idx.push_back(6 * np + k);
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b) CHECK(std::abs(t(a, b) - cov(idx[a], idx[b])) < 1e-9);

  const std::vector<VariableRef> refs{{VariableRef::Kind::landmark, 1}, {VariableRef::Kind::pose, 0}};
  const Eigen::MatrixXd jt = m.joint(refs);
  CHECK((jt.topLeftCorner(3, 3) - cov.block(6 * np + 3, 6 * np + 3, 3, 3)).norm() < 1e-9);
  CHECK((jt.topRightCorner(3, 6) - cov.block(6 * np + 3, 0, 3, 6)).norm() < 1e-9);
  CHECK_THROWS_AS(marginal_covariance(p.graph, 0, 9), UsageError);
}

TEST_CASE("single prior marginal is its covariance") {
  std::mt19937_64 rng(44);
  FactorGraph g;
  const Pose3 mean = oracle::random_pose(rng);
  g.add_pose(mean);
  const Mat6 sigma = oracle::random_spd<6>(rng, 0.01);
  g.add_factor(PriorFactor{0, mean, sqrt_information(sigma)});
  CHECK((Marginals(g).pose(0) - sigma).norm() < 1e-12);
}
