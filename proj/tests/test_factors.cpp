#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "osslam/error.hpp"
#include "osslam/factor_graph.hpp"
#include "osslam/factors.hpp"
#include "osslam/slam.hpp"

using namespace osslam;

TEST_CASE("square-root information") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 20; ++i) {
    const Mat6 c6 = oracle::random_spd<6>(rng);
    const Mat6 w6 = sqrt_information(c6);
    CHECK((w6.transpose() * w6 - c6.inverse()).norm() < 1e-8 * c6.inverse().norm());
    const Mat3 c3 = oracle::random_spd3(rng);
    const Mat3 w3 = sqrt_information(c3);
    CHECK((w3.transpose() * w3 - c3.inverse()).norm() < 1e-9 * c3.inverse().norm());
  }
  CHECK(sqrt_information(Mat3(Eigen::Vector3d(4, 1, 0.25).asDiagonal())).isApprox(Mat3(Eigen::Vector3d(0.5, 1, 2).asDiagonal())));
  CHECK_THROWS_AS(sqrt_information(Mat3(Mat3::Zero())), NumericalError);
  Mat3 asym = Mat3::Identity();
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(sqrt_information(asym), NumericalError);
}

TEST_CASE("factor errors on worked examples") {
  Values v;
  v.poses = {Pose3(), Pose3::from_yaw(M_PI / 2, Vec3(1, 0, 0))};
  v.landmarks = {Point3(1, 2, 0)};

  CHECK(factor_error(PriorFactor{1, v.poses[1], Mat6::Identity()}, v) == doctest::Approx(0.0));
  CHECK(factor_error(PriorFactor{0, Pose3(Eigen::Quaterniond::Identity(), Vec3(1, 0, 0)), Mat6::Identity()}, v) ==
        doctest::Approx(0.5));
  CHECK(factor_error(PriorFactor{0, Pose3(Eigen::Quaterniond::Identity(), Vec3(1, 0, 0)), 2 * Mat6::Identity()}, v) ==
        doctest::Approx(2.0));
  CHECK(factor_error(PriorFactor{0, Pose3::from_yaw(0.3), Mat6::Identity()}, v) == doctest::Approx(0.045));

  CHECK(factor_error(BetweenFactor{0, 1, v.poses[1], Mat6::Identity()}, v) == doctest::Approx(0.0));
  CHECK(factor_error(BetweenFactor{0, 1, Pose3::from_yaw(M_PI / 2), Mat6::Identity()}, v) == doctest::Approx(0.5));

  // The landmark sits one meter ahead of the second pose.
  CHECK(factor_error(ObservationFactor{1, 0, Point3(2, 0, 0), Mat3::Identity()}, v) == doctest::Approx(0.0));
  CHECK(factor_error(ObservationFactor{1, 0, Point3(2, 0, 1), Mat3::Identity()}, v) == doctest::Approx(0.5));
  CHECK(factor_error(WeightedObservationFactor{1, 0, Point3(2, 0, 1), Mat3::Identity(), 0.25}, v) ==
        doctest::Approx(0.125));
}

TEST_CASE("analytic Jacobians match central differences") {
  std::mt19937_64 rng(32);
  for (int kind = 0; kind < 5; ++kind) {
    for (int i = 0; i < 100; ++i) {
      const oracle::FactorInstance fi = oracle::random_factor_instance(rng, kind);
      const LinearizedFactor lin = linearize(fi.factor, fi.values);
      CHECK(lin.error() == doctest::Approx(factor_error(fi.factor, fi.values)).epsilon(1e-12));
      for (int b = 0; b < lin.num_blocks; ++b) {
        const VariableRef ref = lin.variables[b];
        const Eigen::MatrixXd analytic = lin.jacobians[b].topLeftCorner(lin.rows, ref.dim());
        const Eigen::MatrixXd numeric = oracle::numeric_jacobian(fi.factor, fi.values, ref);
        INFO("kind " << kind << " block " << b);
        CHECK((analytic - numeric).norm() <= 1e-5 * analytic.norm());
      }
    }
  }
}

TEST_CASE("max-mixture error is the best weighted component") {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 1000; ++i) {
    const oracle::FactorInstance fi = oracle::random_factor_instance(rng, 3);
    const auto& f = std::get<MixtureObservationFactor>(fi.factor);
    const Mat3 w = f.sqrt_info;
    double best = std::numeric_limits<double>::infinity();
    int arg = -1;
    for (const auto& c : f.components) {
      const double cost = oracle::observation_cost(fi.values.poses[f.pose], fi.values.landmarks[c.landmark_id], f.measured, w) -
                          std::log(c.weight);
      if (cost < best) best = cost, arg = c.landmark_id;
    }
    CHECK(std::abs(factor_error(fi.factor, fi.values) - best) <= 1e-12 * std::max(1.0, std::abs(best)));
    const LinearizedFactor lin = linearize(fi.factor, fi.values);
    CHECK(lin.variables[1].index == arg);
    double arg_weight = 0.0;
    for (const auto& c : f.components)
      if (c.landmark_id == arg) arg_weight = c.weight;
    CHECK(lin.offset == -std::log(arg_weight));
  }
}

TEST_CASE("expectation weights") {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> costs(2 + i % 4);
    for (double& c : costs) c = u(rng);
    const std::vector<double> w = expectation_weights(costs);
    CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) < 1e-9);
    for (std::size_t a = 0; a < costs.size(); ++a)
      for (std::size_t b = 0; b < costs.size(); ++b)
        if (costs[a] < costs[b]) CHECK(w[a] >= w[b]);
  }
  const std::vector<double> w = expectation_weights(std::vector<double>{0.0, 1.0});
  CHECK(w[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK(expectation_weights({}).empty());
}

TEST_CASE("factor bookkeeping") {
  using K = VariableRef::Kind;
  const MixtureObservationFactor mix{2, {{0, 0.5}, {3, 0.5}}, Point3::Zero(), Mat3::Identity()};
  CHECK(factor_variables(mix) == std::vector<VariableRef>{{K::pose, 2}, {K::landmark, 0}, {K::landmark, 3}});
  CHECK(factor_type_name(mix) == "mixture_observation");
  CHECK(factor_type_name(Factor{PriorFactor{}}) == "prior");
  CHECK(factor_type_name(Factor{BetweenFactor{}}) == "between");
  CHECK(factor_type_name(Factor{ObservationFactor{}}) == "observation");
  CHECK(factor_type_name(Factor{WeightedObservationFactor{}}) == "weighted_observation");

  FactorGraph g;
  const int x0 = g.add_pose(Pose3());
  const int l0 = g.add_landmark(Point3(1, 0, 0));
  CHECK_THROWS_AS(g.add_factor(ObservationFactor{x0, 5, Point3::Zero(), Mat3::Identity()}), UsageError);
  CHECK_THROWS_AS(g.add_factor(BetweenFactor{x0, 1, Pose3(), Mat6::Identity()}), UsageError);
  CHECK_THROWS_AS(g.check_well_posed(), NumericalError);
  g.add_factor(PriorFactor{x0, Pose3(), Mat6::Identity()});
  CHECK_THROWS_AS(g.check_well_posed(), NumericalError);
  const std::size_t wf = g.add_factor(WeightedObservationFactor{x0, l0, Point3(1, 0, 0), Mat3::Identity(), 1.0});
  CHECK_NOTHROW(g.check_well_posed());
  g.set_weight(wf, 0.3);
  CHECK(std::get<WeightedObservationFactor>(g.factor(wf)).weight == 0.3);
  CHECK_THROWS(g.set_weight(0, 0.3));
  CHECK(g.total_error() == doctest::Approx(0.0));
}
