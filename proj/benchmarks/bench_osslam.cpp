#include <map>
#include <random>

#include <benchmark/benchmark.h>

#include "osslam/experiment.hpp"
#include "osslam/factors.hpp"
#include "osslam/optimizer.hpp"
#include "osslam/segmentation.hpp"
#include "osslam/simworld.hpp"

using namespace osslam;

namespace {

Simulation small_sim(int keyframes) {
  ScenarioConfig sc;
  sc.trajectory.loops = 1;
  sc.trajectory.keyframes_per_loop = keyframes;
  sc.world.min_views = 2;
  return make_dataset(sc, 0);
}

SyntheticGrid grid_with_objects() {
  WorldConfig wc;
  wc.objects = 0;
  World w = generate_world(wc, 3);
  for (int k = 0; k < 3; ++k) w.objects.push_back(WorldObject{optical_to_body(Point3(0.6 * (k - 1), 0.0, 2.0)), k});
  return synthesize_feature_grid(w, Pose3(), GridConfig{}, 0);
}

// Graph with truth associations, landmarks initialized at first sighting.
FactorGraph build_graph(const Simulation& sim) {
  FactorGraph g;
  const auto dead = integrate_odometry(sim.dataset);
  const Mat6 odo = sqrt_information(sim.dataset.keyframes[1].odometry.covariance);
  std::map<int, int> landmark_of;
  for (std::size_t k = 0; k < dead.size(); ++k) {
    const int p = g.add_pose(dead[k].pose);
    if (k == 0) g.add_factor(PriorFactor{p, dead[0].pose, Mat6::Identity() * 1e3});
    else g.add_factor(BetweenFactor{p - 1, p, sim.dataset.keyframes[k].odometry.relative, odo});
    const auto& dets = sim.dataset.keyframes[k].detections;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const int obj = sim.truth.object_ids[k][i];
      auto it = landmark_of.find(obj);
      if (it == landmark_of.end()) it = landmark_of.emplace(obj, g.add_landmark(dead[k].pose.transform_from(dets[i].point))).first;
      g.add_factor(ObservationFactor{p, it->second, dets[i].point, sqrt_information(dets[i].covariance)});
    }
  }
  return g;
}

}  // namespace

static void BM_ClusterFeatures(benchmark::State& state) {
  const SyntheticGrid g = grid_with_objects();
  for (auto _ : state) benchmark::DoNotOptimize(cluster_features(g.grid, 6, 100, 1, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_ClusterFeatures)->Arg(1)->Arg(5)->Unit(benchmark::kMicrosecond);

static void BM_Detect(benchmark::State& state) {
  const SyntheticGrid g = grid_with_objects();
  const SegmentationConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(detect(g.grid, cfg));
}
BENCHMARK(BM_Detect)->Unit(benchmark::kMicrosecond);

static void BM_GenerateHypotheses(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(0);
  std::normal_distribution<double> u(0.0, 1.0);
  EstimateSnapshot s;
  for (int j = 0; j < n; ++j)
    s.landmarks.push_back(Landmark{j, Point3(2.0 + u(rng), u(rng), 0.3 * u(rng)), Eigen::VectorXd::Unit(32, j % 32), 1});
  s.covariance = 1e-3 * Eigen::MatrixXd::Identity(6 + 3 * n, 6 + 3 * n);
  ObjectDetection d;
  d.point = s.landmarks[0].position;
  d.embedding = Eigen::VectorXd::Unit(32, 0);
  d.covariance = 0.0025 * Mat3::Identity();
  const DAConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(generate_hypotheses(d, s, cfg));
}
BENCHMARK(BM_GenerateHypotheses)->Arg(10)->Arg(100)->Unit(benchmark::kMicrosecond);

static void BM_Optimize(benchmark::State& state) {
  const Simulation sim = small_sim(static_cast<int>(state.range(0)));
  const FactorGraph initial = build_graph(sim);
  for (auto _ : state) {
    FactorGraph g = initial;
    benchmark::DoNotOptimize(optimize(g));
  }
}
BENCHMARK(BM_Optimize)->Arg(100)->Arg(300)->Unit(benchmark::kMillisecond);

static void BM_RunSlam(benchmark::State& state) {
  const Simulation sim = small_sim(200);
  SlamConfig cfg;
  cfg.association.strategy = static_cast<Strategy>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_slam(sim.dataset, cfg));
  state.SetLabel(std::string(to_string(cfg.association.strategy)));
}
BENCHMARK(BM_RunSlam)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
