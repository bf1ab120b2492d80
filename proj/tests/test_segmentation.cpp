#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "osslam/error.hpp"
#include "osslam/segmentation.hpp"
#include "osslam/simworld.hpp"

using namespace osslam;

namespace {

FeatureGrid constant_grid(int h, int w, const std::vector<float>& v, int heads = 1) {
  FeatureGrid g = FeatureGrid::zeros(h, w, static_cast<int>(v.size()), heads);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) std::copy(v.begin(), v.end(), g.feature(r, c));
  return g;
}

FeatureGrid random_grid(std::mt19937_64& rng, int h, int w, int d, int modes) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<std::vector<float>> centers(modes, std::vector<float>(d));
  for (auto& c : centers)
    for (auto& x : c) x = 3.0f * n(rng);
  FeatureGrid g = FeatureGrid::zeros(h, w, d, 2);
  std::uniform_int_distribution<int> pick(0, modes - 1);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const auto& m = centers[pick(rng)];
      for (int k = 0; k < d; ++k) g.feature(r, c)[k] = m[k] + n(rng);
    }
  return g;
}

BinaryMask random_mask(std::mt19937_64& rng, int h, int w, double p) {
  std::bernoulli_distribution b(p);
  BinaryMask m(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m.set(r, c, b(rng));
  return m;
}

BinaryMask square(int h, int w, int r0, int c0, int size) {
  BinaryMask m(h, w);
  for (int r = r0; r < r0 + size; ++r)
    for (int c = c0; c < c0 + size; ++c) m.set(r, c);
  return m;
}

ClusterMap halves(int h, int w) {
  ClusterMap cm;
  cm.height = h;
  cm.width = w;
  cm.k = 2;
  cm.labels.resize(h * w);
  for (int i = 0; i < h * w; ++i) cm.labels[i] = i < h * w / 2 ? 0 : 1;
  cm.centroids = Eigen::MatrixXd::Identity(2, 2);
  return cm;
}

}  // namespace

TEST_CASE("k-means degenerate and bipartition cases") {
  const FeatureGrid uniform = constant_grid(4, 4, {0.5f, -1.0f, 2.0f});
  const ClusterMap one = cluster_features(uniform, 1, 50, 3);
  CHECK(one.k == 1);
  CHECK((one.centroids.row(0) - Eigen::RowVector3d(0.5, -1.0, 2.0)).norm() < 1e-6);
  CHECK_THROWS_AS(cluster_features(uniform, 2, 50, 3), UsageError);
  CHECK_THROWS_AS(cluster_features(uniform, 0, 50, 3), UsageError);

  FeatureGrid blobs = constant_grid(6, 6, {0.0f, 0.0f});
  std::mt19937_64 rng(11);
  std::normal_distribution<float> n(0.0f, 0.5f);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      blobs.feature(r, c)[0] = (c < 3 ? 10.0f : -10.0f) + n(rng);
      blobs.feature(r, c)[1] = n(rng);
    }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ClusterMap cm = cluster_features(blobs, 2, 100, seed);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) CHECK((cm.label(r, c) == cm.label(0, 0)) == (c < 3));
  }
}

TEST_CASE("k-means result is a fixed point with mean centroids and monotone WCSS") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureGrid g = random_grid(rng, 12, 12, 4, 5);
    const ClusterMap cm = cluster_features(g, 5, 200, trial);
    for (std::size_t i = 1; i < cm.wcss_history.size(); ++i) CHECK(cm.wcss_history[i] <= cm.wcss_history[i - 1] + 1e-9);
    CHECK(std::abs(cm.wcss_history.back() - oracle::wcss(g, cm.labels, cm.centroids)) < 1e-6 * (1.0 + cm.wcss_history.back()));
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(cm.k, g.dim);
    std::vector<int> counts(cm.k, 0);
    for (int p = 0; p < g.patch_count(); ++p) {
      const float* f = g.features.data() + static_cast<std::size_t>(p) * g.dim;
      int best = 0;
      double best_d = 1e300;
      for (int k = 0; k < cm.k; ++k) {
        double d = 0.0;
        for (int j = 0; j < g.dim; ++j) d += (f[j] - cm.centroids(k, j)) * (f[j] - cm.centroids(k, j));
        if (d < best_d) best_d = d, best = k;
      }
      if (cm.converged) CHECK(best == cm.labels[p]);
      for (int j = 0; j < g.dim; ++j) sums(cm.labels[p], j) += f[j];
      ++counts[cm.labels[p]];
    }
    for (int k = 0; k < cm.k; ++k) {
      REQUIRE(counts[k] > 0);
      CHECK((sums.row(k) / counts[k] - cm.centroids.row(k)).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("k-means is deterministic per seed") {
  std::mt19937_64 rng(13);
  const FeatureGrid g = random_grid(rng, 10, 10, 3, 4);
  const ClusterMap a = cluster_features(g, 4, 100, 77), b = cluster_features(g, 4, 100, 77);
  CHECK(a.labels == b.labels);
  CHECK(a.centroids == b.centroids);
}

TEST_CASE("saliency voting rules") {
  SUBCASE("concentrated attention elects its cluster") {
    FeatureGrid g = FeatureGrid::zeros(4, 4, 2, 3);
    const ClusterMap cm = halves(4, 4);
    for (int h = 0; h < 3; ++h)
      for (int p = 0; p < 8; ++p) g.attention[h * 16 + p] = 1.0f;
    CHECK(vote_saliency(cm, g, 0.5) == std::vector<int>{0});
  }
  SUBCASE("zero attention elects nothing") {
    const FeatureGrid g = FeatureGrid::zeros(4, 4, 2, 3);
    CHECK(vote_saliency(halves(4, 4), g, 0.5).empty());
  }
  SUBCASE("two of three heads clear a 0.6 threshold") {
    FeatureGrid g = FeatureGrid::zeros(4, 4, 2, 3);
    for (int h = 0; h < 3; ++h)
      for (int p = 0; p < 16; ++p) g.attention[h * 16 + p] = ((p < 8) == (h < 2)) ? 1.0f : 0.0f;
    CHECK(vote_saliency(halves(4, 4), g, 0.6) == std::vector<int>{0});
    CHECK(vote_saliency(halves(4, 4), g, 0.7).empty());
  }
  CHECK_THROWS_AS(vote_saliency(halves(4, 4), FeatureGrid::zeros(4, 4, 2, 1), 1.5), UsageError);
}

TEST_CASE("mask opening") {
  BinaryMask line(12, 12);
  for (int c = 1; c < 11; ++c) line.set(5, c);
  CHECK(refine_mask(line, 1).count() == 0);

  const BinaryMask sq = square(16, 16, 3, 3, 10);
  CHECK(refine_mask(sq, 1) == sq);
  CHECK(refine_mask(sq, 0) == sq);

  std::mt19937_64 rng(14);
  for (int i = 0; i < 100; ++i) {
    const BinaryMask m = random_mask(rng, 20, 20, 0.6);
    const BinaryMask once = refine_mask(m, 1);
    CHECK(refine_mask(once, 1) == once);
    for (int r = 0; r < 20; ++r)
      for (int c = 0; c < 20; ++c)
        if (once.at(r, c)) CHECK(m.at(r, c));
  }
}

TEST_CASE("connected components examples") {
  BinaryMask two(8, 8);
  for (int r : {1, 2})
    for (int c : {1, 2}) two.set(r, c);
  for (int r : {5, 6})
    for (int c : {5, 6}) two.set(r, c);
  const auto comps = connected_components(two, 8);
  REQUIRE(comps.size() == 2);
  CHECK(comps[0].area() == 4);
  CHECK(comps[1].area() == 4);

  BinaryMask diag(4, 4);
  diag.set(1, 1);
  diag.set(2, 2);
  CHECK(connected_components(diag, 8).size() == 1);
  CHECK(connected_components(diag, 4).size() == 2);
  CHECK(connected_components(BinaryMask(5, 5), 8).empty());
  CHECK_THROWS_AS(connected_components(diag, 6), UsageError);
}

TEST_CASE("connected components match flood fill and partition the mask") {
  std::mt19937_64 rng(15);
  for (int i = 0; i < 200; ++i) {
    const BinaryMask m = random_mask(rng, 32, 32, 0.1 + 0.8 * (i % 10) / 10.0);
    for (int conn : {4, 8}) {
      const auto comps = connected_components(m, conn, 7);
      const auto ref = oracle::flood_fill(m, conn);
      REQUIRE(comps.size() == ref.size());
      int total = 0;
      for (std::size_t k = 0; k < comps.size(); ++k) {
        CHECK(comps[k].members == ref[k]);
        CHECK(comps[k].cluster == 7);
        total += comps[k].area();
      }
      CHECK(total == m.count());
    }
  }
}

TEST_CASE("component filtering") {
  InstanceComponent small{0, {{5, 5}, {5, 6}, {6, 5}}};
  InstanceComponent inner{0, {}};
  for (int r = 10; r < 15; ++r)
    for (int c = 10; c < 15; ++c) inner.members.push_back({r, c});
  InstanceComponent border{0, {}};
  for (int r = 3; r < 13; ++r)
    for (int c = 0; c < 10; ++c) border.members.push_back({r, c});
  InstanceComponent bottom{0, {{31, 4}, {30, 4}, {30, 5}, {30, 6}, {29, 5}}};

  const auto kept = filter_components({small, inner, border, bottom}, 4, 32, 32);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].members == inner.members);
}

TEST_CASE("object extraction back-projects patch centroids") {
  FeatureGrid g = FeatureGrid::zeros(8, 8, 2, 1);
  ClusterMap cm = halves(8, 8);
  cm.centroids << 0.3, -0.7, 1.0, 2.0;
  for (auto& d : g.depth) d = 2.0f;
  const int ps = 8;

  SUBCASE("principal axis") {
    InstanceComponent c{0, {{3, 3}, {3, 4}, {4, 3}, {4, 4}}};
    CameraIntrinsics k{100.0, 100.0, 4 * ps, 4 * ps};
    const auto r = extract_objects({c}, cm, g, k, ps, RangeNoiseModel{});
    REQUIRE(r.detections.size() == 1);
    CHECK((r.detections[0].point - Point3(0, 0, 2)).norm() < 1e-12);
    CHECK((r.detections[0].embedding - Eigen::Vector2d(0.3, -0.7)).norm() == 0.0);
    CHECK(r.detections[0].area == 4);
  }
  SUBCASE("one focal length to the right at 1 m") {
    for (auto& d : g.depth) d = 1.0f;
    InstanceComponent c{1, {{4, 4}}};
    const double u = 4.5 * ps, v = 4.5 * ps;
    CameraIntrinsics k{30.0, 30.0, u - 30.0, v};
    const auto r = extract_objects({c}, cm, g, k, ps, RangeNoiseModel{});
    REQUIRE(r.detections.size() == 1);
    CHECK((r.detections[0].point - Point3(1, 0, 1)).norm() < 1e-12);
    CHECK((r.detections[0].embedding - Eigen::Vector2d(1.0, 2.0)).norm() == 0.0);
  }
  SUBCASE("components without depth are dropped and counted") {
    for (auto& d : g.depth) d = 0.0f;
    InstanceComponent c{0, {{3, 3}, {3, 4}}};
    const auto r = extract_objects({c}, cm, g, CameraIntrinsics{}, ps, RangeNoiseModel{});
    CHECK(r.detections.empty());
    CHECK(r.dropped_without_depth == 1);
  }
  SUBCASE("median depth and reprojection") {
    std::mt19937_64 rng(16);
    std::uniform_real_distribution<float> u(0.5f, 4.0f);
    for (auto& d : g.depth) d = u(rng);
    InstanceComponent c{0, {{2, 2}, {2, 3}, {3, 2}, {3, 3}, {3, 4}}};
    const CameraIntrinsics k{256, 240, 31, 29};
    const auto r = extract_objects({c}, cm, g, k, ps, RangeNoiseModel{});
    REQUIRE(r.detections.size() == 1);
    std::vector<double> depths;
    double pu = 0, pv = 0;
    for (const auto& m : c.members) {
      depths.push_back(g.depth_at(m.row, m.col));
      pu += (m.col + 0.5) * ps / c.area();
      pv += (m.row + 0.5) * ps / c.area();
    }
    std::sort(depths.begin(), depths.end());
    const Point3 p = r.detections[0].point;
    CHECK(p.z() == doctest::Approx(depths[2]).epsilon(1e-12));
    CHECK(std::abs(k.fx * p.x() / p.z() + k.cx - pu) < 0.5);
    CHECK(std::abs(k.fy * p.y() / p.z() + k.cy - pv) < 0.5);
    const Mat3 cov = r.detections[0].covariance;
    CHECK(cov.isApprox(cov.transpose()));
    CHECK(cov(0, 0) == doctest::Approx(std::pow(0.025 * depths[2], 2)));
  }
}

TEST_CASE("detect on synthetic scenes") {
  World world;
  world.prototypes = Eigen::MatrixXd::Zero(3, 8);
  world.prototypes(0, 0) = world.prototypes(1, 1) = world.prototypes(2, 2) = 1.0;
  world.background = Eigen::VectorXd::Unit(8, 5);
  GridConfig gc;
  SegmentationConfig sc;

  SUBCASE("background only") {
    const SyntheticGrid s = synthesize_feature_grid(world, Pose3(), gc, 1);
    CHECK(s.object_ids.empty());
    CHECK(detect(s.grid, sc).detections.empty());
  }
  SUBCASE("three separated objects") {
    world.objects = {{optical_to_body(Point3(-0.7, 0.1, 2.0)), 0},
                     {optical_to_body(Point3(0.0, -0.2, 2.2)), 1},
                     {optical_to_body(Point3(0.6, 0.2, 2.0)), 2}};
    const SyntheticGrid s = synthesize_feature_grid(world, Pose3(), gc, 2);
    REQUIRE(s.object_ids.size() == 3);
    const auto r = detect(s.grid, sc);
    REQUIRE(r.detections.size() == 3);
    for (const auto& d : r.detections) {
      double best = -1.0;
      double dist = 1e9;
      for (int i = 0; i < 3; ++i) {
        best = std::max(best, cosine_similarity(d.embedding, world.prototype(i)));
        dist = std::min(dist, (d.point - body_to_optical(world.objects[i].position)).norm());
      }
      CHECK(best > 0.9);
      CHECK(dist < 0.1);
    }
    const auto again = detect(s.grid, sc);
    REQUIRE(again.detections.size() == 3);
    for (int i = 0; i < 3; ++i) {
      CHECK(again.detections[i].point == r.detections[i].point);
      CHECK(again.detections[i].embedding == r.detections[i].embedding);
    }
  }
}

TEST_CASE("feature grid binary round trip") {
  std::mt19937_64 rng(17);
  FeatureGrid g = random_grid(rng, 5, 7, 3, 2);
  for (std::size_t i = 0; i < g.attention.size(); ++i) g.attention[i] = 0.1f * static_cast<float>(i % 7);
  for (std::size_t i = 0; i < g.depth.size(); ++i) g.depth[i] = 0.5f * static_cast<float>(i % 5);
  std::stringstream ss;
  write_feature_grid(ss, g);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "FGRD");
  CHECK(bytes.size() == 20 + 4 * (5 * 7 * 3 + 2 * 5 * 7 + 5 * 7));
  const FeatureGrid back = read_feature_grid(ss);
  CHECK(back.features == g.features);
  CHECK(back.attention == g.attention);
  CHECK(back.depth == g.depth);

  std::stringstream bad("FGRX0000");
  CHECK_THROWS_AS(read_feature_grid(bad), DataError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_feature_grid(truncated), DataError);
}
