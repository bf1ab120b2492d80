#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "osslam/config.hpp"
#include "osslam/dataset_io.hpp"
#include "osslam/error.hpp"
#include "osslam/experiment.hpp"

using namespace osslam;

namespace {

Simulation small_sim() {
  ScenarioConfig sc;
  sc.trajectory.loops = 1;
  sc.trajectory.keyframes_per_loop = 60;
  sc.world.min_views = 2;
  return make_dataset(sc, 2);
}

}  // namespace

TEST_CASE("dataset round trip") {
  const Simulation sim = small_sim();
  std::stringstream ss;
  write_dataset(ss, sim.dataset, &sim.truth);
  const DatasetFile back = read_dataset(ss);
  REQUIRE(back.dataset.keyframes.size() == sim.dataset.keyframes.size());
  CHECK(back.truth_ids == sim.truth.object_ids);
  for (std::size_t k = 0; k < back.dataset.keyframes.size(); ++k) {
    const Keyframe& a = sim.dataset.keyframes[k];
    const Keyframe& b = back.dataset.keyframes[k];
    CHECK(a.timestamp == b.timestamp);
    CHECK(a.odometry.relative.is_approx(b.odometry.relative, 1e-12));
    CHECK(a.odometry.covariance.isApprox(b.odometry.covariance, 1e-12));
    REQUIRE(a.detections.size() == b.detections.size());
    for (std::size_t d = 0; d < a.detections.size(); ++d) {
      CHECK(a.detections[d].point == b.detections[d].point);
      CHECK(a.detections[d].embedding == b.detections[d].embedding);
      CHECK(a.detections[d].covariance == b.detections[d].covariance);
    }
  }
  std::stringstream plain;
  write_dataset(plain, sim.dataset);
  const DatasetFile unlabeled = read_dataset(plain);
  for (const auto& ids : unlabeled.truth_ids)
    for (int id : ids) CHECK(id == -1);
}

TEST_CASE("malformed dataset lines report their line number") {
  const Simulation sim = small_sim();
  std::stringstream ss;
  write_dataset(ss, sim.dataset);
  std::string text = ss.str();
  const std::size_t second = text.find('\n') + 1;
  const std::size_t third = text.find('\n', second);
  text.replace(second, third - second, "{\"t\": 1.0, \"odom\": {}}");
  std::stringstream bad(text);
  try {
    read_dataset(bad);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::stringstream garbage("not json\n");
  CHECK_THROWS_AS(read_dataset(garbage), DataError);
  std::stringstream zero_emb(R"({"t":0,"odom":{"rel":[0,0,0,0,0,0,1],"sigma":[1,1,1,1,1,1]},"detections":[{"point":[1,0,0],"cov":[1,0,0,0,1,0,0,0,1],"embedding":[0,0]}]})");
  CHECK_THROWS_AS(read_dataset(zero_emb), DataError);
  std::stringstream backwards(
      "{\"t\":1,\"odom\":{\"rel\":[0,0,0,0,0,0,1],\"sigma\":[1,1,1,1,1,1]},\"detections\":[]}\n"
      "{\"t\":0,\"odom\":{\"rel\":[0,0,0,0,0,0,1],\"sigma\":[1,1,1,1,1,1]},\"detections\":[]}\n");
  CHECK_THROWS_AS(read_dataset(backwards), DataError);
}

TEST_CASE("world and landmark map round trips") {
  const Simulation sim = small_sim();
  std::stringstream ws;
  write_world(ws, sim.world);
  const World w = read_world(ws);
  REQUIRE(w.objects.size() == sim.world.objects.size());
  CHECK(w.prototypes == sim.world.prototypes);
  CHECK(w.background == sim.world.background);
  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    CHECK(w.objects[i].position == sim.world.objects[i].position);
    CHECK(w.objects[i].class_id == sim.world.objects[i].class_id);
  }
  std::stringstream bad_world(R"({"prototypes": [[1, 0]], "objects": [{"position": [0, 0, 0], "class": 3}]})");
  CHECK_THROWS_AS(read_world(bad_world), DataError);

  const std::vector<Landmark> lms{{0, Point3(1, 2, 3), Eigen::Vector3d(0.1, 0.2, 0.3), 7},
                                  {4, Point3(-1, 0.5, 0), Eigen::Vector3d(1, 0, 0), 1}};
  std::stringstream ms;
  write_landmark_map(ms, lms);
  const auto back = read_landmark_map(ms);
  REQUIRE(back.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(back[i].id == lms[i].id);
    CHECK(back[i].position == lms[i].position);
    CHECK(back[i].embedding == lms[i].embedding);
    CHECK(back[i].observations == lms[i].observations);
  }
}

TEST_CASE("association debug log round trip") {
  FrameAssociation fa;
  fa.decisions = {NewLandmark{}, Single{3}, Mixture{{{1, 0.7}, {2, 0.3}}}, Weighted{{{4, 0.6}, {5, 0.4}}}, NewLandmark{}};
  fa.hypotheses.resize(5);
  fa.hypotheses[1].push_back(Hypothesis{3, 1.5, 0.9, -2.0, Mat3::Identity()});
  fa.withheld = {false, false, false, false, true};
  const std::vector<int> bound{8, 3, 1, 4, -1};
  std::stringstream ss;
  write_association_debug(ss, 12, fa, bound);
  const std::string text = ss.str();
  CHECK(nlohmann::json::parse(text.substr(0, text.find('\n')))["decision"]["type"] == "new");
  const auto recs = read_association_debug(ss);
  REQUIRE(recs.size() == 5);
  using K = AssociationRecord::Kind;
  const K kinds[] = {K::new_landmark, K::associated, K::associated, K::associated, K::withheld};
  for (int i = 0; i < 5; ++i) {
    CHECK(recs[i].keyframe == 12);
    CHECK(recs[i].detection == i);
    CHECK(recs[i].kind == kinds[i]);
    CHECK(recs[i].landmark == bound[i]);
  }
}

TEST_CASE("graph dump lists factors with their errors") {
  FactorGraph g;
  g.add_pose(Pose3());
  g.add_landmark(Point3(1, 0, 0));
  g.add_factor(PriorFactor{0, Pose3(), Mat6::Identity()});
  g.add_factor(ObservationFactor{0, 0, Point3(1, 0, 1), Mat3::Identity()});
  std::stringstream ss;
  write_graph_dump(ss, g);
  const auto j = nlohmann::json::parse(ss.str());
  REQUIRE(j["factors"].size() == 2);
  CHECK(j["factors"][1]["type"] == "observation");
  CHECK(j["factors"][1]["error"].get<double>() == doctest::Approx(0.5));
  CHECK(j["total_error"].get<double>() == doctest::Approx(0.5));
  CHECK(j["variables"]["poses"].size() == 1);
  CHECK(j["variables"]["landmarks"].size() == 1);
}

TEST_CASE("config defaults, overlay and errors") {
  std::stringstream out;
  write_config(out, AppConfig{});
  const AppConfig same = parse_config(out);
  CHECK(same.slam.optimize_every == AppConfig{}.slam.optimize_every);
  CHECK(same.sweep.seeds == AppConfig{}.sweep.seeds);
  CHECK(same.scenario.noise.base_sigmas == AppConfig{}.scenario.noise.base_sigmas);

  std::stringstream patch(R"({"association": {"alpha": 0.5, "strategy": "em"}, "trajectory": {"loops": 1},
                              "sweep": {"seeds": [4, 5], "methods": ["ml"]}, "segmentation": {"restarts": 3}})");
  const AppConfig c = parse_config(patch);
  CHECK(c.slam.association.alpha == 0.5);
  CHECK(c.slam.association.strategy == Strategy::em);
  CHECK(c.slam.association.beta == 0.95);
  CHECK(c.scenario.trajectory.loops == 1);
  CHECK(c.scenario.trajectory.keyframes_per_loop == 500);
  CHECK(c.sweep.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(c.segmentation.restarts == 3);

  std::stringstream unknown(R"({"association": {"alpah": 0.5}})");
  CHECK_THROWS_AS(parse_config(unknown), UsageError);
  std::stringstream wrong_type(R"({"association": {"alpha": "high"}})");
  CHECK_THROWS_AS(parse_config(wrong_type), UsageError);
  std::stringstream out_of_range(R"({"association": {"beta": 1.5}})");
  CHECK_THROWS_AS(parse_config(out_of_range), UsageError);
  std::stringstream bad_method(R"({"sweep": {"methods": ["nope"]}})");
  CHECK_THROWS_AS(parse_config(bad_method), UsageError);
  std::stringstream broken("{\"association\": ");
  CHECK_THROWS_AS(parse_config(broken), DataError);
  CHECK_THROWS_AS(load_config("/nonexistent/osslam.json"), DataError);
}

TEST_CASE("result tables") {
  ResultRow r;
  r.method = Method::em;
  r.multiplier = 2.0;
  r.seed = 3;
  r.keyframes = 10;
  r.ape.rmse = 0.123456789012;
  r.map.estimated = 5;
  r.map.true_objects = 4;
  r.map.matched = 4;
  r.map.precision = 0.8;
  r.map.recall = 1.0;
  std::stringstream ss;
  write_results_csv(ss, std::vector<ResultRow>{r});
  std::string header, row;
  std::getline(ss, header);
  std::getline(ss, row);
  CHECK(header.rfind("method,multiplier,seed", 0) == 0);
  CHECK(row.rfind("em,2.000,3,10,0.123456789,", 0) == 0);
  for (Method m : {Method::ml, Method::em, Method::mm, Method::geometric_only, Method::closed_set, Method::odom_only})
    CHECK(parse_method(to_string(m)) == m);
  CHECK_THROWS_AS(parse_method("slam"), UsageError);

  std::vector<ResultRow> rows(2, r);
  rows[1].ape.mean = 2.0;
  rows[1].map.recall = 0.5;
  const auto agg = aggregate(rows);
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].runs == 2);
  CHECK(agg[0].ape_mean == doctest::Approx(1.0));
  CHECK(agg[0].recall == doctest::Approx(0.75));
}
