#include "osslam/dataset_io.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "osslam/error.hpp"

namespace osslam {
namespace {

using nlohmann::json;

json vec_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json mat3_json(const Mat3& m) {
  std::vector<double> v;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v.push_back(m(r, c));
  return v;
}

Eigen::VectorXd vec_from(const json& j, std::ptrdiff_t expected, const char* what) {
  if (!j.is_array()) throw DataError(std::string(what) + " must be an array");
  if (expected >= 0 && static_cast<std::ptrdiff_t>(j.size()) != expected)
    throw DataError(std::string(what) + " must have " + std::to_string(expected) + " entries");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw DataError(std::string(what) + " must contain numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  if (!v.allFinite()) throw DataError(std::string(what) + " must be finite");
  return v;
}

Mat3 mat3_from(const json& j, const char* what) {
  const Eigen::VectorXd v = vec_from(j, 9, what);
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = v[3 * r + c];
  return m;
}

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("missing field \"") + key + "\"");
  return *it;
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(number) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(number) + ": " + e.what());
    }
  }
}

json detection_json(const ObjectDetection& d) {
  return json{{"point", vec_json(d.point)}, {"cov", mat3_json(d.covariance)}, {"embedding", vec_json(d.embedding)}};
}

ObjectDetection detection_from(const json& j) {
  ObjectDetection d;
  d.point = vec_from(field(j, "point"), 3, "point");
  d.covariance = mat3_from(field(j, "cov"), "cov");
  d.embedding = vec_from(field(j, "embedding"), -1, "embedding");
  if (auto it = j.find("area"); it != j.end()) d.area = it->get<int>();
  validate_detection(d);
  return d;
}

json decision_json(const AssociationDecision& decision) {
  return std::visit(
      [](const auto& d) -> json {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, NewLandmark>) {
          return json{{"type", "new"}};
        } else if constexpr (std::is_same_v<T, Single>) {
          return json{{"type", "single"}, {"landmark", d.landmark_id}};
        } else {
          json comps = json::array();
          for (const auto& c : d.components) comps.push_back(json{{"landmark", c.landmark_id}, {"weight", c.weight}});
          return json{{"type", std::is_same_v<T, Mixture> ? "mixture" : "weighted"}, {"components", comps}};
        }
      },
      decision);
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& dataset, const GroundTruth* truth) {
  for (std::size_t k = 0; k < dataset.keyframes.size(); ++k) {
    const Keyframe& kf = dataset.keyframes[k];
    const Pose3& rel = kf.odometry.relative;
    const Eigen::Quaterniond& q = rel.rotation();
    const Tangent6 var = kf.odometry.covariance.diagonal();
    json sigma = {std::sqrt(var[3]), std::sqrt(var[4]), std::sqrt(var[5]),
                  std::sqrt(var[0]), std::sqrt(var[1]), std::sqrt(var[2])};
    json dets = json::array();
    for (std::size_t d = 0; d < kf.detections.size(); ++d) {
      json j = detection_json(kf.detections[d]);
      int id = -1;
      if (truth && k < truth->object_ids.size() && d < truth->object_ids[k].size()) id = truth->object_ids[k][d];
      j["truth_id"] = id;
      dets.push_back(std::move(j));
    }
    json line = {{"t", kf.timestamp},
                 {"odom",
                  {{"rel", {rel.translation().x(), rel.translation().y(), rel.translation().z(), q.x(), q.y(), q.z(), q.w()}},
                   {"sigma", sigma}}},
                 {"detections", dets}};
    out << line.dump() << '\n';
  }
}

DatasetFile read_dataset(std::istream& in) {
  DatasetFile file;
  for_each_line(in, [&](const json& j) {
    Keyframe kf;
    kf.timestamp = field(j, "t").get<double>();
    const json& odom = field(j, "odom");
    const Eigen::VectorXd rel = vec_from(field(odom, "rel"), 7, "odom.rel");
    const Eigen::Quaterniond q(rel[6], rel[3], rel[4], rel[5]);
    if (q.norm() < 1e-9) throw DataError("odom.rel quaternion has zero norm");
    kf.odometry.relative = Pose3(q, rel.head<3>());
    const Eigen::VectorXd s = vec_from(field(odom, "sigma"), 6, "odom.sigma");
    if (!(s.array() > 0.0).all()) throw DataError("odom.sigma must be positive");
    Tangent6 var;
    var << s.tail<3>().array().square(), s.head<3>().array().square();
    kf.odometry.covariance = var.asDiagonal();
    std::vector<int> ids;
    for (const json& d : field(j, "detections")) {
      kf.detections.push_back(detection_from(d));
      auto it = d.find("truth_id");
      ids.push_back(it == d.end() ? -1 : it->get<int>());
    }
    file.dataset.keyframes.push_back(std::move(kf));
    file.truth_ids.push_back(std::move(ids));
  });
  file.dataset.validate();
  return file;
}

void write_world(std::ostream& out, const World& world) {
  json objects = json::array();
  for (const auto& o : world.objects) objects.push_back(json{{"position", vec_json(o.position)}, {"class", o.class_id}});
  json prototypes = json::array();
  for (Eigen::Index r = 0; r < world.prototypes.rows(); ++r) prototypes.push_back(vec_json(world.prototypes.row(r).transpose()));
  const DetectionConfig& d = world.detection;
  json j = {{"objects", objects},
            {"prototypes", prototypes},
            {"background", vec_json(world.background)},
            {"detection",
             {{"range", d.range},
              {"min_range", d.min_range},
              {"field_of_view", d.field_of_view},
              {"sigma_point", d.sigma_point},
              {"sigma_emb", d.sigma_emb}}}};
  out << j.dump(2) << '\n';
}

World read_world(std::istream& in) {
  World world;
  try {
    const json j = json::parse(in);
    const json& protos = field(j, "prototypes");
    const int k = static_cast<int>(protos.size());
    for (int r = 0; r < k; ++r) {
      const Eigen::VectorXd p = vec_from(protos[r], r == 0 ? -1 : world.prototypes.cols(), "prototype");
      if (r == 0) world.prototypes.resize(k, p.size());
      world.prototypes.row(r) = p.transpose();
    }
    if (auto it = j.find("background"); it != j.end()) world.background = vec_from(*it, -1, "background");
    for (const json& o : field(j, "objects")) {
      WorldObject obj{vec_from(field(o, "position"), 3, "position"), field(o, "class").get<int>()};
      if (obj.class_id < 0 || obj.class_id >= k) throw DataError("object class out of range");
      world.objects.push_back(obj);
    }
    if (auto it = j.find("detection"); it != j.end()) {
      DetectionConfig& d = world.detection;
      d.range = it->value("range", d.range);
      d.min_range = it->value("min_range", d.min_range);
      d.field_of_view = it->value("field_of_view", d.field_of_view);
      d.sigma_point = it->value("sigma_point", d.sigma_point);
      d.sigma_emb = it->value("sigma_emb", d.sigma_emb);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("world file: ") + e.what());
  }
  return world;
}

void write_detections(std::ostream& out, std::span<const ObjectDetection> detections, int frame) {
  for (const auto& d : detections) {
    json j = detection_json(d);
    j["frame"] = frame;
    j["area"] = d.area;
    out << j.dump() << '\n';
  }
}

void write_landmark_map(std::ostream& out, std::span<const Landmark> landmarks) {
  for (const auto& lm : landmarks) {
    json j = {{"id", lm.id}, {"position", vec_json(lm.position)}, {"embedding", vec_json(lm.embedding)},
              {"count", lm.observations}};
    out << j.dump() << '\n';
  }
}

std::vector<Landmark> read_landmark_map(std::istream& in) {
  std::vector<Landmark> out;
  for_each_line(in, [&](const json& j) {
    Landmark lm;
    lm.id = field(j, "id").get<int>();
    lm.position = vec_from(field(j, "position"), 3, "position");
    lm.embedding = vec_from(field(j, "embedding"), -1, "embedding");
    lm.observations = j.value("count", 1);
    out.push_back(std::move(lm));
  });
  return out;
}

void write_graph_dump(std::ostream& out, const FactorGraph& graph) {
  const Values& v = graph.values();
  json poses = json::array();
  for (const auto& p : v.poses) {
    const auto& q = p.rotation();
    poses.push_back({p.translation().x(), p.translation().y(), p.translation().z(), q.x(), q.y(), q.z(), q.w()});
  }
  json landmarks = json::array();
  for (const auto& l : v.landmarks) landmarks.push_back(vec_json(l));
  json factors = json::array();
  for (const auto& f : graph.factors()) {
    json vars = json::array();
    for (const auto& r : factor_variables(f)) {
      vars.push_back(json{{"kind", r.kind == VariableRef::Kind::pose ? "pose" : "landmark"}, {"index", r.index}});
    }
    factors.push_back(json{{"type", std::string(factor_type_name(f))}, {"variables", vars}, {"error", factor_error(f, v)}});
  }
  json j = {{"variables", {{"poses", poses}, {"landmarks", landmarks}}},
            {"factors", factors},
            {"total_error", graph.total_error()}};
  out << j.dump(1) << '\n';
}

void write_association_debug(std::ostream& out, int keyframe, const FrameAssociation& association,
                             std::span<const int> landmarks) {
  for (std::size_t d = 0; d < association.decisions.size(); ++d) {
    json hyps = json::array();
    if (d < association.hypotheses.size()) {
      for (const auto& h : association.hypotheses[d]) {
        hyps.push_back(json{{"landmark", h.landmark_id},
                            {"d2", h.d_squared},
                            {"cosine", h.cosine},
                            {"log_marginal", h.log_marginal}});
      }
    }
    json j = {{"keyframe", keyframe}, {"detection", d}, {"hypotheses", hyps},
              {"decision", decision_json(association.decisions[d])}};
    if (d < association.withheld.size() && association.withheld[d]) j["decision"]["type"] = "withheld";
    if (d < landmarks.size()) j["landmark"] = landmarks[d];
    out << j.dump() << '\n';
  }
}

std::vector<AssociationRecord> read_association_debug(std::istream& in) {
  std::vector<AssociationRecord> out;
  for_each_line(in, [&](const json& j) {
    AssociationRecord r;
    r.keyframe = field(j, "keyframe").get<int>();
    r.detection = field(j, "detection").get<int>();
    r.landmark = j.value("landmark", -1);
    const std::string type = field(field(j, "decision"), "type").get<std::string>();
    if (type == "new") r.kind = AssociationRecord::Kind::new_landmark;
    else if (type == "withheld") r.kind = AssociationRecord::Kind::withheld;
    else if (type == "single" || type == "mixture" || type == "weighted") r.kind = AssociationRecord::Kind::associated;
    else throw DataError("unknown decision type: " + type);
    out.push_back(r);
  });
  return out;
}

}  // namespace osslam
