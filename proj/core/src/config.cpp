#include "osslam/config.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "osslam/error.hpp"
#include "osslam/experiment.hpp"

namespace osslam {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <typename Derived>
ordered_json array_of(const Eigen::MatrixBase<Derived>& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> fixed_from(const ordered_json& j, const std::string& key) {
  if (!j.is_array() || j.size() != N) throw UsageError(key + " must be an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j[i].get<double>();
  return v;
}

ordered_json to_json(const AppConfig& c) {
  const auto& w = c.scenario.world;
  const auto& d = w.detection;
  const auto& t = c.scenario.trajectory;
  const auto& n = c.scenario.noise;
  const auto& a = c.slam.association;
  const auto& o = c.slam.optimizer;
  const auto& s = c.segmentation;
  const auto& g = c.grid;
  const Pose3& pm = c.slam.prior_mean;
  const auto& q = pm.rotation();

  auto intrinsics = [](const CameraIntrinsics& k) {
    return ordered_json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
  };

  ordered_json j;
  j["world"] = {{"objects", w.objects},
                {"classes", w.classes},
                {"dim", w.dim},
                {"extent_min", array_of(w.extent_min)},
                {"extent_max", array_of(w.extent_max)},
                {"min_prototype_angle", w.min_prototype_angle},
                {"min_object_separation", w.min_object_separation},
                {"min_path_clearance", w.min_path_clearance},
                {"min_views", w.min_views},
                {"close_groups", w.close_groups},
                {"close_group_size", w.close_group_size},
                {"close_spacing", w.close_spacing},
                {"detection",
                 {{"range", d.range},
                  {"min_range", d.min_range},
                  {"field_of_view", d.field_of_view},
                  {"sigma_point", d.sigma_point},
                  {"sigma_emb", d.sigma_emb}}}};
  j["trajectory"] = {{"loops", t.loops},
                     {"keyframes_per_loop", t.keyframes_per_loop},
                     {"path_length", t.path_length},
                     {"aspect", t.aspect},
                     {"rate", t.rate}};
  j["noise"] = {{"base_sigmas", array_of(n.base_sigmas)}, {"multiplier", n.multiplier}};
  j["association"] = {{"strategy", std::string(to_string(a.strategy))},
                      {"alpha", a.alpha},
                      {"beta", a.beta},
                      {"dof", a.dof},
                      {"gate_radius", a.gate_radius},
                      {"spawn_beta", a.spawn_beta}};
  j["optimizer"] = {{"max_iterations", o.max_iterations},
                    {"relative_error_tolerance", o.relative_error_tolerance},
                    {"gradient_tolerance", o.gradient_tolerance},
                    {"initial_lambda", o.initial_lambda},
                    {"lambda_factor", o.lambda_factor},
                    {"max_lambda", o.max_lambda}};
  j["slam"] = {{"optimize_every", c.slam.optimize_every},
               {"em_iterations", c.slam.em_iterations},
               {"prior_mean", {pm.translation().x(), pm.translation().y(), pm.translation().z(), q.x(), q.y(), q.z(), q.w()}},
               {"prior_sigmas", array_of(c.slam.prior_sigmas)}};
  j["closed_set"] = {{"drop_fraction", c.closed_set.drop_fraction}};
  j["segmentation"] = {{"clusters", s.clusters},
                       {"max_iterations", s.max_iterations},
                       {"restarts", s.restarts},
                       {"seed", s.seed},
                       {"vote_threshold", s.vote_threshold},
                       {"attention_mass", s.attention_mass},
                       {"erosion_radius", s.erosion_radius},
                       {"connectivity", s.connectivity},
                       {"min_size", s.min_size},
                       {"patch_size", s.patch_size},
                       {"intrinsics", intrinsics(s.intrinsics)},
                       {"range_noise", {{"sigma_per_meter", s.noise.sigma_per_meter}, {"sigma_floor", s.noise.sigma_floor}}}};
  j["grid"] = {{"height", g.height},
               {"width", g.width},
               {"heads", g.heads},
               {"patch_size", g.patch_size},
               {"intrinsics", intrinsics(g.intrinsics)},
               {"object_size", g.object_size},
               {"feature_noise", g.feature_noise},
               {"object_attention_min", g.object_attention_min},
               {"object_attention_max", g.object_attention_max},
               {"background_attention_max", g.background_attention_max},
               {"near_clip", g.near_clip}};
  j["sweep"] = {{"methods", c.sweep.methods},
                {"multipliers", c.sweep.multipliers},
                {"seeds", c.sweep.seeds},
                {"workers", c.sweep.workers}};
  j["evaluation"] = {{"match_tau", c.evaluation.match_tau}, {"align", c.evaluation.align}};
  return j;
}

/// Recursively overlays `patch` onto `base`, rejecting keys absent from base.
void overlay(ordered_json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw UsageError((path.empty() ? std::string("config") : path) + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    auto b = base.find(it.key());
    if (b == base.end()) throw UsageError("unknown config key: " + key);
    if (b->is_object()) {
      overlay(*b, it.value(), key);
      continue;
    }
    const bool both_numbers = b->is_number() && it.value().is_number();
    if (!both_numbers && b->type() != it.value().type()) throw UsageError("wrong type for config key: " + key);
    *b = it.value();
  }
}

CameraIntrinsics intrinsics_from(const ordered_json& j) {
  return {j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(), j.at("cy").get<double>()};
}

AppConfig from_json(const ordered_json& j) {
  AppConfig c;
  auto& w = c.scenario.world;
  const auto& jw = j.at("world");
  w.objects = jw.at("objects").get<int>();
  w.classes = jw.at("classes").get<int>();
  w.dim = jw.at("dim").get<int>();
  w.extent_min = fixed_from<3>(jw.at("extent_min"), "world.extent_min");
  w.extent_max = fixed_from<3>(jw.at("extent_max"), "world.extent_max");
  w.min_prototype_angle = jw.at("min_prototype_angle").get<double>();
  w.min_object_separation = jw.at("min_object_separation").get<double>();
  w.min_path_clearance = jw.at("min_path_clearance").get<double>();
  w.min_views = jw.at("min_views").get<int>();
  w.close_groups = jw.at("close_groups").get<int>();
  w.close_group_size = jw.at("close_group_size").get<int>();
  w.close_spacing = jw.at("close_spacing").get<double>();
  const auto& jd = jw.at("detection");
  w.detection.range = jd.at("range").get<double>();
  w.detection.min_range = jd.at("min_range").get<double>();
  w.detection.field_of_view = jd.at("field_of_view").get<double>();
  w.detection.sigma_point = jd.at("sigma_point").get<double>();
  w.detection.sigma_emb = jd.at("sigma_emb").get<double>();

  auto& t = c.scenario.trajectory;
  const auto& jt = j.at("trajectory");
  t.loops = jt.at("loops").get<int>();
  t.keyframes_per_loop = jt.at("keyframes_per_loop").get<int>();
  t.path_length = jt.at("path_length").get<double>();
  t.aspect = jt.at("aspect").get<double>();
  t.rate = jt.at("rate").get<double>();

  c.scenario.noise.base_sigmas = fixed_from<6>(j.at("noise").at("base_sigmas"), "noise.base_sigmas");
  c.scenario.noise.multiplier = j.at("noise").at("multiplier").get<double>();

  auto& a = c.slam.association;
  const auto& ja = j.at("association");
  a.strategy = parse_strategy(ja.at("strategy").get<std::string>());
  a.alpha = ja.at("alpha").get<double>();
  a.beta = ja.at("beta").get<double>();
  a.dof = ja.at("dof").get<int>();
  a.gate_radius = ja.at("gate_radius").get<double>();
  a.spawn_beta = ja.at("spawn_beta").get<double>();

  auto& o = c.slam.optimizer;
  const auto& jo = j.at("optimizer");
  o.max_iterations = jo.at("max_iterations").get<int>();
  o.relative_error_tolerance = jo.at("relative_error_tolerance").get<double>();
  o.gradient_tolerance = jo.at("gradient_tolerance").get<double>();
  o.initial_lambda = jo.at("initial_lambda").get<double>();
  o.lambda_factor = jo.at("lambda_factor").get<double>();
  o.max_lambda = jo.at("max_lambda").get<double>();

  const auto& js = j.at("slam");
  c.slam.optimize_every = js.at("optimize_every").get<int>();
  c.slam.em_iterations = js.at("em_iterations").get<int>();
  const auto pm = fixed_from<7>(js.at("prior_mean"), "slam.prior_mean");
  const Eigen::Quaterniond q(pm[6], pm[3], pm[4], pm[5]);
  if (q.norm() < 1e-9) throw UsageError("slam.prior_mean quaternion has zero norm");
  c.slam.prior_mean = Pose3(q, pm.head<3>());
  c.slam.prior_sigmas = fixed_from<6>(js.at("prior_sigmas"), "slam.prior_sigmas");

  c.closed_set.drop_fraction = j.at("closed_set").at("drop_fraction").get<double>();

  auto& s = c.segmentation;
  const auto& jg = j.at("segmentation");
  s.clusters = jg.at("clusters").get<int>();
  s.max_iterations = jg.at("max_iterations").get<int>();
  s.restarts = jg.at("restarts").get<int>();
  s.seed = jg.at("seed").get<std::uint64_t>();
  s.vote_threshold = jg.at("vote_threshold").get<double>();
  s.attention_mass = jg.at("attention_mass").get<double>();
  s.erosion_radius = jg.at("erosion_radius").get<int>();
  s.connectivity = jg.at("connectivity").get<int>();
  s.min_size = jg.at("min_size").get<int>();
  s.patch_size = jg.at("patch_size").get<int>();
  s.intrinsics = intrinsics_from(jg.at("intrinsics"));
  s.noise.sigma_per_meter = jg.at("range_noise").at("sigma_per_meter").get<double>();
  s.noise.sigma_floor = jg.at("range_noise").at("sigma_floor").get<double>();

  auto& g = c.grid;
  const auto& jr = j.at("grid");
  g.height = jr.at("height").get<int>();
  g.width = jr.at("width").get<int>();
  g.heads = jr.at("heads").get<int>();
  g.patch_size = jr.at("patch_size").get<int>();
  g.intrinsics = intrinsics_from(jr.at("intrinsics"));
  g.object_size = jr.at("object_size").get<double>();
  g.feature_noise = jr.at("feature_noise").get<double>();
  g.object_attention_min = jr.at("object_attention_min").get<double>();
  g.object_attention_max = jr.at("object_attention_max").get<double>();
  g.background_attention_max = jr.at("background_attention_max").get<double>();
  g.near_clip = jr.at("near_clip").get<double>();

  const auto& jw2 = j.at("sweep");
  c.sweep.methods = jw2.at("methods").get<std::vector<std::string>>();
  c.sweep.multipliers = jw2.at("multipliers").get<std::vector<double>>();
  c.sweep.seeds = jw2.at("seeds").get<std::vector<std::uint64_t>>();
  c.sweep.workers = jw2.at("workers").get<int>();

  c.evaluation.match_tau = j.at("evaluation").at("match_tau").get<double>();
  c.evaluation.align = j.at("evaluation").at("align").get<bool>();
  return c;
}

}  // namespace

void AppConfig::validate() const {
  scenario.world.validate();
  scenario.noise.validate();
  if (scenario.trajectory.loops < 1 || scenario.trajectory.keyframes_per_loop < 3)
    throw UsageError("trajectory needs >= 1 loop and >= 3 keyframes per loop");
  slam.association.validate();
  if (slam.optimize_every < 1 || slam.em_iterations < 1) throw UsageError("optimize_every and em_iterations must be >= 1");
  if (!(closed_set.drop_fraction >= 0.0 && closed_set.drop_fraction <= 1.0))
    throw UsageError("closed_set.drop_fraction must be in [0, 1]");
  if (segmentation.clusters < 1 || segmentation.max_iterations < 1 || segmentation.restarts < 1)
    throw UsageError("segmentation clusters, max_iterations and restarts must be >= 1");
  if (sweep.workers < 1) throw UsageError("sweep.workers must be >= 1");
  for (const auto& m : sweep.methods) parse_method(m);
  if (!(evaluation.match_tau > 0.0)) throw UsageError("evaluation.match_tau must be positive");
  for (double m : sweep.multipliers)
    if (!(m >= 0.0)) throw UsageError("noise multipliers must be >= 0");
}

AppConfig parse_config(std::istream& in) {
  json patch;
  try {
    patch = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("config is not valid JSON: ") + e.what());
  }
  ordered_json merged = to_json(AppConfig{});
  overlay(merged, patch, "");
  AppConfig c;
  try {
    c = from_json(merged);
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid config value: ") + e.what());
  }
  c.validate();
  return c;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  return parse_config(in);
}

void write_config(std::ostream& out, const AppConfig& config) { out << to_json(config).dump(2) << '\n'; }

}  // namespace osslam
