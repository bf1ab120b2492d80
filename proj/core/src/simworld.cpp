#include "osslam/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>

#include "osslam/error.hpp"

namespace osslam {
namespace {

constexpr int kMaxPlacementTries = 20000;
constexpr int kMaxPrototypeTries = 10000;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32)};
  return std::mt19937_64(seq);
}

Eigen::VectorXd gaussian_vector(int n, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = sigma * normal(rng);
  return v;
}

Eigen::VectorXd noisy_unit(const Eigen::VectorXd& prototype, double sigma, std::mt19937_64& rng) {
  const int d = static_cast<int>(prototype.size());
  Eigen::VectorXd v = prototype + gaussian_vector(d, rng, sigma / std::sqrt(static_cast<double>(d)));
  const double n = v.norm();
  return n > 0.0 ? Eigen::VectorXd(v / n) : prototype;
}

/// Rejection-samples `count` unit vectors with pairwise angle >= min_angle.
Eigen::MatrixXd sample_prototypes(int count, int dim, double min_angle, std::mt19937_64& rng) {
  Eigen::MatrixXd out(count, dim);
  const double max_cos = std::cos(min_angle);
  for (int i = 0; i < count; ++i) {
    int tries = 0;
    for (;;) {
      if (++tries > kMaxPrototypeTries) throw UsageError("prototype angle constraint is infeasible");
      Eigen::VectorXd v = gaussian_vector(dim, rng);
      if (v.norm() == 0.0) continue;
      v.normalize();
      bool ok = true;
      for (int j = 0; j < i && ok; ++j) ok = out.row(j).dot(v) <= max_cos + 1e-12;
      if (ok) {
        out.row(i) = v.transpose();
        break;
      }
    }
  }
  return out;
}

}  // namespace

void WorldConfig::validate() const {
  if (objects < 0) throw UsageError("object count must be >= 0");
  if (classes < 1) throw UsageError("class count must be >= 1");
  if (dim < 1) throw UsageError("embedding dimension must be >= 1");
  if ((extent_max - extent_min).minCoeff() < 0.0) throw UsageError("extent max must not be below extent min");
  if (!(min_prototype_angle >= 0.0 && min_prototype_angle <= M_PI)) throw UsageError("prototype angle out of range");
  if (min_object_separation < 0.0 || min_path_clearance < 0.0 || min_views < 0)
    throw UsageError("placement constraints must be non-negative");
  if (close_groups < 0 || close_group_size < 1 || close_spacing < 0.0)
    throw UsageError("invalid close-group settings");
  if (close_groups * close_group_size > objects) throw UsageError("close groups need more objects than configured");
  if (close_group_size > classes) throw UsageError("close group members need distinct classes");
  if (detection.range <= detection.min_range || detection.min_range < 0.0) throw UsageError("invalid detection range");
  if (!(detection.field_of_view > 0.0 && detection.field_of_view <= 2.0 * M_PI))
    throw UsageError("field of view out of range");
  if (detection.sigma_point < 0.0 || detection.sigma_emb < 0.0) throw UsageError("noise sigmas must be >= 0");
}

std::vector<TimedPose> generate_trajectory(const TrajectoryConfig& config) {
  if (config.loops < 1) throw UsageError("loops must be >= 1");
  if (config.keyframes_per_loop < 3) throw UsageError("need at least 3 keyframes per loop");
  if (!(config.path_length > 0.0) || !(config.aspect > 0.0) || !(config.rate > 0.0))
    throw UsageError("path length, aspect and rate must be positive");

  // Arc-length table of the unit-major ellipse (sin phi, aspect (1 - cos phi)).
  constexpr int kTable = 20000;
  std::vector<double> arc(kTable + 1, 0.0);
  auto point = [&](double phi) { return Eigen::Vector2d(std::sin(phi), config.aspect * (1.0 - std::cos(phi))); };
  for (int i = 1; i <= kTable; ++i) {
    arc[i] = arc[i - 1] + (point(2.0 * M_PI * i / kTable) - point(2.0 * M_PI * (i - 1) / kTable)).norm();
  }
  const double scale = config.path_length / arc.back();

  std::vector<Pose3> circuit;
  circuit.reserve(config.keyframes_per_loop);
  for (int k = 0; k < config.keyframes_per_loop; ++k) {
    const double s = arc.back() * k / config.keyframes_per_loop;
    const auto it = std::lower_bound(arc.begin(), arc.end(), s);
    const int i = std::max(1, static_cast<int>(it - arc.begin()));
    const double f = (s - arc[i - 1]) / (arc[i] - arc[i - 1]);
    const double phi = 2.0 * M_PI * (i - 1 + f) / kTable;
    const Eigen::Vector2d p = scale * point(phi);
    const double yaw = std::atan2(config.aspect * std::sin(phi), std::cos(phi));
    circuit.push_back(Pose3::from_yaw(k == 0 ? 0.0 : yaw, Vec3(k == 0 ? 0.0 : p.x(), k == 0 ? 0.0 : p.y(), 0.0)));
  }

  std::vector<TimedPose> out;
  out.reserve(static_cast<std::size_t>(config.loops) * config.keyframes_per_loop);
  for (int l = 0; l < config.loops; ++l) {
    for (const auto& p : circuit) {
      out.push_back(TimedPose{static_cast<double>(out.size()) / config.rate, p});
    }
  }
  return out;
}

bool is_visible(const DetectionConfig& config, const Pose3& pose, const Point3& object) {
  const Point3 local = pose.transform_to(object);
  const double range = local.norm();
  if (range < config.min_range || range > config.range) return false;
  return std::acos(std::clamp(local.x() / range, -1.0, 1.0)) <= 0.5 * config.field_of_view;
}

World generate_world(const WorldConfig& config, std::uint64_t seed, std::span<const Pose3> viewpoints) {
  config.validate();
  auto rng = stream(seed, 1);
  World world;
  world.detection = config.detection;
  const Eigen::MatrixXd all = sample_prototypes(config.classes + 1, config.dim, config.min_prototype_angle, rng);
  world.prototypes = all.topRows(config.classes);
  world.background = all.row(config.classes).transpose();
  if (config.objects == 0) return world;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sample_point = [&] {
    Point3 p;
    for (int i = 0; i < 3; ++i) p[i] = config.extent_min[i] + unit(rng) * (config.extent_max[i] - config.extent_min[i]);
    return p;
  };
  auto clear_of_path = [&](const Point3& p) {
    for (const auto& v : viewpoints) {
      if ((v.translation() - p).head<2>().norm() < config.min_path_clearance) return false;
    }
    return true;
  };
  auto seen_enough = [&](const Point3& p) {
    if (viewpoints.empty() || config.min_views == 0) return true;
    int views = 0;
    for (const auto& v : viewpoints) {
      if (is_visible(config.detection, v, p) && ++views >= config.min_views) return true;
    }
    return false;
  };
  auto separated = [&](const Point3& p) {
    for (const auto& o : world.objects) {
      if ((o.position - p).norm() < config.min_object_separation) return false;
    }
    return true;
  };

  // Classes cycle through all K before repeating, in shuffled order.
  std::vector<int> classes(config.objects);
  for (int i = 0; i < config.objects; ++i) classes[i] = i % config.classes;
  std::shuffle(classes.begin(), classes.end(), rng);

  int next = 0;
  for (int g = 0; g < config.close_groups; ++g) {
    const int anchor_class = classes[next];
    for (int tries = 0;; ++tries) {
      if (tries > kMaxPlacementTries) throw UsageError("could not place a close object group");
      const Point3 anchor = sample_point();
      std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
      std::vector<Point3> members{anchor};
      const double a0 = angle(rng);
      for (int m = 1; m < config.close_group_size; ++m) {
        const double a = a0 + 2.0 * M_PI * (m - 1) / std::max(1, config.close_group_size - 1);
        members.push_back(anchor + config.close_spacing * Point3(std::cos(a), std::sin(a), 0.0));
      }
      const bool ok = std::all_of(members.begin(), members.end(), [&](const Point3& p) {
        return separated(p) && clear_of_path(p) && seen_enough(p);
      });
      if (!ok) continue;
      for (int m = 0; m < config.close_group_size; ++m) {
        world.objects.push_back(WorldObject{members[m], (anchor_class + m) % config.classes});
      }
      break;
    }
    next += config.close_group_size;
  }
  for (; next < config.objects; ++next) {
    for (int tries = 0;; ++tries) {
      if (tries > kMaxPlacementTries) throw UsageError("could not place objects under the placement constraints");
      const Point3 p = sample_point();
      if (separated(p) && clear_of_path(p) && seen_enough(p)) {
        world.objects.push_back(WorldObject{p, classes[next]});
        break;
      }
    }
  }
  return world;
}

Mat6 NoiseModel::covariance() const {
  const double m2 = multiplier * multiplier;
  Tangent6 var;
  var << base_sigmas.tail<3>().array().square(), base_sigmas.head<3>().array().square();
  return Mat6((var * m2).asDiagonal());
}

void NoiseModel::validate() const {
  if (!(base_sigmas.array() > 0.0).all()) throw UsageError("base sigmas must be positive");
  if (!(multiplier >= 0.0)) throw UsageError("noise multiplier must be >= 0");
}

std::vector<Odometry> corrupt_odometry(std::span<const Pose3> true_relatives, const NoiseModel& noise,
                                       std::uint64_t seed) {
  noise.validate();
  auto rng = stream(seed, 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tangent6 sigma;
  sigma << noise.base_sigmas.tail<3>(), noise.base_sigmas.head<3>();
  sigma *= noise.multiplier;
  Mat6 cov = noise.covariance();
  // A floor keeps the information finite in the zero-noise limit.
  cov.diagonal() = cov.diagonal().cwiseMax(1e-18);

  std::vector<Odometry> out;
  out.reserve(true_relatives.size());
  for (const auto& rel : true_relatives) {
    Tangent6 delta;
    for (int i = 0; i < 6; ++i) delta[i] = sigma[i] * normal(rng);
    out.push_back(Odometry{rel.retract(delta), cov});
  }
  return out;
}

SimulatedDetections simulate_detections(const World& world, const Pose3& pose, const DetectionConfig& config,
                                        std::uint64_t seed) {
  auto rng = stream(seed, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double var = std::max(config.sigma_point * config.sigma_point, 1e-12);
  SimulatedDetections out;
  for (std::size_t i = 0; i < world.objects.size(); ++i) {
    const auto& obj = world.objects[i];
    if (!is_visible(config, pose, obj.position)) continue;
    ObjectDetection det;
    det.point = measurement_model(pose, obj.position);
    for (int a = 0; a < 3; ++a) det.point[a] += config.sigma_point * normal(rng);
    det.embedding = noisy_unit(world.prototype(obj.class_id), config.sigma_emb, rng);
    det.covariance = Mat3::Identity() * var;
    det.area = 1;
    out.detections.push_back(std::move(det));
    out.object_ids.push_back(static_cast<int>(i));
  }
  return out;
}

Point3 body_to_optical(const Point3& body) { return Point3(-body.y(), -body.z(), body.x()); }
Point3 optical_to_body(const Point3& optical) { return Point3(optical.z(), -optical.x(), -optical.y()); }

SyntheticGrid synthesize_feature_grid(const World& world, const Pose3& pose, const GridConfig& config,
                                      std::uint64_t seed) {
  if (config.height < 1 || config.width < 1 || config.heads < 1 || config.patch_size < 1)
    throw UsageError("grid dimensions must be positive");
  const int dim = static_cast<int>(world.background.size());
  if (dim < 1) throw UsageError("world has no embedding dimension");
  auto rng = stream(seed, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double ps = config.patch_size;
  const auto& k = config.intrinsics;

  // Owner per patch: index into the visible list, nearest wins.
  std::vector<int> owner(static_cast<std::size_t>(config.height) * config.width, -1);
  std::vector<double> owner_depth(owner.size(), 0.0);
  SyntheticGrid out;
  for (std::size_t i = 0; i < world.objects.size(); ++i) {
    const Point3 c = body_to_optical(pose.transform_to(world.objects[i].position));
    if (c.z() <= config.near_clip) continue;
    const double half = 0.5 * config.object_size;
    const double u0 = k.fx * (c.x() - half) / c.z() + k.cx, u1 = k.fx * (c.x() + half) / c.z() + k.cx;
    const double v0 = k.fy * (c.y() - half) / c.z() + k.cy, v1 = k.fy * (c.y() + half) / c.z() + k.cy;
    // A patch belongs to the object when its center falls inside the projection.
    const int c0 = std::max(0, static_cast<int>(std::ceil(u0 / ps - 0.5)));
    const int c1 = std::min(config.width - 1, static_cast<int>(std::floor(u1 / ps - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(v0 / ps - 0.5)));
    const int r1 = std::min(config.height - 1, static_cast<int>(std::floor(v1 / ps - 0.5)));
    if (c0 > c1 || r0 > r1) continue;
    const int slot = static_cast<int>(out.object_ids.size());
    out.object_ids.push_back(static_cast<int>(i));
    for (int r = r0; r <= r1; ++r) {
      for (int col = c0; col <= c1; ++col) {
        const std::size_t p = static_cast<std::size_t>(r) * config.width + col;
        if (owner[p] < 0 || c.z() < owner_depth[p]) {
          owner[p] = slot;
          owner_depth[p] = c.z();
        }
      }
    }
  }

  out.masks.assign(out.object_ids.size(), BinaryMask(config.height, config.width));
  out.grid = FeatureGrid::zeros(config.height, config.width, dim, config.heads);
  const double sigma = config.feature_noise / std::sqrt(static_cast<double>(dim));
  for (int r = 0; r < config.height; ++r) {
    for (int col = 0; col < config.width; ++col) {
      const int o = owner[static_cast<std::size_t>(r) * config.width + col];
      const Eigen::VectorXd base = o < 0 ? world.background : world.prototype(world.objects[out.object_ids[o]].class_id);
      const Eigen::VectorXd f = base + gaussian_vector(dim, rng, sigma);
      float* dst = out.grid.feature(r, col);
      for (int d = 0; d < dim; ++d) dst[d] = static_cast<float>(f[d]);
      for (int h = 0; h < config.heads; ++h) {
        const double a = o < 0 ? config.background_attention_max * unit(rng)
                               : config.object_attention_min +
                                     (config.object_attention_max - config.object_attention_min) * unit(rng);
        out.grid.attention_at(h, r, col) = static_cast<float>(a);
      }
      if (o >= 0) {
        out.masks[o].set(r, col);
        out.grid.depth_at(r, col) = static_cast<float>(owner_depth[static_cast<std::size_t>(r) * config.width + col]);
      } else {
        // Background wall just beyond the detection range.
        out.grid.depth_at(r, col) = static_cast<float>(world.detection.range + 1.0);
      }
    }
  }
  // Objects fully hidden behind nearer ones leave empty masks; drop them.
  for (std::size_t i = out.masks.size(); i-- > 0;) {
    if (out.masks[i].count() == 0) {
      out.masks.erase(out.masks.begin() + static_cast<std::ptrdiff_t>(i));
      out.object_ids.erase(out.object_ids.begin() + static_cast<std::ptrdiff_t>(i));
    }
  }
  return out;
}

void Dataset::validate() const {
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    if (k > 0 && !(keyframes[k].timestamp > keyframes[k - 1].timestamp))
      throw DataError("timestamps must be strictly increasing (keyframe " + std::to_string(k) + ")");
    const Mat6& c = keyframes[k].odometry.covariance;
    if (!c.allFinite() || !c.isApprox(c.transpose(), 1e-9) || Eigen::LLT<Mat6>(c).info() != Eigen::Success)
      throw DataError("odometry covariance must be symmetric positive definite (keyframe " + std::to_string(k) + ")");
    for (const auto& d : keyframes[k].detections) validate_detection(d);
  }
}

Simulation make_dataset(const ScenarioConfig& config, std::uint64_t seed) {
  const std::vector<TimedPose> truth = generate_trajectory(config.trajectory);
  std::vector<Pose3> circuit;
  for (int k = 0; k < config.trajectory.keyframes_per_loop; ++k) circuit.push_back(truth[k].pose);

  Simulation sim;
  sim.world = generate_world(config.world, seed, circuit);

  // Odometry noise draws depend on the seed only, so multipliers scale one
  // shared realization.
  std::vector<Pose3> relatives;
  relatives.reserve(truth.size());
  relatives.push_back(Pose3());
  for (std::size_t k = 1; k < truth.size(); ++k) relatives.push_back(truth[k - 1].pose.inverse() * truth[k].pose);
  std::vector<Odometry> odometry = corrupt_odometry(relatives, config.noise, seed);
  odometry.front() = Odometry{Pose3(), config.noise.covariance()};
  odometry.front().covariance.diagonal() = odometry.front().covariance.diagonal().cwiseMax(1e-18);

  sim.truth.trajectory = truth;
  sim.dataset.keyframes.reserve(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k) {
    SimulatedDetections det = simulate_detections(sim.world, truth[k].pose, config.world.detection,
                                                  seed * 1000003ULL + k);
    sim.dataset.keyframes.push_back(Keyframe{truth[k].timestamp, odometry[k], std::move(det.detections)});
    sim.truth.object_ids.push_back(std::move(det.object_ids));
  }
  return sim;
}

Dataset to_closed_set(const Dataset& dataset, const GroundTruth& truth, const World& world,
                      const ClosedSetConfig& config, std::uint64_t seed) {
  if (!(config.drop_fraction >= 0.0 && config.drop_fraction <= 1.0)) throw UsageError("drop fraction must be in [0, 1]");
  if (truth.object_ids.size() != dataset.keyframes.size()) throw DataError("truth labels do not match the dataset");
  const int k = static_cast<int>(world.prototypes.rows());
  std::vector<int> per_class(k, 0);
  for (const auto& o : world.objects) ++per_class[o.class_id];

  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  auto rng = stream(seed, 5);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> dropped(k, false);
  const double total = static_cast<double>(world.objects.size());
  int removed = 0;
  for (int c : order) {
    if (total == 0.0 || removed / total >= config.drop_fraction) break;
    dropped[c] = true;
    removed += per_class[c];
  }

  Dataset out;
  out.keyframes.reserve(dataset.keyframes.size());
  for (std::size_t f = 0; f < dataset.keyframes.size(); ++f) {
    const Keyframe& in = dataset.keyframes[f];
    if (truth.object_ids[f].size() != in.detections.size()) throw DataError("truth labels do not match detections");
    Keyframe kf{in.timestamp, in.odometry, {}};
    for (std::size_t d = 0; d < in.detections.size(); ++d) {
      const int cls = world.objects.at(truth.object_ids[f][d]).class_id;
      if (dropped[cls]) continue;
      ObjectDetection det = in.detections[d];
      det.embedding = Eigen::VectorXd::Unit(k, cls);
      kf.detections.push_back(std::move(det));
    }
    out.keyframes.push_back(std::move(kf));
  }
  return out;
}

std::vector<TimedPose> integrate_odometry(const Dataset& dataset, const Pose3& start) {
  std::vector<TimedPose> out;
  out.reserve(dataset.keyframes.size());
  Pose3 x = start;
  for (std::size_t k = 0; k < dataset.keyframes.size(); ++k) {
    if (k > 0) x = x * dataset.keyframes[k].odometry.relative;
    out.push_back(TimedPose{dataset.keyframes[k].timestamp, x});
  }
  return out;
}

}  // namespace osslam
