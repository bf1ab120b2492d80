#include "osslam/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Cholesky>

#include "osslam/error.hpp"

namespace osslam {

void validate_detection(const ObjectDetection& detection) {
  if (detection.embedding.size() == 0 || !detection.embedding.allFinite() ||
      detection.embedding.norm() == 0.0) {
    throw DataError("detection embedding must be finite and non-zero");
  }
  if (!detection.point.allFinite()) throw DataError("detection point must be finite");
  const Mat3& c = detection.covariance;
  if (!c.allFinite() || (c - c.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + c.norm())) {
    throw DataError("detection covariance must be finite and symmetric");
  }
  Eigen::LLT<Mat3> llt(c);
  if (llt.info() != Eigen::Success) throw DataError("detection covariance is not positive definite");
}

FeatureGrid FeatureGrid::zeros(int height, int width, int dim, int heads) {
  FeatureGrid g;
  g.height = height;
  g.width = width;
  g.dim = dim;
  g.heads = heads;
  g.features.assign(std::size_t(height) * width * dim, 0.0f);
  g.attention.assign(std::size_t(heads) * height * width, 0.0f);
  g.depth.assign(std::size_t(height) * width, 0.0f);
  return g;
}

void FeatureGrid::validate() const {
  if (height < 2 || width < 2 || dim < 2 || heads < 1) {
    throw DataError("feature grid needs H, W, D >= 2 and A >= 1");
  }
  const std::size_t n = std::size_t(height) * width;
  if (features.size() != n * dim || attention.size() != n * heads || depth.size() != n) {
    throw DataError("feature grid buffers do not match the declared shape");
  }
  for (float f : features) {
    if (!std::isfinite(f)) throw DataError("feature grid contains non-finite features");
  }
  for (float a : attention) {
    if (!(a >= 0.0f) || !std::isfinite(a)) throw DataError("attention weights must be finite and >= 0");
  }
  for (float d : depth) {
    if (!(d >= 0.0f) || !std::isfinite(d)) throw DataError("depth must be finite and >= 0");
  }
}

int BinaryMask::count() const {
  return static_cast<int>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Mat3 RangeNoiseModel::covariance(double range) const {
  const double sigma = sigma_floor + sigma_per_meter * range;
  return sigma * sigma * Mat3::Identity();
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMatrix feature_matrix(const FeatureGrid& grid) {
  RowMatrix x(grid.patch_count(), grid.dim);
  for (int i = 0; i < grid.patch_count(); ++i) {
    for (int d = 0; d < grid.dim; ++d) x(i, d) = grid.features[std::size_t(i) * grid.dim + d];
  }
  return x;
}

int count_distinct_rows(const RowMatrix& x) {
  std::vector<int> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](int a, int b) {
    for (int d = 0; d < x.cols(); ++d) {
      if (x(a, d) != x(b, d)) return x(a, d) < x(b, d);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  int distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

RowMatrix kmeans_plus_plus(const RowMatrix& x, int k, std::mt19937_64& rng) {
  const int n = static_cast<int>(x.rows());
  RowMatrix centers(k, x.cols());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int first = std::min(n - 1, static_cast<int>(unit(rng) * n));
  centers.row(0) = x.row(first);
  std::vector<double> d2(n);
  for (int i = 0; i < n; ++i) d2[i] = (x.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    int pick = n - 1;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.row(c) = x.row(pick);
    for (int i = 0; i < n; ++i) d2[i] = std::min(d2[i], (x.row(i) - centers.row(c)).squaredNorm());
  }
  return centers;
}

std::vector<int> assign(const RowMatrix& x, const RowMatrix& centers) {
  std::vector<int> labels(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (x.row(i) - centers.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        best_c = static_cast<int>(c);
      }
    }
    labels[i] = best_c;
  }
  return labels;
}

// Means of the labelled groups. An empty cluster takes over the point farthest
// from its own cluster mean, which can only lower the objective.
RowMatrix update_means(const RowMatrix& x, std::vector<int>& labels, int k) {
  const Eigen::Index dim = x.cols();
  for (;;) {
    RowMatrix sums = RowMatrix::Zero(k, dim);
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      sums.row(labels[i]) += x.row(i);
      ++counts[labels[i]];
    }
    int empty = -1;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        empty = c;
        break;
      }
      sums.row(c) /= counts[c];
    }
    if (empty < 0) return sums;
    for (int c = empty; c < k; ++c) {
      if (counts[c] > 0) sums.row(c) /= counts[c];
    }
    double worst = -1.0;
    Eigen::Index worst_i = -1;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (counts[labels[i]] < 2) continue;
      const double d = (x.row(i) - sums.row(labels[i])).squaredNorm();
      if (d > worst) {
        worst = d;
        worst_i = i;
      }
    }
    if (worst_i < 0) throw NumericalError("k-means could not repopulate an empty cluster");
    labels[worst_i] = empty;
  }
}

double wcss(const RowMatrix& x, const std::vector<int>& labels, const RowMatrix& centers) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) s += (x.row(i) - centers.row(labels[i])).squaredNorm();
  return s;
}

}  // namespace

ClusterMap cluster_features(const FeatureGrid& grid, int k, int max_iterations, std::uint64_t seed, int restarts) {
  grid.validate();
  if (k < 1 || k > grid.patch_count()) throw UsageError("k must lie in [1, H*W]");
  if (max_iterations < 1) throw UsageError("max_iterations must be >= 1");
  if (restarts < 1) throw UsageError("restarts must be >= 1");
  const RowMatrix x = feature_matrix(grid);
  if (k > count_distinct_rows(x)) {
    throw UsageError("k = " + std::to_string(k) + " exceeds the number of distinct feature vectors");
  }

  std::mt19937_64 rng(seed);
  ClusterMap best;
  for (int run = 0; run < restarts; ++run) {
    RowMatrix centers = kmeans_plus_plus(x, k, rng);
    std::vector<int> labels = assign(x, centers);

    ClusterMap out;
    out.height = grid.height;
    out.width = grid.width;
    out.k = k;
    for (int it = 0; it < max_iterations; ++it) {
      centers = update_means(x, labels, k);
      out.wcss_history.push_back(wcss(x, labels, centers));
      std::vector<int> next = assign(x, centers);
      if (next == labels) {
        out.converged = true;
        break;
      }
      labels = std::move(next);
    }
    if (!out.converged) {
      centers = update_means(x, labels, k);
      out.wcss_history.push_back(wcss(x, labels, centers));
    }
    out.labels = std::move(labels);
    out.centroids = centers;
    // Strict comparison keeps the earliest run on ties.
    if (run == 0 || out.wcss_history.back() < best.wcss_history.back()) best = std::move(out);
  }
  return best;
}

std::vector<int> vote_saliency(const ClusterMap& clusters, const FeatureGrid& grid,
                               double vote_threshold, double attention_mass) {
  if (!(vote_threshold >= 0.0 && vote_threshold <= 1.0)) throw UsageError("vote_threshold must lie in [0, 1]");
  if (!(attention_mass > 0.0 && attention_mass <= 1.0)) throw UsageError("attention_mass must lie in (0, 1]");
  const int n = grid.patch_count();
  std::vector<int> sizes(clusters.k, 0);
  for (int l : clusters.labels) ++sizes[l];

  std::vector<int> votes(clusters.k, 0);
  std::vector<int> order(n);
  std::vector<int> attended(clusters.k);
  for (int h = 0; h < grid.heads; ++h) {
    const float* a = grid.attention.data() + std::size_t(h) * n;
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += a[i];
    if (total <= 0.0) continue;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int p, int q) { return a[p] > a[q]; });
    // Cut at the value where the cumulative mass reaches the target; ties
    // with the cut value stay attended.
    double cum = 0.0;
    float cut = a[order.back()];
    for (int i : order) {
      cum += a[i];
      if (cum >= attention_mass * total) {
        cut = a[i];
        break;
      }
    }
    std::fill(attended.begin(), attended.end(), 0);
    for (int i = 0; i < n; ++i) {
      if (a[i] > 0.0f && a[i] >= cut) ++attended[clusters.labels[i]];
    }
    for (int c = 0; c < clusters.k; ++c) {
      if (sizes[c] > 0 && 2 * attended[c] > sizes[c]) ++votes[c];
    }
  }
  std::vector<int> salient;
  for (int c = 0; c < clusters.k; ++c) {
    if (static_cast<double>(votes[c]) / grid.heads > vote_threshold) salient.push_back(c);
  }
  return salient;
}

namespace {

BinaryMask erode(const BinaryMask& m, int r) {
  BinaryMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      bool keep = true;
      for (int dy = -r; dy <= r && keep; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (!m.in_bounds(y + dy, x + dx) || !m.at(y + dy, x + dx)) {
            keep = false;
            break;
          }
        }
      }
      out.set(y, x, keep);
    }
  }
  return out;
}

BinaryMask dilate(const BinaryMask& m, int r) {
  BinaryMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(y, x)) continue;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (m.in_bounds(y + dy, x + dx)) out.set(y + dy, x + dx);
        }
      }
    }
  }
  return out;
}

}  // namespace

BinaryMask refine_mask(const BinaryMask& mask, int radius) {
  if (radius < 0) throw UsageError("erosion radius must be >= 0");
  if (radius == 0) return mask;
  return dilate(erode(mask, radius), radius);
}

std::vector<InstanceComponent> connected_components(const BinaryMask& mask, int connectivity,
                                                    int cluster) {
  if (connectivity != 4 && connectivity != 8) throw UsageError("connectivity must be 4 or 8");
  static constexpr int kOffsets[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1},
                                         {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  const int n_offsets = connectivity == 4 ? 4 : 8;
  BinaryMask seen(mask.height(), mask.width());
  std::vector<InstanceComponent> out;
  std::deque<PatchCoord> queue;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x) || seen.at(y, x)) continue;
      InstanceComponent comp;
      comp.cluster = cluster;
      seen.set(y, x);
      queue.push_back({y, x});
      while (!queue.empty()) {
        const PatchCoord p = queue.front();
        queue.pop_front();
        comp.members.push_back(p);
        for (int o = 0; o < n_offsets; ++o) {
          const int ny = p.row + kOffsets[o][0];
          const int nx = p.col + kOffsets[o][1];
          if (mask.in_bounds(ny, nx) && mask.at(ny, nx) && !seen.at(ny, nx)) {
            seen.set(ny, nx);
            queue.push_back({ny, nx});
          }
        }
      }
      std::sort(comp.members.begin(), comp.members.end(), [](const PatchCoord& a, const PatchCoord& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
      });
      out.push_back(std::move(comp));
    }
  }
  return out;
}

std::vector<InstanceComponent> filter_components(std::vector<InstanceComponent> components,
                                                 int min_size, int height, int width) {
  std::erase_if(components, [&](const InstanceComponent& c) {
    if (c.area() < min_size) return true;
    return std::any_of(c.members.begin(), c.members.end(), [&](const PatchCoord& p) {
      return p.row == 0 || p.col == 0 || p.row == height - 1 || p.col == width - 1;
    });
  });
  return components;
}

ExtractionResult extract_objects(const std::vector<InstanceComponent>& components,
                                 const ClusterMap& clusters, const FeatureGrid& grid,
                                 const CameraIntrinsics& intrinsics, int patch_size,
                                 const RangeNoiseModel& noise) {
  if (intrinsics.fx <= 0.0 || intrinsics.fy <= 0.0) throw UsageError("focal lengths must be positive");
  if (patch_size <= 0) throw UsageError("patch size must be positive");
  ExtractionResult result;
  std::vector<double> depths;
  for (const auto& comp : components) {
    if (comp.members.empty()) continue;
    double u = 0.0, v = 0.0;
    depths.clear();
    for (const auto& p : comp.members) {
      u += (p.col + 0.5) * patch_size;
      v += (p.row + 0.5) * patch_size;
      const double d = grid.depth_at(p.row, p.col);
      if (d > 0.0) depths.push_back(d);
    }
    u /= comp.area();
    v /= comp.area();
    if (depths.empty()) {
      ++result.dropped_without_depth;
      continue;
    }
    std::sort(depths.begin(), depths.end());
    const std::size_t m = depths.size();
    const double range = m % 2 ? depths[m / 2] : 0.5 * (depths[m / 2 - 1] + depths[m / 2]);

    ObjectDetection det;
    det.embedding = clusters.centroids.row(comp.cluster).transpose();
    if (det.embedding.norm() == 0.0) {
      ++result.dropped_without_depth;
      continue;
    }
    det.point = Point3((u - intrinsics.cx) * range / intrinsics.fx,
                       (v - intrinsics.cy) * range / intrinsics.fy, range);
    det.covariance = noise.covariance(range);
    det.area = comp.area();
    result.detections.push_back(std::move(det));
  }
  return result;
}

ExtractionResult detect(const FeatureGrid& grid, const SegmentationConfig& config) {
  const ClusterMap clusters =
      cluster_features(grid, config.clusters, config.max_iterations, config.seed, config.restarts);
  const std::vector<int> salient =
      vote_saliency(clusters, grid, config.vote_threshold, config.attention_mass);

  std::vector<InstanceComponent> kept;
  for (int c : salient) {
    BinaryMask mask(grid.height, grid.width);
    for (int y = 0; y < grid.height; ++y) {
      for (int x = 0; x < grid.width; ++x) mask.set(y, x, clusters.label(y, x) == c);
    }
    mask = refine_mask(mask, config.erosion_radius);
    auto comps = filter_components(connected_components(mask, config.connectivity, c),
                                   config.min_size, grid.height, grid.width);
    for (auto& comp : comps) kept.push_back(std::move(comp));
  }
  return extract_objects(kept, clusters, grid, config.intrinsics, config.patch_size, config.noise);
}

}  // namespace osslam
