#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "osslam/detection.hpp"

namespace osslam {

/// H x W grid of D-dimensional patch features with A attention heads and a
/// depth channel (meters, 0 marks an invalid reading).
struct FeatureGrid {
  int height = 0;
  int width = 0;
  int dim = 0;
  int heads = 0;
  std::vector<float> features;   // H*W*D, row-major, feature index fastest
  std::vector<float> attention;  // A*H*W
  std::vector<float> depth;      // H*W

  static FeatureGrid zeros(int height, int width, int dim, int heads);

  int patch_count() const { return height * width; }
  int index(int row, int col) const { return row * width + col; }
  float* feature(int row, int col) { return features.data() + static_cast<std::size_t>(index(row, col)) * dim; }
  const float* feature(int row, int col) const {
    return features.data() + static_cast<std::size_t>(index(row, col)) * dim;
  }
  float& attention_at(int head, int row, int col) {
    return attention[static_cast<std::size_t>(head) * patch_count() + index(row, col)];
  }
  float attention_at(int head, int row, int col) const {
    return attention[static_cast<std::size_t>(head) * patch_count() + index(row, col)];
  }
  float& depth_at(int row, int col) { return depth[index(row, col)]; }
  float depth_at(int row, int col) const { return depth[index(row, col)]; }

  /// Throws DataError on shape mismatches, non-finite features, or negative
  /// attention/depth.
  void validate() const;
};

/// Binary file layout: "FGRD", u32 H, u32 W, u32 D, u32 A, then features,
/// attention and depth as little-endian float32.
void write_feature_grid(std::ostream& out, const FeatureGrid& grid);
FeatureGrid read_feature_grid(std::istream& in);

struct ClusterMap {
  int height = 0;
  int width = 0;
  int k = 0;
  std::vector<int> labels;     // H*W, each in [0, k)
  Eigen::MatrixXd centroids;   // k x D
  std::vector<double> wcss_history;
  bool converged = false;

  int label(int row, int col) const { return labels[row * width + col]; }
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width) : height_(height), width_(width), bits_(std::size_t(height) * width, 0) {}

  int height() const { return height_; }
  int width() const { return width_; }
  bool at(int row, int col) const { return bits_[std::size_t(row) * width_ + col] != 0; }
  void set(int row, int col, bool value = true) { bits_[std::size_t(row) * width_ + col] = value ? 1 : 0; }
  bool in_bounds(int row, int col) const { return row >= 0 && col >= 0 && row < height_ && col < width_; }
  int count() const;
  bool operator==(const BinaryMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct PatchCoord {
  int row = 0;
  int col = 0;
  bool operator==(const PatchCoord&) const = default;
};

struct InstanceComponent {
  int cluster = -1;
  std::vector<PatchCoord> members;  // row-major order
  int area() const { return static_cast<int>(members.size()); }
};

struct CameraIntrinsics {
  double fx = 256.0;
  double fy = 256.0;
  double cx = 128.0;
  double cy = 128.0;
};

/// Isotropic point noise whose standard deviation grows linearly with range.
struct RangeNoiseModel {
  double sigma_per_meter = 0.025;
  double sigma_floor = 0.0;
  Mat3 covariance(double range) const;
};

struct SegmentationConfig {
  int clusters = 6;
  int max_iterations = 100;
  int restarts = 5;
  std::uint64_t seed = 0;
  double vote_threshold = 0.5;
  /// Fraction of each head's attention mass marked as attended.
  double attention_mass = 0.5;
  int erosion_radius = 1;
  int connectivity = 8;
  int min_size = 4;
  int patch_size = 8;
  CameraIntrinsics intrinsics;
  RangeNoiseModel noise;
};

/// Lloyd's K-means with k-means++ seeding; the lowest-WCSS of `restarts`
/// independent runs is returned. Throws UsageError if k is out of range or
/// exceeds the number of distinct feature vectors.
ClusterMap cluster_features(const FeatureGrid& grid, int k, int max_iterations, std::uint64_t seed,
                            int restarts = 1);

/// Sorted ids of clusters a strict fraction > vote_threshold of heads vote for.
std::vector<int> vote_saliency(const ClusterMap& clusters, const FeatureGrid& grid,
                               double vote_threshold, double attention_mass = 0.5);

/// Morphological opening with a (2r+1)^2 square; out-of-grid cells count as background.
BinaryMask refine_mask(const BinaryMask& mask, int radius);

/// Maximal connected sets of true cells (4- or 8-connectivity), numbered in
/// row-major discovery order.
std::vector<InstanceComponent> connected_components(const BinaryMask& mask, int connectivity,
                                                    int cluster = -1);

std::vector<InstanceComponent> filter_components(std::vector<InstanceComponent> components,
                                                 int min_size, int height, int width);

struct ExtractionResult {
  std::vector<ObjectDetection> detections;
  int dropped_without_depth = 0;
};

ExtractionResult extract_objects(const std::vector<InstanceComponent>& components,
                                 const ClusterMap& clusters, const FeatureGrid& grid,
                                 const CameraIntrinsics& intrinsics, int patch_size,
                                 const RangeNoiseModel& noise);

/// Full patch-grid pipeline: cluster, vote, refine, split into instances,
/// filter, and extract latent + geometric centroids.
ExtractionResult detect(const FeatureGrid& grid, const SegmentationConfig& config);

}  // namespace osslam
