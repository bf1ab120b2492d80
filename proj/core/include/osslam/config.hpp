#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "osslam/segmentation.hpp"
#include "osslam/simworld.hpp"
#include "osslam/slam.hpp"

namespace osslam {

struct SweepConfig {
  std::vector<std::string> methods{"ml", "em", "mm", "geometric_only", "closed_set", "odom_only"};
  std::vector<double> multipliers{1, 2, 3, 4, 5};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int workers = 1;
};

struct EvalConfig {
  double match_tau = 0.3;  // meters
  bool align = true;
};

struct AppConfig {
  ScenarioConfig scenario;
  SlamConfig slam;
  ClosedSetConfig closed_set;
  SegmentationConfig segmentation;
  GridConfig grid;
  SweepConfig sweep;
  EvalConfig evaluation;

  /// Throws UsageError on out-of-range values.
  void validate() const;
};

/// Keys missing from the file keep their defaults. Malformed JSON throws
/// DataError; unknown keys and wrongly typed values throw UsageError.
AppConfig parse_config(std::istream& in);
AppConfig load_config(const std::string& path);
void write_config(std::ostream& out, const AppConfig& config);

}  // namespace osslam
