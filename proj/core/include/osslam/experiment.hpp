#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "osslam/evaluation.hpp"
#include "osslam/simworld.hpp"
#include "osslam/slam.hpp"

namespace osslam {

struct AppConfig;

enum class Method { ml, em, mm, geometric_only, closed_set, odom_only };

std::string_view to_string(Method method);
/// Throws UsageError for unknown names.
Method parse_method(std::string_view name);

struct RunResult {
  std::vector<TimedPose> trajectory;
  std::vector<Landmark> landmarks;
};

using KeyframeCallback = std::function<void(int keyframe, const KeyframeReport& report)>;

/// Feeds every keyframe to a SlamSystem and runs the final solve.
RunResult run_slam(const Dataset& dataset, const SlamConfig& config, const KeyframeCallback& on_keyframe = {});

RunResult run_method(Method method, const Simulation& sim, const SlamConfig& slam, const ClosedSetConfig& closed_set,
                     std::uint64_t seed);

struct ResultRow {
  Method method = Method::ml;
  double multiplier = 1.0;
  std::uint64_t seed = 0;
  std::size_t keyframes = 0;
  ApeStats ape;
  MapReport map;
};

struct AggregateRow {
  Method method = Method::ml;
  double multiplier = 1.0;
  std::size_t runs = 0;
  double ape_mean = 0.0;
  double ape_rmse = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double landmarks = 0.0;
};

struct SweepResult {
  std::vector<ResultRow> rows;  // multiplier-major, then seed, then method
  std::vector<AggregateRow> aggregates;
};

std::vector<AggregateRow> aggregate(std::span<const ResultRow> rows);

/// Runs every (multiplier, seed) cell, one dataset per cell shared by all
/// methods. Cells run on up to sweep.workers threads; rows are handed to
/// on_row in canonical order as soon as all earlier cells are done.
SweepResult run_experiment(const AppConfig& config, const std::function<void(const ResultRow&)>& on_row = {});

void write_results_csv_header(std::ostream& out);
void write_results_csv_row(std::ostream& out, const ResultRow& row);
void write_results_csv(std::ostream& out, std::span<const ResultRow> rows);
void write_results_json(std::ostream& out, const SweepResult& result);

}  // namespace osslam
