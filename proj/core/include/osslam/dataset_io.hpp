#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "osslam/association.hpp"
#include "osslam/evaluation.hpp"
#include "osslam/factor_graph.hpp"
#include "osslam/simworld.hpp"

namespace osslam {

/// Dataset JSONL, one keyframe per line:
/// {"t", "odom": {"rel": [x,y,z,qx,qy,qz,qw], "sigma": [x,y,z,roll,pitch,yaw]},
///  "detections": [{"point", "cov" (row-major 3x3), "embedding", "truth_id"}]}
/// truth_id is -1 when unknown. Parse errors throw DataError with the line number.
void write_dataset(std::ostream& out, const Dataset& dataset, const GroundTruth* truth = nullptr);

struct DatasetFile {
  Dataset dataset;
  std::vector<std::vector<int>> truth_ids;
};
DatasetFile read_dataset(std::istream& in);

void write_world(std::ostream& out, const World& world);
World read_world(std::istream& in);

/// One detection per line: {"frame", "embedding", "point", "cov", "area"}.
void write_detections(std::ostream& out, std::span<const ObjectDetection> detections, int frame = 0);

/// One landmark per line: {"id", "position", "embedding", "count"}.
void write_landmark_map(std::ostream& out, std::span<const Landmark> landmarks);
std::vector<Landmark> read_landmark_map(std::istream& in);

/// Variables, factors with their types and errors, and the total error.
void write_graph_dump(std::ostream& out, const FactorGraph& graph);

/// One line per detection with its gated hypotheses, the decision and the
/// landmark it was bound to (-1 when withheld).
void write_association_debug(std::ostream& out, int keyframe, const FrameAssociation& association,
                             std::span<const int> landmarks = {});
std::vector<AssociationRecord> read_association_debug(std::istream& in);

}  // namespace osslam
