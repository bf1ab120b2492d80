#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "osslam/config.hpp"
#include "osslam/dataset_io.hpp"
#include "osslam/error.hpp"
#include "osslam/evaluation.hpp"
#include "osslam/experiment.hpp"
#include "osslam/segmentation.hpp"
#include "osslam/simworld.hpp"
#include "osslam/slam.hpp"

namespace {

using namespace osslam;
using nlohmann::ordered_json;

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

AppConfig config_or_default(const std::string& path) { return path.empty() ? AppConfig{} : load_config(path); }

void print_json(const ordered_json& j) { std::cout << j.dump(2) << '\n'; }

struct SimulateArgs {
  std::string config, out, gt, world;
  std::uint64_t seed = 0;
  std::optional<double> multiplier;
};

void run_simulate(const SimulateArgs& a) {
  AppConfig cfg = config_or_default(a.config);
  if (a.multiplier) cfg.scenario.noise.multiplier = *a.multiplier;
  cfg.validate();
  const Simulation sim = make_dataset(cfg.scenario, a.seed);
  {
    auto out = open_out(a.out);
    write_dataset(out, sim.dataset, &sim.truth);
  }
  if (!a.gt.empty()) {
    auto out = open_out(a.gt);
    write_trajectory(out, sim.truth.trajectory);
  }
  if (!a.world.empty()) {
    auto out = open_out(a.world);
    write_world(out, sim.world);
  }
}

struct SynthArgs {
  std::string config, out, masks;
  std::uint64_t seed = 0;
  int keyframe = 0;
};

void run_synth_grid(const SynthArgs& a) {
  const AppConfig cfg = config_or_default(a.config);
  const auto trajectory = generate_trajectory(cfg.scenario.trajectory);
  if (a.keyframe < 0 || static_cast<std::size_t>(a.keyframe) >= trajectory.size())
    throw UsageError("keyframe index out of range");
  std::vector<Pose3> circuit;
  for (int k = 0; k < cfg.scenario.trajectory.keyframes_per_loop; ++k) circuit.push_back(trajectory[k].pose);
  const World world = generate_world(cfg.scenario.world, a.seed, circuit);
  const SyntheticGrid g = synthesize_feature_grid(world, trajectory[a.keyframe].pose, cfg.grid, a.seed);
  auto out = open_out(a.out, std::ios::binary);
  write_feature_grid(out, g.grid);
  if (!a.masks.empty()) {
    auto m = open_out(a.masks);
    for (std::size_t i = 0; i < g.masks.size(); ++i) {
      std::vector<int> cells;
      for (int r = 0; r < g.masks[i].height(); ++r)
        for (int c = 0; c < g.masks[i].width(); ++c)
          if (g.masks[i].at(r, c)) cells.push_back(r * g.masks[i].width() + c);
      m << ordered_json{{"object", g.object_ids[i]}, {"patches", cells}}.dump() << '\n';
    }
  }
}

struct SegmentArgs {
  std::string grid, config, out;
  int frame = 0;
};

void run_segment(const SegmentArgs& a) {
  const AppConfig cfg = config_or_default(a.config);
  auto in = open_in(a.grid, std::ios::binary);
  const FeatureGrid grid = read_feature_grid(in);
  const ExtractionResult r = detect(grid, cfg.segmentation);
  auto out = open_out(a.out);
  write_detections(out, r.detections, a.frame);
  if (r.dropped_without_depth > 0)
    std::cerr << r.dropped_without_depth << " component(s) dropped without valid depth\n";
}

struct SlamArgs {
  std::string dataset, strategy = "ml", config, out_traj, out_map, debug_da, dump_graph, world;
  std::optional<double> alpha, beta, gate_radius;
};

void run_slam_cli(const SlamArgs& a) {
  AppConfig cfg = config_or_default(a.config);
  const Method method = parse_method(a.strategy);
  if (method == Method::odom_only) throw UsageError("odom_only is an evaluation baseline, not a SLAM strategy");
  SlamConfig sc = cfg.slam;
  if (a.alpha) sc.association.alpha = *a.alpha;
  if (a.beta) sc.association.beta = *a.beta;
  if (a.gate_radius) sc.association.gate_radius = *a.gate_radius;
  if (sc.association.spawn_beta < sc.association.beta) sc.association.spawn_beta = sc.association.beta;
  switch (method) {
    case Method::em: sc.association.strategy = Strategy::em; break;
    case Method::mm: sc.association.strategy = Strategy::mm; break;
    case Method::geometric_only: sc.association.strategy = Strategy::geometric_only; break;
    default: sc.association.strategy = Strategy::ml; break;
  }
  sc.association.validate();

  auto in = open_in(a.dataset);
  DatasetFile file = read_dataset(in);
  Dataset dataset = std::move(file.dataset);
  if (method == Method::closed_set) {
    if (a.world.empty()) throw UsageError("closed_set needs --world to look up object classes");
    auto win = open_in(a.world);
    const World world = read_world(win);
    GroundTruth truth;
    truth.object_ids = file.truth_ids;
    for (const auto& ids : truth.object_ids)
      for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= world.objects.size())
          throw DataError("closed_set needs a valid truth_id on every detection");
    dataset = to_closed_set(dataset, truth, world, cfg.closed_set, 0);
  }

  std::ofstream debug;
  if (!a.debug_da.empty()) debug = open_out(a.debug_da);
  SlamSystem slam(sc);
  for (std::size_t k = 0; k < dataset.keyframes.size(); ++k) {
    const Keyframe& kf = dataset.keyframes[k];
    const KeyframeReport rep = slam.add_keyframe(kf.odometry, kf.detections);
    if (debug.is_open()) write_association_debug(debug, static_cast<int>(k), rep.association, rep.landmarks);
  }
  slam.finish();

  if (!a.out_traj.empty()) {
    std::vector<TimedPose> traj;
    const auto poses = slam.trajectory();
    for (std::size_t k = 0; k < poses.size(); ++k) traj.push_back({dataset.keyframes[k].timestamp, poses[k]});
    auto out = open_out(a.out_traj);
    write_trajectory(out, traj);
  }
  if (!a.out_map.empty()) {
    auto out = open_out(a.out_map);
    write_landmark_map(out, slam.landmarks());
  }
  if (!a.dump_graph.empty()) {
    auto out = open_out(a.dump_graph);
    write_graph_dump(out, slam.graph());
  }
}

struct EvalApeArgs {
  std::string est, gt;
  bool no_align = false;
};

void run_eval_ape(const EvalApeArgs& a) {
  auto ein = open_in(a.est);
  auto gin = open_in(a.gt);
  const auto est = read_trajectory(ein);
  const auto gt = read_trajectory(gin);
  const ApeStats s = ape(est, gt, !a.no_align);
  print_json({{"rmse", s.rmse}, {"mean", s.mean}, {"median", s.median}, {"max", s.max}, {"aligned", s.aligned},
              {"count", s.count}});
}

struct EvalMapArgs {
  std::string map, world, config;
  std::optional<double> tau, alpha;
};

void run_eval_map(const EvalMapArgs& a) {
  const AppConfig cfg = config_or_default(a.config);
  auto min = open_in(a.map);
  auto win = open_in(a.world);
  const auto landmarks = read_landmark_map(min);
  const World world = read_world(win);
  const MapReport r = map_report(landmarks, world, a.tau.value_or(cfg.evaluation.match_tau),
                                 a.alpha.value_or(cfg.slam.association.alpha));
  print_json({{"estimated", r.estimated},
              {"true_objects", r.true_objects},
              {"matched", r.matched},
              {"precision", r.precision},
              {"precision_defined", r.precision_defined},
              {"recall", r.recall}});
}

struct EvalDaArgs {
  std::string debug, dataset;
};

void run_eval_da(const EvalDaArgs& a) {
  auto din = open_in(a.debug);
  auto sin = open_in(a.dataset);
  const auto records = read_association_debug(din);
  const DatasetFile file = read_dataset(sin);
  const DaReport r = evaluate_associations(records, file.truth_ids);
  print_json({{"detections", r.detections},
              {"associated", r.associated},
              {"correct", r.correct},
              {"precision", r.precision},
              {"new_landmarks", r.new_landmarks},
              {"duplicate_landmarks", r.duplicate_landmarks},
              {"withheld", r.withheld}});
}

struct SweepArgs {
  std::string config, out;
  std::optional<int> workers;
};

void run_sweep(const SweepArgs& a) {
  AppConfig cfg = config_or_default(a.config);
  if (a.workers) cfg.sweep.workers = *a.workers;
  cfg.validate();
  std::filesystem::create_directories(a.out);
  const std::filesystem::path dir(a.out);
  auto csv = open_out((dir / "results.csv").string());
  write_results_csv_header(csv);
  csv.flush();
  const SweepResult result = run_experiment(cfg, [&](const ResultRow& row) {
    write_results_csv_row(csv, row);
    csv.flush();
  });
  auto js = open_out((dir / "results.json").string());
  write_results_json(js, result);
  for (const auto& g : result.aggregates) {
    std::printf("%-15s m=%-5.2f runs=%zu ape_mean=%.4f recall=%.3f precision=%.3f\n",
                std::string(to_string(g.method)).c_str(), g.multiplier, g.runs, g.ape_mean, g.recall, g.precision);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-set semantic SLAM toolkit"};
  app.require_subcommand(0, 1);
  bool dump_default = false;
  app.add_flag("--dump-default-config", dump_default, "Print the full default configuration as JSON");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  simulate->add_option("--config", sim.config, "JSON config file");
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_option("--multiplier", sim.multiplier, "Odometry noise multiplier (overrides config)");
  simulate->add_option("--out", sim.out, "Dataset JSONL")->required();
  simulate->add_option("--gt", sim.gt, "Ground-truth trajectory");
  simulate->add_option("--world", sim.world, "World JSON");

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth-grid", "Render a synthetic feature grid at one ground-truth keyframe");
  synth->add_option("--config", syn.config, "JSON config file");
  synth->add_option("--seed", syn.seed, "Random seed");
  synth->add_option("--keyframe", syn.keyframe, "Keyframe index on the ground-truth trajectory");
  synth->add_option("--out", syn.out, "Feature grid file")->required();
  synth->add_option("--masks", syn.masks, "Ground-truth masks JSONL");

  SegmentArgs seg;
  auto* segment = app.add_subcommand("segment", "Extract object detections from a feature grid");
  segment->add_option("--grid", seg.grid, "Feature grid file")->required();
  segment->add_option("--config", seg.config, "JSON config file");
  segment->add_option("--frame", seg.frame, "Frame index written with each detection");
  segment->add_option("--out", seg.out, "Detections JSONL")->required();

  SlamArgs sl;
  auto* slam = app.add_subcommand("slam", "Run SLAM on a dataset");
  slam->add_option("--dataset", sl.dataset, "Dataset JSONL")->required();
  slam->add_option("--strategy", sl.strategy, "ml|em|mm|geometric_only|closed_set")
      ->check(CLI::IsMember({"ml", "em", "mm", "geometric_only", "closed_set"}));
  slam->add_option("--config", sl.config, "JSON config file");
  slam->add_option("--alpha", sl.alpha, "Cosine class gate");
  slam->add_option("--beta", sl.beta, "Chi-square gate confidence");
  slam->add_option("--gate-radius", sl.gate_radius, "Geometric pre-filter radius (m)");
  slam->add_option("--world", sl.world, "World JSON (closed_set only)");
  slam->add_option("--out-traj", sl.out_traj, "Estimated trajectory");
  slam->add_option("--out-map", sl.out_map, "Landmark map JSONL");
  slam->add_option("--debug-da", sl.debug_da, "Association debug JSONL");
  slam->add_option("--dump-graph", sl.dump_graph, "Factor graph JSON");

  auto* eval = app.add_subcommand("eval", "Evaluate trajectories, maps and associations");
  eval->require_subcommand(1);
  EvalApeArgs ea;
  auto* eval_ape = eval->add_subcommand("ape", "Absolute pose error");
  eval_ape->add_option("--est", ea.est, "Estimated trajectory")->required();
  eval_ape->add_option("--gt", ea.gt, "Ground-truth trajectory")->required();
  eval_ape->add_flag("--no-align", ea.no_align, "Skip rigid alignment");
  EvalMapArgs em;
  auto* eval_map = eval->add_subcommand("map", "Map precision and recall");
  eval_map->add_option("--map", em.map, "Landmark map JSONL")->required();
  eval_map->add_option("--world", em.world, "World JSON")->required();
  eval_map->add_option("--config", em.config, "JSON config file");
  eval_map->add_option("--tau", em.tau, "Match distance (m)");
  eval_map->add_option("--alpha", em.alpha, "Class consistency threshold");
  EvalDaArgs ed;
  auto* eval_da = eval->add_subcommand("da", "Association precision from a debug log");
  eval_da->add_option("--debug", ed.debug, "Association debug JSONL")->required();
  eval_da->add_option("--dataset", ed.dataset, "Dataset JSONL with truth ids")->required();

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Strategies x noise multipliers x seeds experiment");
  sweep->add_option("--config", sw.config, "JSON config file");
  sweep->add_option("--out", sw.out, "Output directory")->required();
  sweep->add_option("--workers", sw.workers, "Parallel cells (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (dump_default) {
      write_config(std::cout, AppConfig{});
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return 1;
    }
    if (simulate->parsed()) run_simulate(sim);
    else if (synth->parsed()) run_synth_grid(syn);
    else if (segment->parsed()) run_segment(seg);
    else if (slam->parsed()) run_slam_cli(sl);
    else if (eval_ape->parsed()) run_eval_ape(ea);
    else if (eval_map->parsed()) run_eval_map(em);
    else if (eval_da->parsed()) run_eval_da(ed);
    else if (sweep->parsed()) run_sweep(sw);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
