#include "osslam/experiment.hpp"

#include <array>
#include <cstdio>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "osslam/config.hpp"
#include "osslam/error.hpp"

namespace osslam {

namespace {
constexpr std::array<std::string_view, 6> kMethodNames{"ml", "em", "mm", "geometric_only", "closed_set", "odom_only"};
}

std::string_view to_string(Method method) { return kMethodNames[static_cast<std::size_t>(method)]; }

Method parse_method(std::string_view name) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
    if (kMethodNames[i] == name) return static_cast<Method>(i);
  }
  throw UsageError("unknown method: " + std::string(name));
}

RunResult run_slam(const Dataset& dataset, const SlamConfig& config, const KeyframeCallback& on_keyframe) {
  SlamSystem slam(config);
  for (std::size_t k = 0; k < dataset.keyframes.size(); ++k) {
    const Keyframe& kf = dataset.keyframes[k];
    KeyframeReport report = slam.add_keyframe(kf.odometry, kf.detections);
    if (on_keyframe) on_keyframe(static_cast<int>(k), report);
  }
  slam.finish();
  RunResult out;
  const std::vector<Pose3> poses = slam.trajectory();
  for (std::size_t k = 0; k < poses.size(); ++k) out.trajectory.push_back(TimedPose{dataset.keyframes[k].timestamp, poses[k]});
  out.landmarks = slam.landmarks();
  return out;
}

RunResult run_method(Method method, const Simulation& sim, const SlamConfig& slam, const ClosedSetConfig& closed_set,
                     std::uint64_t seed) {
  SlamConfig cfg = slam;
  switch (method) {
    case Method::odom_only:
      return RunResult{integrate_odometry(sim.dataset, slam.prior_mean), {}};
    case Method::closed_set:
      cfg.association.strategy = Strategy::ml;
      return run_slam(to_closed_set(sim.dataset, sim.truth, sim.world, closed_set, seed), cfg);
    case Method::ml: cfg.association.strategy = Strategy::ml; break;
    case Method::em: cfg.association.strategy = Strategy::em; break;
    case Method::mm: cfg.association.strategy = Strategy::mm; break;
    case Method::geometric_only: cfg.association.strategy = Strategy::geometric_only; break;
  }
  return run_slam(sim.dataset, cfg);
}

std::vector<AggregateRow> aggregate(std::span<const ResultRow> rows) {
  std::map<std::pair<double, int>, AggregateRow> acc;
  for (const auto& r : rows) {
    AggregateRow& a = acc[{r.multiplier, static_cast<int>(r.method)}];
    a.method = r.method;
    a.multiplier = r.multiplier;
    ++a.runs;
    a.ape_mean += r.ape.mean;
    a.ape_rmse += r.ape.rmse;
    a.precision += r.map.precision;
    a.recall += r.map.recall;
    a.landmarks += static_cast<double>(r.map.estimated);
  }
  std::vector<AggregateRow> out;
  for (auto& [key, a] : acc) {
    const double n = static_cast<double>(a.runs);
    a.ape_mean /= n;
    a.ape_rmse /= n;
    a.precision /= n;
    a.recall /= n;
    a.landmarks /= n;
    out.push_back(a);
  }
  return out;
}

SweepResult run_experiment(const AppConfig& config, const std::function<void(const ResultRow&)>& on_row) {
  config.validate();
  std::vector<Method> methods;
  for (const auto& name : config.sweep.methods) methods.push_back(parse_method(name));
  struct Cell {
    double multiplier;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double m : config.sweep.multipliers)
    for (std::uint64_t s : config.sweep.seeds) cells.push_back({m, s});

  std::vector<std::vector<ResultRow>> results(cells.size());
  std::vector<bool> done(cells.size(), false);
  std::exception_ptr failure;
  std::mutex mu;
  std::size_t next_cell = 0, next_emit = 0;

  auto run_cell = [&](std::size_t c) {
    ScenarioConfig scenario = config.scenario;
    scenario.noise.multiplier = cells[c].multiplier;
    const Simulation sim = make_dataset(scenario, cells[c].seed);
    std::vector<ResultRow> rows;
    for (Method method : methods) {
      const RunResult run = run_method(method, sim, config.slam, config.closed_set, cells[c].seed);
      ResultRow row;
      row.method = method;
      row.multiplier = cells[c].multiplier;
      row.seed = cells[c].seed;
      row.keyframes = run.trajectory.size();
      row.ape = ape(run.trajectory, sim.truth.trajectory, config.evaluation.align);
      row.map = map_report(run.landmarks, sim.world, config.evaluation.match_tau, config.slam.association.alpha);
      rows.push_back(row);
    }
    return rows;
  };

  auto worker = [&] {
    for (;;) {
      std::size_t c;
      {
        std::lock_guard lock(mu);
        if (failure || next_cell >= cells.size()) return;
        c = next_cell++;
      }
      std::vector<ResultRow> rows;
      try {
        rows = run_cell(c);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
      std::lock_guard lock(mu);
      results[c] = std::move(rows);
      done[c] = true;
      // Emit in canonical order so streamed output is reproducible.
      while (next_emit < cells.size() && done[next_emit]) {
        if (on_row)
          for (const auto& r : results[next_emit]) on_row(r);
        ++next_emit;
      }
    }
  };

  const int workers = std::min<int>(config.sweep.workers, static_cast<int>(std::max<std::size_t>(cells.size(), 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  SweepResult out;
  for (auto& rows : results) out.rows.insert(out.rows.end(), rows.begin(), rows.end());
  out.aggregates = aggregate(out.rows);
  return out;
}

void write_results_csv_header(std::ostream& out) {
  out << "method,multiplier,seed,keyframes,ape_rmse,ape_mean,ape_median,ape_max,landmarks,true_objects,matched,"
         "precision,recall\n";
}

void write_results_csv_row(std::ostream& out, const ResultRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%.3f,%llu,%zu,%.9f,%.9f,%.9f,%.9f,%zu,%zu,%zu,%.6f,%.6f\n",
                std::string(to_string(r.method)).c_str(), r.multiplier, static_cast<unsigned long long>(r.seed),
                r.keyframes, r.ape.rmse, r.ape.mean, r.ape.median, r.ape.max, r.map.estimated, r.map.true_objects,
                r.map.matched, r.map.precision, r.map.recall);
  out << buf;
}

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows) {
  write_results_csv_header(out);
  for (const auto& r : rows) write_results_csv_row(out, r);
}

void write_results_json(std::ostream& out, const SweepResult& result) {
  using nlohmann::ordered_json;
  ordered_json rows = ordered_json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"method", std::string(to_string(r.method))},
                    {"multiplier", r.multiplier},
                    {"seed", r.seed},
                    {"keyframes", r.keyframes},
                    {"ape", {{"rmse", r.ape.rmse}, {"mean", r.ape.mean}, {"median", r.ape.median}, {"max", r.ape.max}, {"aligned", r.ape.aligned}}},
                    {"map",
                     {{"landmarks", r.map.estimated},
                      {"true_objects", r.map.true_objects},
                      {"matched", r.map.matched},
                      {"precision", r.map.precision},
                      {"precision_defined", r.map.precision_defined},
                      {"recall", r.map.recall}}}});
  }
  ordered_json agg = ordered_json::array();
  for (const auto& a : result.aggregates) {
    agg.push_back({{"method", std::string(to_string(a.method))},
                   {"multiplier", a.multiplier},
                   {"runs", a.runs},
                   {"ape_mean", a.ape_mean},
                   {"ape_rmse", a.ape_rmse},
                   {"precision", a.precision},
                   {"recall", a.recall},
                   {"landmarks", a.landmarks}});
  }
  out << ordered_json{{"rows", rows}, {"aggregates", agg}}.dump(2) << '\n';
}

}  // namespace osslam
