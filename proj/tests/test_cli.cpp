#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(OSSLAM_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path workdir() {
  const fs::path d = fs::current_path() / "cli_work";
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("cli end to end") {
  const fs::path d = workdir();
  const std::string cfg = (d / "small.json").string();
  write(cfg, R"({"trajectory": {"loops": 1, "keyframes_per_loop": 150}, "world": {"min_views": 3},
                 "sweep": {"methods": ["ml", "odom_only"], "multipliers": [1], "seeds": [0, 1]}})");

  CHECK(run("--help").code == 0);
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);

  const Result dump = run("--dump-default-config");
  CHECK(dump.code == 0);
  const auto defaults = nlohmann::json::parse(dump.out);
  CHECK(defaults.contains("association"));
  CHECK(defaults["trajectory"]["loops"] == 3);

  const std::string ds = (d / "ds.jsonl").string(), gt = (d / "gt.txt").string(), world = (d / "world.json").string();
  REQUIRE(run("simulate --config " + cfg + " --seed 3 --out " + ds + " --gt " + gt + " --world " + world).code == 0);
  CHECK(fs::file_size(ds) > 0);

  const std::string traj = (d / "est.txt").string(), map = (d / "map.jsonl").string(), dbg = (d / "da.jsonl").string(),
                    graph = (d / "graph.json").string();
  REQUIRE(run("slam --dataset " + ds + " --config " + cfg + " --strategy em --out-traj " + traj + " --out-map " + map +
              " --debug-da " + dbg + " --dump-graph " + graph)
              .code == 0);
  CHECK(nlohmann::json::parse(slurp(graph)).contains("factors"));

  const Result ape = run("eval ape --est " + traj + " --gt " + gt);
  REQUIRE(ape.code == 0);
  const auto aj = nlohmann::json::parse(ape.out);
  CHECK(aj["rmse"].get<double>() < 0.1);

  const Result mr = run("eval map --map " + map + " --world " + world);
  REQUIRE(mr.code == 0);
  CHECK(nlohmann::json::parse(mr.out)["recall"].get<double>() > 0.8);

  const Result da = run("eval da --debug " + dbg + " --dataset " + ds);
  REQUIRE(da.code == 0);
  CHECK(nlohmann::json::parse(da.out)["precision"].get<double>() > 0.9);

  const std::string closed_no_world = "slam --dataset " + ds + " --strategy closed_set --out-traj " + traj;
  CHECK(run(closed_no_world).code == 1);
  CHECK(run("slam --dataset " + ds + " --strategy closed_set --world " + world + " --out-traj " + traj).code == 0);

  const std::string grid = (d / "frame.fgrd").string(), dets = (d / "dets.jsonl").string();
  REQUIRE(run("synth-grid --config " + cfg + " --seed 3 --keyframe 10 --out " + grid).code == 0);
  REQUIRE(run("segment --grid " + grid + " --frame 10 --out " + dets).code == 0);

  const std::string out1 = (d / "sweep1").string(), out2 = (d / "sweep2").string();
  REQUIRE(run("sweep --config " + cfg + " --out " + out1).code == 0);
  REQUIRE(run("sweep --config " + cfg + " --out " + out2 + " --workers 2").code == 0);
  const std::string csv = slurp(fs::path(out1) / "results.csv");
  CHECK(csv == slurp(fs::path(out2) / "results.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(nlohmann::json::parse(slurp(fs::path(out1) / "results.json"))["rows"].size() == 4);
}

TEST_CASE("cli error codes") {
  const fs::path d = workdir();
  CHECK(run("slam --dataset " + (d / "missing.jsonl").string()).code == 2);
  write(d / "bad.jsonl", "{not json}\n");
  CHECK(run("slam --dataset " + (d / "bad.jsonl").string()).code == 2);
  write(d / "unknown.json", R"({"association": {"nope": 1}})");
  CHECK(run("sweep --config " + (d / "unknown.json").string() + " --out " + (d / "s").string()).code == 1);
  write(d / "broken.json", "{");
  CHECK(run("sweep --config " + (d / "broken.json").string() + " --out " + (d / "s").string()).code == 2);
  CHECK(run("slam --dataset x --strategy magic").code == 1);
  CHECK(run("eval ape --est " + (d / "none.txt").string() + " --gt " + (d / "none.txt").string()).code == 2);
}
