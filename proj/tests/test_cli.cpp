#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& work() {
  static const fs::path d = [] {
    const fs::path p = fs::temp_directory_path() / ("icnn_cli_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = "cd '" + work().string() + "' && '" ICNN_CLI "' " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      files[fs::relative(e.path(), root).string()] = ss.str();
    }
  return files;
}

const char* kTiny = R"({"seed": 3,
 "paths": {"raw": "raw", "processed": "proc", "checkpoint": "run/model.ckpt"},
 "model": {"stack_depth": 1, "interweave_depth": 2, "downsample_every": 2, "base_width": 2, "height": 10, "width": 10},
 "data": {"clips": [2, 1, 1], "dims": [10, 10], "flow": {"smoothness": 0.5, "iterations": 10}, "train_stride": 10},
 "train": {"batch_size": 8, "max_epochs": 1, "lr": 0.003},
 "eval": {"stride": 3, "warmup": 1}})";

struct Cleanup {
  ~Cleanup() {
    std::error_code ec;
    fs::remove_all(work(), ec);
  }
} cleanup;

}  // namespace

TEST_CASE("help exits zero and documents every flag") {
  const std::map<std::string, std::vector<std::string>> flags{
      {"synth", {"--config", "--seed", "--out"}},
      {"preprocess", {"--config", "--seed", "--raw", "--out"}},
      {"train", {"--config", "--seed", "--model", "--block", "--labels", "--data", "--out"}},
      {"eval", {"--config", "--seed", "--checkpoint", "--data", "--split", "--labels", "--occlude", "--vote-n", "--out"}},
      {"bench", {"--config", "--seed", "--model", "--block", "--blocks", "--iterations", "--out"}},
      {"export-acts", {"--config", "--seed", "--checkpoint", "--data", "--split", "--clip", "--start", "--tags", "--out"}},
  };
  const Result top = run("--help");
  CHECK(top.code == 0);
  for (const auto& [sub, list] : flags) {
    CHECK(top.out.find(sub) != std::string::npos);
    const Result r = run(sub + " --help");
    CHECK(r.code == 0);
    for (const std::string& f : list) {
      INFO(sub << " " << f);
      CHECK(r.out.find(f) != std::string::npos);
    }
  }
}

TEST_CASE("usage and runtime exit codes") {
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("synth --nope").code == 2);
  CHECK(run("bench --model rnn").code == 2);
  CHECK(run("eval --vote-n 0").code == 2);
  write(work() / "bad.json", R"({"train": {"learning_rate": 1}})");
  CHECK(run("synth --config bad.json --out x").code == 2);
  write(work() / "broken.json", "{");
  CHECK(run("synth --config broken.json --out x").code == 2);
  CHECK(run("synth --config missing.json --out x").code == 2);
  CHECK(run("synth").code == 2);  // no output directory anywhere
  CHECK(run("eval --checkpoint nowhere.ckpt --data nowhere").code == 1);
}

TEST_CASE("pipeline") {
  write(work() / "tiny.json", kTiny);

  // Same seed twice gives identical trees; the flag wins over the config seed.
  REQUIRE(run("synth --config tiny.json --seed 7 --out s7a").code == 0);
  REQUIRE(run("synth --config tiny.json --seed 7 --out s7b").code == 0);
  REQUIRE(run("synth --config tiny.json --out s3").code == 0);
  CHECK(tree(work() / "s7a") == tree(work() / "s7b"));
  CHECK(tree(work() / "s7a") != tree(work() / "s3"));

  REQUIRE(run("synth --config tiny.json").code == 0);
  REQUIRE(run("preprocess --config tiny.json").code == 0);
  CHECK(fs::exists(work() / "proc" / "manifest.json"));

  const Result tr = run("train --config tiny.json --out run");
  REQUIRE(tr.code == 0);
  CHECK(json::parse(tr.out)["steps"].get<int>() > 0);
  for (const char* f : {"model.ckpt", "model.ckpt.json", "history.csv", "train_summary.json", "run_config.json"})
    CHECK(fs::exists(work() / "run" / f));
  std::ifstream hist(work() / "run" / "history.csv");
  std::string header;
  std::getline(hist, header);
  CHECK(header == "step,split,loss,accuracy");

  const Result e15 = run("eval --config tiny.json --out rep");
  const Result e1 = run("eval --config tiny.json --vote-n 1");
  REQUIRE(e15.code == 0);
  REQUIRE(e1.code == 0);
  const json r15 = json::parse(e15.out), r1 = json::parse(e1.out);
  CHECK(r15["accuracy"]["raw"] == r1["accuracy"]["raw"]);
  CHECK(r1["accuracy"]["voted"] == r1["accuracy"]["raw"]);
  CHECK(r1["vote_n"] == 1);
  CHECK(json::parse(tree(work() / "rep").at("report.json")) == r15);

  const json agg = json::parse(run("eval --config tiny.json --labels agg5 --occlude").out);
  CHECK(agg["labels"] == "agg5");
  CHECK(agg["occlusion"] == "block_front");
  CHECK(agg["classes"] == 5);

  const Result ex = run("export-acts --config tiny.json --out acts");
  CHECK(ex.code == 0);
  CHECK(fs::file_size(work() / "acts" / "activations.bin") > 0);
  CHECK(run("export-acts --config tiny.json --tags no/such/tag --out acts").code == 1);
}

TEST_CASE("bench reports the block ordering") {
  write(work() / "tiny.json", kTiny);
  const Result r = run("bench --config tiny.json --blocks vanilla,mobilenet,mobilenet_v2 --iterations 2");
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  std::map<std::string, json> rows;
  for (const json& row : j["rows"]) rows[row["block"]] = row;
  REQUIRE(rows.size() == 3);
  CHECK(rows["mobilenet"]["block_params"] < rows["vanilla"]["block_params"]);
  CHECK(rows["mobilenet"]["model_params"] < rows["vanilla"]["model_params"]);
  CHECK(rows["mobilenet"]["latency_ms"]["p50"] > 0.0);
}
