#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "intercnn/intercnn.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RuntimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StringDeleter {
  void operator()(char* s) const { icnn_string_free(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

struct ModelDeleter {
  void operator()(icnn_model* m) const { icnn_model_free(m); }
};
struct DatasetDeleter {
  void operator()(icnn_dataset* d) const { icnn_dataset_free(d); }
};
using ModelPtr = std::unique_ptr<icnn_model, ModelDeleter>;
using DatasetPtr = std::unique_ptr<icnn_dataset, DatasetDeleter>;

void check(icnn_status s, const std::string& what) {
  if (s == ICNN_OK) return;
  throw RuntimeError(what + " failed (" + icnn_status_string(s) + "): " + icnn_last_error());
}

// Flags shared by every subcommand. Empty strings / zero counts mean "not given".
struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string model, block, labels, out;
  bool occlude = false;
  std::size_t vote_n = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Config file merged with flag overrides, validated by the library.
json resolve_config(const Flags& f) {
  json j = json::object();
  if (!f.config.empty()) {
    try {
      j = json::parse(read_file(f.config));
    } catch (const json::exception& e) {
      throw UsageError("cannot parse " + f.config + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError(f.config + " must contain a JSON object");
  }
  auto section = [&](const char* name) -> json& {
    json& s = j[name];
    if (s.is_null()) s = json::object();
    if (!s.is_object()) throw UsageError(std::string("config section '") + name + "' must be an object");
    return s;
  };
  if (f.seed_set) j["seed"] = f.seed;
  if (!f.model.empty()) section("model")["kind"] = f.model;
  if (!f.block.empty()) {
    json& m = section("model");
    if (!m.contains("block") || !m["block"].is_object()) m["block"] = json::object();
    m["block"]["variant"] = f.block;
  }
  if (!f.labels.empty()) section("eval")["labels"] = f.labels;
  if (f.occlude) section("eval")["occlusion"] = "block_front";
  if (f.vote_n != 0) section("eval")["vote_n"] = f.vote_n;

  char* normalized = nullptr;
  const icnn_status s = icnn_config_normalize(j.dump().c_str(), &normalized);
  if (s != ICNN_OK) throw UsageError(std::string("invalid configuration: ") + icnn_last_error());
  CString holder(normalized);
  return json::parse(normalized);
}

std::string pick(const std::string& flag, const json& cfg, const char* path_key, const char* what) {
  if (!flag.empty()) return flag;
  const std::string v = cfg["paths"][path_key].get<std::string>();
  if (v.empty()) throw UsageError(std::string("no ") + what + " given (flag or paths." + path_key + " in config)");
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text << '\n';
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw RuntimeError("cannot create " + dir.string() + ": " + ec.message());
}

DatasetPtr open_split(const std::string& dir, const std::string& split) {
  icnn_dataset* d = nullptr;
  check(icnn_dataset_open(dir.c_str(), split.c_str(), &d), "opening " + split + " split of " + dir);
  return DatasetPtr(d);
}

ModelPtr load_model(const std::string& path) {
  icnn_model* m = nullptr;
  check(icnn_model_load(path.c_str(), &m), "loading " + path);
  return ModelPtr(m);
}

void history_row(void* user, uint64_t step, const char* split, double loss, double accuracy) {
  auto* out = static_cast<std::ofstream*>(user);
  *out << step << ',' << split << ',' << loss << ',' << accuracy << '\n';
  out->flush();
  std::fprintf(stderr, "step %llu %-10s loss %.4f acc %.4f\n", static_cast<unsigned long long>(step), split, loss,
               accuracy);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Driver-behaviour recognition pipeline: synthesize, preprocess, train, evaluate, benchmark, export."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(icnn_version()));

  Flags f;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON run config (sections: seed, paths, model, data, train, eval)")
        ->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& v) { f.seed = v, f.seed_set = true; }, "Run seed (overrides config)");
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--model", f.model, "Network shape")->check(CLI::IsMember({"plain", "tscnn", "intercnn"}));
    sub->add_option("--block", f.block, "2D block kind")
        ->check(CLI::IsMember({"vanilla", "mobilenet", "mobilenet_v2"}));
  };

  auto* synth = app.add_subcommand("synth", "Generate the synthetic raw dataset");
  add_common(synth);
  synth->add_option("--out", f.out, "Output directory (default paths.raw)");

  std::string raw_dir;
  auto* prep = app.add_subcommand("preprocess", "Crop, resize, downsample and compute optical flow");
  add_common(prep);
  prep->add_option("--raw", raw_dir, "Raw dataset directory (default paths.raw)");
  prep->add_option("--out", f.out, "Output directory (default paths.processed)");

  std::string data_dir, checkpoint, split = "test";
  auto* train = app.add_subcommand("train", "Train a model with early stopping");
  add_common(train);
  add_model(train);
  train->add_option("--labels", f.labels, "Train on 9 classes or the 5 aggregated classes")
      ->check(CLI::IsMember({"full9", "agg5"}));
  train->add_option("--data", data_dir, "Processed dataset directory (default paths.processed)");
  train->add_option("--out", f.out, "Output directory for model.ckpt, history.csv, train_summary.json")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with temporal voting");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file (default paths.checkpoint)");
  eval->add_option("--data", data_dir, "Processed dataset directory (default paths.processed)");
  eval->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "validation", "test"}));
  eval->add_option("--labels", f.labels, "Label space")->check(CLI::IsMember({"full9", "agg5"}));
  eval->add_flag("--occlude", f.occlude, "Block the front frames and flows");
  eval->add_option("--vote-n", f.vote_n, "Temporal voting poll size")->check(CLI::PositiveNumber);
  eval->add_option("--out", f.out, "Directory for report.json (report also goes to stdout)");

  std::string blocks = "vanilla,mobilenet,mobilenet_v2";
  std::size_t iterations = 20;
  auto* bench = app.add_subcommand("bench", "Params, FLOPs and latency per block kind");
  add_common(bench);
  add_model(bench);
  bench->add_option("--blocks", blocks, "Comma-separated block kinds")->capture_default_str();
  bench->add_option("--iterations", iterations, "Timed forward passes per block kind")->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench->add_option("--out", f.out, "Directory for bench.json (report also goes to stdout)");

  std::size_t clip = 0, start = 0;
  std::string tags;
  auto* exp = app.add_subcommand("export-acts", "Export hidden-layer activations of one window");
  add_common(exp);
  exp->add_option("--checkpoint", checkpoint, "Checkpoint file (default paths.checkpoint)");
  exp->add_option("--data", data_dir, "Processed dataset directory (default paths.processed)");
  exp->add_option("--split", split, "Split holding the clip")->check(CLI::IsMember({"train", "validation", "test"}));
  exp->add_option("--clip", clip, "Clip index within the split")->capture_default_str();
  exp->add_option("--start", start, "First frame of the window")->capture_default_str();
  exp->add_option("--tags", tags, "Comma-separated activation tags (default: all)");
  exp->add_option("--out", f.out, "Directory for activations.bin")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const json cfg = resolve_config(f);
    const std::string cfg_text = cfg.dump();

    if (*synth) {
      const std::string out = pick(f.out, cfg, "raw", "output directory");
      check(icnn_synth(cfg_text.c_str(), out.c_str()), "synth");
      std::cout << "wrote raw dataset to " << out << '\n';
    } else if (*prep) {
      const std::string in = pick(raw_dir, cfg, "raw", "raw dataset directory");
      const std::string out = pick(f.out, cfg, "processed", "output directory");
      check(icnn_preprocess(cfg_text.c_str(), in.c_str(), out.c_str()), "preprocess");
      std::cout << "wrote processed dataset to " << out << '\n';
    } else if (*train) {
      json c = cfg;
      if (!f.labels.empty()) c["model"]["classes"] = f.labels == "agg5" ? 5 : 9;
      const std::string text = c.dump();
      const std::string data = pick(data_dir, cfg, "processed", "processed dataset directory");
      const fs::path out(f.out);
      ensure_dir(out);
      DatasetPtr tr = open_split(data, "train"), va = open_split(data, "validation");
      icnn_model* raw = nullptr;
      check(icnn_model_create(text.c_str(), &raw), "building model");
      ModelPtr model(raw);
      std::ofstream history(out / "history.csv", std::ios::trunc);
      if (!history) throw RuntimeError("cannot write " + (out / "history.csv").string());
      history << "step,split,loss,accuracy\n";
      char* summary = nullptr;
      check(icnn_train(model.get(), tr.get(), va.get(), text.c_str(), history_row, &history, &summary), "training");
      CString holder(summary);
      check(icnn_model_save(model.get(), (out / "model.ckpt").string().c_str()), "saving checkpoint");
      write_text(out / "train_summary.json", summary);
      write_text(out / "run_config.json", c.dump(2));
      std::cout << summary << '\n';
    } else if (*eval) {
      ModelPtr model = load_model(pick(checkpoint, cfg, "checkpoint", "checkpoint"));
      DatasetPtr ds = open_split(pick(data_dir, cfg, "processed", "processed dataset directory"), split);
      char* report = nullptr;
      check(icnn_evaluate(model.get(), ds.get(), cfg_text.c_str(), &report), "evaluation");
      CString holder(report);
      if (!f.out.empty()) {
        ensure_dir(f.out);
        write_text(fs::path(f.out) / "report.json", report);
      }
      std::cout << report << '\n';
    } else if (*bench) {
      char* report = nullptr;
      check(icnn_bench(cfg_text.c_str(), blocks.c_str(), iterations, &report), "bench");
      CString holder(report);
      if (!f.out.empty()) {
        ensure_dir(f.out);
        write_text(fs::path(f.out) / "bench.json", report);
      }
      std::cout << report << '\n';
    } else if (*exp) {
      ModelPtr model = load_model(pick(checkpoint, cfg, "checkpoint", "checkpoint"));
      DatasetPtr ds = open_split(pick(data_dir, cfg, "processed", "processed dataset directory"), split);
      const std::vector<std::string> names = split_list(tags);
      std::vector<const char*> ptrs;
      for (const std::string& n : names) ptrs.push_back(n.c_str());
      ensure_dir(f.out);
      const fs::path path = fs::path(f.out) / "activations.bin";
      check(icnn_export_activations(model.get(), ds.get(), clip, start, ptrs.data(), ptrs.size(),
                                    path.string().c_str()),
            "export");
      std::cout << "wrote " << path.string() << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return 0;
}
