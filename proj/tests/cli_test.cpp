#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "polygen/mesh.hpp"
#include "polygen/obj_io.hpp"

namespace fs = std::filesystem;

namespace {

const char* kConfig = R"({
  "corpus": {"examples_per_class": 4, "train_fraction": 0.5, "val_fraction": 0.25,
             "test_fraction": 0.25, "max_vertices": 40, "max_face_tokens": 120,
             "classes": [{"name": "box"}, {"name": "pyramid", "sides_lo": 4, "sides_hi": 4}]},
  "augment": {"copies_per_mesh": 2},
  "model": {"embed_dim": 32, "fc_dim": 64, "vertex_layers": 2, "face_layers": 2, "heads": 2,
            "dropout": 0, "condition_mode": "class"},
  "train": {"steps": 300, "batch_size": 4, "max_lr": 3e-3, "warmup_steps": 20},
  "job": {"log_every": 50, "eval_every": 100, "checkpoint_every": 100},
  "eval": {"num_samples": 4, "best_of_k": 3, "chamfer_targets": 2, "chamfer_points": 200}
})";

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("polygen_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << kConfig;
  }
  ~Workspace() { fs::remove_all(dir); }

  int run(const std::string& args) const {
    const std::string cmd = "cd '" + dir.string() + "' && '" POLYGEN_CLI "' -c config.json " + args +
                            " > last_stdout.txt 2> last_stderr.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string read(const fs::path& rel) const {
    std::ifstream in(dir / rel, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }
};

int count_ext(const fs::path& dir, const std::string& ext) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ext && e.path().stem().string().rfind("sample_", 0) == 0) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("cli: exit codes for config and data errors") {
  Workspace w;
  CHECK(w.run("--set corpus.train_fraction=0.9 make-data") == 2);
  CHECK(w.read("last_stderr.txt").find("split fractions") != std::string::npos);
  CHECK(w.run("--set train.stepz=1 make-data") == 2);
  CHECK(w.run("no-such-command") == 2);
  CHECK(w.run("train --model vertex") == 3);  // no corpus yet
  CHECK(w.run("train --model wing") == 2);
  CHECK(w.run("sample -n 1") == 3);           // no checkpoints
  std::ofstream(w.dir / "broken.obj") << "v 0 0 0\nf 1 2 x\n";
  CHECK(w.run("inspect broken.obj") == 3);
}

TEST_CASE("cli: make-data, train, sample, eval, inspect") {
  Workspace w;
  REQUIRE(w.run("make-data") == 0);
  CHECK(w.read("last_stdout.txt").find("total") != std::string::npos);
  const auto manifest = nlohmann::json::parse(w.read("data/manifest.json"));
  CHECK(manifest["classes"].size() == 2);

  SUBCASE("training, checkpoints and logs") {
    REQUIRE(w.run("train --model vertex") == 0);
    REQUIRE(w.run("train --model face") == 0);
    for (const char* kind : {"vertex", "face"}) {
      const fs::path d = w.dir / "runs" / kind;
      CHECK(fs::exists(d / "best.ckpt"));
      CHECK(fs::exists(d / "last.ckpt"));
      std::ifstream log(d / "train_log.jsonl");
      std::string line;
      int train_lines = 0, eval_lines = 0;
      double first = 0.0, last = 0.0;
      while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j.contains("eval_bits")) {
          ++eval_lines;
        } else {
          if (train_lines++ == 0) first = j["bits"].get<double>();
          last = j["bits"].get<double>();
        }
      }
      CHECK(train_lines == 6);
      CHECK(eval_lines == 3);
      CHECK(last < 0.5 * first);
    }

    const std::string ckpts = "--vertex-ckpt runs/vertex/last.ckpt --face-ckpt runs/face/last.ckpt";
    REQUIRE(w.run("sample -n 10 --out s " + ckpts) == 0);
    CHECK(count_ext(w.dir / "s", ".obj") == 10);
    CHECK(count_ext(w.dir / "s", ".json") == 10);
    for (const auto& e : fs::directory_iterator(w.dir / "s")) {
      if (e.path().extension() != ".obj") continue;
      CHECK_NOTHROW(polygen::validate(polygen::load_obj(e.path())));
    }
    const auto report = nlohmann::json::parse(w.read("s/sample_0000.json"));
    CHECK(report["valid"] == true);
    CHECK(report["vertex_config_hash"].get<std::string>().size() == 16);

    REQUIRE(w.run("sample -n 6 --class box --out box " + ckpts) == 0);
    const auto summary = nlohmann::json::parse(w.read("box/summary.json"));
    CHECK(summary["class"] == "box");
    CHECK(w.run("sample -n 2 --class chair " + ckpts) == 2);
    CHECK(w.run("sample -n 2 --class 7 " + ckpts) == 2);

    REQUIRE(w.run("eval --out ev " + ckpts) == 0);
    const auto ev = nlohmann::json::parse(w.read("ev/report.json"));
    CHECK(ev["rows"].size() == 4);
    CHECK(ev["rows"][0]["name"] == "uniform");
    CHECK(ev["rows"][1]["name"] == "valid_uniform");
    CHECK(ev["config_hash"]["corpus"] == manifest["config_hash"]);
    for (const auto& ex : ev["model"]["examples"]) {
      CHECK(ex["vertices"]["masked_bits"].get<double>() <= ex["vertices"]["bits"].get<double>());
      CHECK(ex["faces"]["masked_bits"].get<double>() <= ex["faces"]["bits"].get<double>());
    }
    CHECK(ev["chamfer"]["mean_running_minimum"].size() == 3);
    CHECK(w.read("ev/stats.csv").rfind("statistic,bin,model_count,data_count", 0) == 0);

    // A corpus at another bit depth: eval refuses the checkpoints.
    REQUIRE(w.run("--set corpus.bits=6 --set paths.data_dir=data6 make-data") == 0);
    CHECK(w.run("--set corpus.bits=6 --set paths.data_dir=data6 eval " + ckpts) == 2);
    CHECK(w.read("last_stderr.txt").find("refusing") != std::string::npos);
  }

  SUBCASE("stop and resume matches an uninterrupted run") {
    REQUIRE(w.run("--deterministic train --model face --steps 40 --run a") == 0);
    REQUIRE(w.run("--deterministic train --model face --steps 40 --run b --stop-at 15") == 0);
    REQUIRE(w.run("--deterministic train --model face --steps 40 --run b --resume") == 0);
    CHECK(w.read("a/face/last.ckpt") == w.read("b/face/last.ckpt"));
    CHECK(w.read("a/face/best.ckpt") == w.read("b/face/best.ckpt"));
    CHECK(w.read("a/face/train_log.jsonl") == w.read("b/face/train_log.jsonl"));
    CHECK(w.run("--deterministic train --model face --steps 41 --run b --resume") == 2);
  }

  SUBCASE("precheck rejects oversized configs") {
    CHECK(w.run("--set job.memory_limit_mb=1 --set model.fc_dim=4096 train --model vertex") == 2);
    CHECK(w.read("last_stderr.txt").find("precheck") != std::string::npos);
    CHECK(w.run("--set model.max_vertices=5 train --model vertex") == 2);
  }

  SUBCASE("inspect dumps tokens and masks") {
    fs::path obj;
    for (const auto& e : fs::recursive_directory_iterator(w.dir / "data" / "test")) {
      if (e.path().extension() == ".obj") obj = e.path();
    }
    REQUIRE(w.run("inspect --dump-tokens --dump-masks '" + obj.string() + "'") == 0);
    const auto j = nlohmann::json::parse(w.read("last_stdout.txt"));
    CHECK(j["violation"].is_null());
    CHECK(j["tokens"]["vertex"].size() == j["vertex_tokens"]);
    CHECK(j["masks"]["vertex"].size() == j["vertex_tokens"]);
    CHECK(j["masks"]["face"].size() == j["face_tokens"]);
  }

  SUBCASE("environment overrides apply and flags win") {
    setenv("POLYGEN_TRAIN__STEPS", "3", 1);
    setenv("POLYGEN_TRAIN__WARMUP_STEPS", "1", 1);
    REQUIRE(w.run("train --model vertex --run env") == 0);
    CHECK(w.read("last_stdout.txt").find("at step 3,") != std::string::npos);
    REQUIRE(w.run("train --model vertex --run env2 --steps 4") == 0);
    CHECK(w.read("last_stdout.txt").find("at step 4,") != std::string::npos);
    unsetenv("POLYGEN_TRAIN__STEPS");
    unsetenv("POLYGEN_TRAIN__WARMUP_STEPS");
  }
}
