#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "polygen/run_config.hpp"

namespace polygen::cli {

struct TrainOptions {
  std::string model;
  bool resume = false;
  std::int64_t stop_at = 0;  // > 0: save last.ckpt and exit after this step
};

struct SampleOptions {
  std::string vertex_ckpt;  // empty: {run_dir}/vertex/best.ckpt
  std::string face_ckpt;
  std::string out_dir;      // empty: {run_dir}/samples
  int count = 10;
  std::optional<std::string> class_name;  // name or numeric id
};

struct EvalOptions {
  std::string vertex_ckpt;
  std::string face_ckpt;
  std::string out_dir;  // empty: {run_dir}/eval
};

struct InspectOptions {
  std::string mesh_path;
  bool normalize = false;
  bool dump_tokens = false;
  bool dump_masks = false;
  std::string rules = "lookahead";
};

int make_data(const RunConfig& cfg);
int train(const RunConfig& cfg, const TrainOptions& opt);
int sample(const RunConfig& cfg, const SampleOptions& opt);
int eval(const RunConfig& cfg, const EvalOptions& opt);
int inspect(const RunConfig& cfg, const InspectOptions& opt);

}  // namespace polygen::cli
