#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "polygen/augment.hpp"
#include "polygen/corpus.hpp"
#include "polygen/models.hpp"
#include "polygen/sampling.hpp"
#include "polygen/train.hpp"

namespace polygen {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JobSettings {
  int log_every = 50;
  int eval_every = 500;        // validation bits and best.ckpt
  int checkpoint_every = 500;  // last.ckpt
  int memory_limit_mb = 4096;  // sequence-length precheck budget
};

struct EvalSettings {
  std::string split = "test";
  int num_samples = 100;  // generated meshes for the statistics histograms
  int best_of_k = 10;
  int chamfer_targets = 5;
  int chamfer_points = 2500;
  int histogram_bins = 20;
};

struct PathSettings {
  std::string data_dir = "data";
  std::string run_dir = "runs";
};

struct RunConfig {
  CorpusSpec corpus;
  AugmentConfig augment;
  ModelConfig model;
  TrainConfig train;
  SamplerConfig sampler;
  JobSettings job;
  EvalSettings eval;
  PathSettings paths;

  /// Throws ConfigError.
  void validate() const;
};

/// Sections: corpus, augment, model, train, sampler, job, eval, paths. Every
/// section and key is optional; unknown ones throw ConfigError. The model's
/// bits and length caps default to the corpus values and num_classes to the
/// class count.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunConfig& cfg);

nlohmann::json load_config_file(const std::filesystem::path& path);

/// Sets doc[section][key] from "section.key". The value is parsed as JSON when
/// it parses, otherwise taken as a string.
void set_override(nlohmann::json& doc, const std::string& dotted_key, const std::string& value);

/// POLYGEN_<SECTION>__<KEY>=value, case-insensitive, e.g. POLYGEN_TRAIN__MAX_LR.
inline constexpr const char* kEnvPrefix = "POLYGEN_";
void apply_env_overrides(nlohmann::json& doc,
                         const std::vector<std::pair<std::string, std::string>>& env);
std::vector<std::pair<std::string, std::string>> environment_variables();

}  // namespace polygen
