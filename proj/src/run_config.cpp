#include "polygen/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

extern char** environ;

namespace polygen {

namespace {

using nlohmann::json;

template <typename Fn>
auto as_config_error(const std::string& section, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(section + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

const json& section_or_empty(const json& j, const char* name) {
  static const json empty = json::object();
  auto it = j.find(name);
  if (it == j.end()) return empty;
  if (!it->is_object()) throw ConfigError(std::string(name) + ": section must be an object");
  return *it;
}

JobSettings job_from_json(const json& j) {
  JobSettings s;
  for (const auto& [key, value] : j.items()) {
    if (key == "log_every") s.log_every = value.get<int>();
    else if (key == "eval_every") s.eval_every = value.get<int>();
    else if (key == "checkpoint_every") s.checkpoint_every = value.get<int>();
    else if (key == "memory_limit_mb") s.memory_limit_mb = value.get<int>();
    else throw ConfigError("job: unknown key '" + key + "'");
  }
  return s;
}

EvalSettings eval_from_json(const json& j) {
  EvalSettings s;
  for (const auto& [key, value] : j.items()) {
    if (key == "split") s.split = value.get<std::string>();
    else if (key == "num_samples") s.num_samples = value.get<int>();
    else if (key == "best_of_k") s.best_of_k = value.get<int>();
    else if (key == "chamfer_targets") s.chamfer_targets = value.get<int>();
    else if (key == "chamfer_points") s.chamfer_points = value.get<int>();
    else if (key == "histogram_bins") s.histogram_bins = value.get<int>();
    else throw ConfigError("eval: unknown key '" + key + "'");
  }
  return s;
}

PathSettings paths_from_json(const json& j) {
  PathSettings s;
  for (const auto& [key, value] : j.items()) {
    if (key == "data_dir") s.data_dir = value.get<std::string>();
    else if (key == "run_dir") s.run_dir = value.get<std::string>();
    else throw ConfigError("paths: unknown key '" + key + "'");
  }
  return s;
}

}  // namespace

void RunConfig::validate() const {
  as_config_error("config", [&] {
    corpus.validate();
    augment.validate();
    model.validate();
    train.validate();
    sampler.validate();
  });
  if (model.bits != corpus.bits) {
    throw ConfigError("model.bits (" + std::to_string(model.bits) + ") differs from corpus.bits (" +
                      std::to_string(corpus.bits) + ")");
  }
  if (model.conditioned() && model.num_classes < static_cast<int>(corpus.classes.size())) {
    throw ConfigError("model.num_classes is smaller than the number of corpus classes");
  }
  if (job.log_every < 1 || job.eval_every < 1 || job.checkpoint_every < 1) {
    throw ConfigError("job: intervals must be >= 1");
  }
  if (job.memory_limit_mb < 1) throw ConfigError("job: memory_limit_mb must be >= 1");
  if (eval.split != "train" && eval.split != "val" && eval.split != "test") {
    throw ConfigError("eval: split must be train, val or test");
  }
  if (eval.num_samples < 0 || eval.best_of_k < 1 || eval.chamfer_targets < 0 ||
      eval.chamfer_points < 1 || eval.histogram_bins < 1) {
    throw ConfigError("eval: counts out of range");
  }
  if (paths.data_dir.empty() || paths.run_dir.empty()) throw ConfigError("paths: empty path");
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const char* kSections[] = {"corpus", "augment", "model", "train",
                                    "sampler", "job", "eval", "paths"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(kSections), std::end(kSections),
                     [&](const char* s) { return key == s; }) == std::end(kSections)) {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  RunConfig c;
  c.corpus = as_config_error("corpus", [&] { return corpus_spec_from_json(section_or_empty(j, "corpus")); });
  c.augment = as_config_error("augment", [&] { return augment_config_from_json(section_or_empty(j, "augment")); });
  json model = section_or_empty(j, "model");
  if (!model.contains("bits")) model["bits"] = c.corpus.bits;
  if (!model.contains("max_vertices")) model["max_vertices"] = c.corpus.max_vertices;
  if (!model.contains("max_face_tokens")) model["max_face_tokens"] = c.corpus.max_face_tokens;
  c.model = as_config_error("model", [&] { return model_config_from_json(model); });
  if (c.model.conditioned() && !model.contains("num_classes")) {
    c.model.num_classes = static_cast<int>(c.corpus.classes.size());
  }
  c.train = as_config_error("train", [&] { return train_config_from_json(section_or_empty(j, "train")); });
  c.sampler = as_config_error("sampler", [&] { return sampler_config_from_json(section_or_empty(j, "sampler")); });
  c.job = as_config_error("job", [&] { return job_from_json(section_or_empty(j, "job")); });
  c.eval = as_config_error("eval", [&] { return eval_from_json(section_or_empty(j, "eval")); });
  c.paths = as_config_error("paths", [&] { return paths_from_json(section_or_empty(j, "paths")); });
  return c;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["corpus"] = to_json(c.corpus);
  j["augment"] = to_json(c.augment);
  j["model"] = to_json(c.model);
  j["train"] = to_json(c.train);
  j["sampler"] = to_json(c.sampler);
  j["job"] = {{"log_every", c.job.log_every},
              {"eval_every", c.job.eval_every},
              {"checkpoint_every", c.job.checkpoint_every},
              {"memory_limit_mb", c.job.memory_limit_mb}};
  j["eval"] = {{"split", c.eval.split},
               {"num_samples", c.eval.num_samples},
               {"best_of_k", c.eval.best_of_k},
               {"chamfer_targets", c.eval.chamfer_targets},
               {"chamfer_points", c.eval.chamfer_points},
               {"histogram_bins", c.eval.histogram_bins}};
  j["paths"] = {{"data_dir", c.paths.data_dir}, {"run_dir", c.paths.run_dir}};
  return j;
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void set_override(json& doc, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted_key.size()) {
    throw ConfigError("override key must look like section.key: '" + dotted_key + "'");
  }
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  if (!doc.is_object()) doc = json::object();
  doc[dotted_key.substr(0, dot)][dotted_key.substr(dot + 1)] = parsed;
}

void apply_env_overrides(json& doc, const std::vector<std::pair<std::string, std::string>>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = name.substr(prefix.size());
    const auto sep = rest.find("__");
    if (sep == std::string::npos) continue;
    std::transform(rest.begin(), rest.end(), rest.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    set_override(doc, rest.substr(0, sep) + "." + rest.substr(sep + 2), value);
  }
}

std::vector<std::pair<std::string, std::string>> environment_variables() {
  std::vector<std::pair<std::string, std::string>> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    out.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace polygen
