#include <deque>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "polygen/checkpoint.hpp"
#include "polygen/corpus.hpp"
#include "polygen/mesh.hpp"
#include "polygen/obj_io.hpp"
#include "polygen/parallel.hpp"
#include "polygen/run_config.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

// A subcommand flag that maps onto one config key when given.
struct Binding {
  CLI::Option* option;
  std::string key;
  const std::string* value;
};

}  // namespace

int main(int argc, char** argv) {
  using namespace polygen;

  CLI::App app{"Autoregressive polygon mesh generation: data, training, sampling, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  int threads = 0;
  bool deterministic = false;
  app.add_option("-c,--config", config_path, "JSON config file");
  app.add_option("--set", sets, "Override one config key, section.key=value (repeatable)");
  app.add_option("--threads", threads, "Worker thread cap (0: OpenMP default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--deterministic", deterministic, "Serial execution; reruns are byte-identical");

  std::deque<std::string> storage;
  std::vector<Binding> bindings;
  auto bind = [&](CLI::App* sub, const std::string& flag, const std::string& key,
                  const std::string& help) {
    storage.emplace_back();
    bindings.push_back({sub->add_option(flag, storage.back(), help), key, &storage.back()});
  };
  auto common = [&](CLI::App* sub) {
    bind(sub, "--data", "paths.data_dir", "Corpus directory");
    bind(sub, "--run", "paths.run_dir", "Run directory (checkpoints, logs, samples)");
  };

  CLI::App* make_data = app.add_subcommand("make-data", "Generate the synthetic corpus");
  common(make_data);
  bind(make_data, "--seed", "corpus.seed", "Corpus seed");
  bind(make_data, "--examples-per-class", "corpus.examples_per_class", "Base meshes per class");
  bind(make_data, "--copies", "augment.copies_per_mesh", "Augmented copies per training mesh");
  bind(make_data, "--bits", "corpus.bits", "Quantization bits");

  cli::TrainOptions train_opt;
  CLI::App* train = app.add_subcommand("train", "Train the vertex or the face model");
  common(train);
  train->add_option("--model", train_opt.model, "vertex or face")->required();
  train->add_flag("--resume", train_opt.resume, "Continue from last.ckpt in the run directory");
  train->add_option("--stop-at", train_opt.stop_at, "Save last.ckpt and exit after this step")
      ->check(CLI::NonNegativeNumber);
  bind(train, "--steps", "train.steps", "Optimizer updates");
  bind(train, "--batch-size", "train.batch_size", "Examples per update");
  bind(train, "--lr", "train.max_lr", "Peak learning rate");
  bind(train, "--warmup", "train.warmup_steps", "Linear warmup steps");
  bind(train, "--seed", "train.seed", "Initialization, batching and dropout seed");

  cli::SampleOptions sample_opt;
  std::string sample_class;
  bool no_masks = false;
  CLI::App* sample = app.add_subcommand("sample", "Generate meshes from trained checkpoints");
  common(sample);
  sample->add_option("-n,--count", sample_opt.count, "Number of samples");
  sample->add_option("--vertex-ckpt", sample_opt.vertex_ckpt, "Vertex checkpoint (default RUN/vertex/best.ckpt)");
  sample->add_option("--face-ckpt", sample_opt.face_ckpt, "Face checkpoint (default RUN/face/best.ckpt)");
  sample->add_option("--out", sample_opt.out_dir, "Output directory (default RUN/samples)");
  CLI::Option* class_opt = sample->add_option("--class", sample_class, "Class name or id");
  sample->add_flag("--no-masks", no_masks, "Sample without validity masks");
  bind(sample, "--top-p", "sampler.top_p", "Nucleus mass");
  bind(sample, "--temperature", "sampler.temperature", "Softmax temperature");
  bind(sample, "--seed", "sampler.seed", "Sampling seed");

  cli::EvalOptions eval_opt;
  CLI::App* eval = app.add_subcommand("eval", "Likelihood, statistics and chamfer evaluation");
  common(eval);
  eval->add_option("--vertex-ckpt", eval_opt.vertex_ckpt, "Vertex checkpoint (default RUN/vertex/best.ckpt)");
  eval->add_option("--face-ckpt", eval_opt.face_ckpt, "Face checkpoint (default RUN/face/best.ckpt)");
  eval->add_option("--out", eval_opt.out_dir, "Output directory (default RUN/eval)");
  bind(eval, "--split", "eval.split", "train, val or test");
  bind(eval, "--num-samples", "eval.num_samples", "Generated meshes for the statistics");
  bind(eval, "--k", "eval.best_of_k", "Samples per chamfer target");
  bind(eval, "--targets", "eval.chamfer_targets", "Chamfer targets");
  bind(eval, "--seed", "sampler.seed", "Sampling seed");

  cli::InspectOptions inspect_opt;
  CLI::App* inspect = app.add_subcommand("inspect", "Show the token sequences and masks of one OBJ mesh");
  inspect->add_option("mesh", inspect_opt.mesh_path, "OBJ file")->required();
  inspect->add_flag("--normalize", inspect_opt.normalize, "Normalize to the unit-diagonal box first");
  inspect->add_flag("--dump-tokens", inspect_opt.dump_tokens, "Print the vertex and face tokens");
  inspect->add_flag("--dump-masks", inspect_opt.dump_masks, "Print the allowed-token ranges per position");
  inspect->add_option("--rules", inspect_opt.rules, "Mask rules: basic or lookahead");
  bind(inspect, "--bits", "corpus.bits", "Quantization bits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    nlohmann::json doc = nlohmann::json::object();
    if (!config_path.empty()) doc = load_config_file(config_path);
    apply_env_overrides(doc, environment_variables());
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
      set_override(doc, s.substr(0, eq), s.substr(eq + 1));
    }
    for (const Binding& b : bindings) {
      if (b.option->count() > 0) set_override(doc, b.key, *b.value);
    }
    if (no_masks) set_override(doc, "sampler.apply_masks", "false");
    const RunConfig cfg = run_config_from_json(doc);
    cfg.validate();

    if (deterministic) set_threads(1);
    else if (threads > 0) set_threads(threads);

    if (*make_data) return cli::make_data(cfg);
    if (*train) return cli::train(cfg, train_opt);
    if (*sample) {
      if (class_opt->count() > 0) sample_opt.class_name = sample_class;
      return cli::sample(cfg, sample_opt);
    }
    if (*eval) return cli::eval(cfg, eval_opt);
    if (*inspect) return cli::inspect(cfg, inspect_opt);
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const MeshError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
