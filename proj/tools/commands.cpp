#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "polygen/checkpoint.hpp"
#include "polygen/corpus.hpp"
#include "polygen/evaluation.hpp"
#include "polygen/obj_io.hpp"
#include "polygen/parallel.hpp"
#include "polygen/sampling.hpp"
#include "polygen/sequencing.hpp"
#include "polygen/train.hpp"

namespace polygen::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr double kInf = std::numeric_limits<double>::infinity();

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

ojson number_or_null(double x) { return std::isfinite(x) ? ojson(x) : ojson(); }

struct CorpusInfo {
  int bits = 0;
  std::string hash;
  std::vector<std::string> classes;
};

CorpusInfo read_corpus_info(const fs::path& root) {
  const nlohmann::json manifest = load_manifest(root);
  CorpusInfo info;
  try {
    info.bits = manifest.at("bits").get<int>();
    info.hash = manifest.at("config_hash").get<std::string>();
    for (const auto& c : manifest.at("classes")) info.classes.push_back(c.at("name").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest in " + root.string() + ": " + e.what());
  }
  return info;
}

std::vector<SequenceExample> load_sequences(const fs::path& root, const std::string& split,
                                            int bits, bool required) {
  if (!required && !fs::is_directory(root / split)) return {};
  auto data = to_sequences(load_split(root, split, bits));
  if (required && data.empty()) throw DataError("split '" + split + "' is empty");
  return data;
}

void check_model_caps(const ModelConfig& model, const std::vector<SequenceExample>& data) {
  for (const SequenceExample& ex : data) {
    if (ex.num_vertices() > model.max_vertices) {
      throw ConfigError("example " + ex.id + " has " + std::to_string(ex.num_vertices()) +
                        " vertices; model.max_vertices is " + std::to_string(model.max_vertices));
    }
    if (static_cast<int>(ex.face_tokens.size()) > model.max_face_tokens) {
      throw ConfigError("example " + ex.id + " has " + std::to_string(ex.face_tokens.size()) +
                        " face tokens; model.max_face_tokens is " +
                        std::to_string(model.max_face_tokens));
    }
  }
}

// Rejects runs whose longest example would not fit the memory budget.
void length_precheck(ModelKind kind, const RunConfig& cfg, const std::vector<SequenceExample>& data) {
  check_model_caps(cfg.model, data);
  double worst = 0.0;
  std::string worst_id;
  for (const SequenceExample& ex : data) {
    const int tokens = static_cast<int>(kind == ModelKind::kVertex ? ex.vertex_tokens.size()
                                                                   : ex.face_tokens.size());
    const double b = activation_bytes_estimate(kind, cfg.model, tokens, ex.num_vertices());
    if (b > worst) {
      worst = b;
      worst_id = ex.id;
    }
  }
  const int slots = std::min(cfg.train.batch_size, max_threads());
  const double need_mb = worst * slots / (1024.0 * 1024.0);
  if (need_mb > cfg.job.memory_limit_mb) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "sequence-length precheck: longest example %s needs about %.0f MB "
                  "(x%d concurrent slots), above job.memory_limit_mb = %d",
                  worst_id.c_str(), need_mb, slots, cfg.job.memory_limit_mb);
    throw ConfigError(buf);
  }
}

struct LoadedModel {
  ModelKind kind = ModelKind::kVertex;
  ModelConfig config;
  ParamStore<float> params;
  std::string hash;
  std::string corpus_hash;
  std::vector<std::string> classes;
};

LoadedModel load_model(const fs::path& path, ModelKind expect) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
  Checkpoint ck = load_checkpoint(path);
  LoadedModel m;
  try {
    m.kind = parse_model_kind(ck.config.at("kind").get<std::string>());
    m.config = model_config_from_json(ck.config.at("model"));
    m.corpus_hash = ck.config.at("corpus_hash").get<std::string>();
    for (const auto& c : ck.config.at("classes")) m.classes.push_back(c.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed checkpoint config: " + e.what());
  }
  if (m.kind != expect) {
    throw ConfigError(path.string() + " holds a " + model_kind_name(m.kind) + " model, expected " +
                      model_kind_name(expect));
  }
  m.hash = ck.config_hash;
  m.params = std::move(ck.params);
  return m;
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

void check_pair(const LoadedModel& vm, const LoadedModel& fm) {
  if (vm.config.bits != fm.config.bits) {
    throw ConfigError("vertex model uses bits=" + std::to_string(vm.config.bits) +
                      " but face model uses bits=" + std::to_string(fm.config.bits));
  }
  if (vm.classes != fm.classes) throw ConfigError("the checkpoints were trained on different classes");
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

std::optional<int> resolve_class(const std::string& arg, const std::vector<std::string>& classes,
                                 bool conditioned) {
  if (!conditioned) throw ConfigError("--class given, but the models are not class-conditioned");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == arg) return static_cast<int>(i);
  }
  if (!arg.empty() && std::all_of(arg.begin(), arg.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    const long id = std::strtol(arg.c_str(), nullptr, 10);
    if (id >= 0 && id < static_cast<long>(classes.size())) return static_cast<int>(id);
  }
  throw ConfigError("unknown class '" + arg + "'; trained classes: " + join(classes));
}

// Conditioned models cycle through the classes unless one is fixed.
std::vector<GeneratedMesh> generate(const LoadedModel& vm, const LoadedModel& fm, int n,
                                    std::optional<int> fixed_class, const SamplerConfig& sc) {
  const VertexModel vmod(vm.config);
  const FaceModel fmod(fm.config);
  const bool conditioned = vm.config.conditioned() || fm.config.conditioned();
  const int num_classes = std::max<int>(1, static_cast<int>(vm.classes.size()));
  std::vector<GeneratedMesh> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), [&](std::size_t i) {
    std::optional<int> cls = fixed_class;
    if (!cls && conditioned) cls = static_cast<int>(i) % num_classes;
    Rng rng = make_rng(sc.seed, {i});
    out[i] = generate_mesh(vmod, vm.params, fmod, fm.params, cls, sc, rng);
    out[i].report.index = static_cast<int>(i);
  });
  return out;
}

std::string sample_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%04d", i);
  return buf;
}

ojson allowed_ranges(const MaskVector& mask) {
  ojson out = ojson::array();
  for (std::size_t i = 0; i < mask.size();) {
    if (!mask[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < mask.size() && mask[j + 1]) ++j;
    out.push_back({i, j});
    i = j + 1;
  }
  return out;
}

ojson table_row(const std::string& name, const ModelEval& v, const ModelEval& f, bool masked) {
  const double vb = masked ? v.masked_bits_per_vertex : v.bits_per_vertex;
  const double fb = masked ? f.masked_bits_per_vertex : f.bits_per_vertex;
  ojson row;
  row["name"] = name;
  row["bits_per_vertex"] = {{"vertices", number_or_null(vb)},
                            {"faces", number_or_null(fb)},
                            {"total", number_or_null(vb + fb)}};
  row["accuracy"] = {{"vertices", masked ? v.masked_accuracy : v.accuracy},
                     {"faces", masked ? f.masked_accuracy : f.accuracy}};
  return row;
}

void print_row(const ojson& row) {
  auto num = [](const ojson& x) { return x.is_number() ? x.get<double>() : kInf; };
  std::printf("%-24s %10.4f %10.4f %10.4f %8.4f %8.4f\n", row["name"].get<std::string>().c_str(),
              num(row["bits_per_vertex"]["vertices"]), num(row["bits_per_vertex"]["faces"]),
              num(row["bits_per_vertex"]["total"]), num(row["accuracy"]["vertices"]),
              num(row["accuracy"]["faces"]));
}

void keep_log_prefix(const fs::path& log_path, std::int64_t last_step) {
  if (!fs::exists(log_path)) return;
  std::ifstream in(log_path);
  std::string line, kept;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("step")) continue;
    if (j["step"].get<std::int64_t>() <= last_step) kept += line + "\n";
  }
  in.close();
  write_text(log_path, kept);
}

}  // namespace

int make_data(const RunConfig& cfg) {
  const fs::path root = cfg.paths.data_dir;
  const ojson manifest = make_corpus(cfg.corpus, cfg.augment, root);
  std::cout << "corpus written to " << root.string() << "\n";
  std::cout << "config_hash " << manifest["config_hash"].get<std::string>() << "  bits "
            << manifest["bits"].get<int>() << "  filtered " << manifest["filtered"].get<int>()
            << "\n";
  std::printf("%-16s %7s %7s %7s\n", "class", "train", "val", "test");
  std::vector<std::string> names;
  for (const auto& c : manifest["classes"]) names.push_back(c["name"].get<std::string>());
  names.push_back("total");
  const auto& counts = manifest["counts"];
  for (const auto& n : names) {
    std::printf("%-16s %7d %7d %7d\n", n.c_str(), counts["train"][n].get<int>(),
                counts["val"][n].get<int>(), counts["test"][n].get<int>());
  }
  return 0;
}

int train(const RunConfig& cfg, const TrainOptions& opt) {
  ModelKind kind;
  try {
    kind = parse_model_kind(opt.model);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::string kind_name = model_kind_name(kind);
  const fs::path data_root = cfg.paths.data_dir;
  const CorpusInfo corpus = read_corpus_info(data_root);
  if (corpus.bits != cfg.model.bits) {
    throw ConfigError("corpus uses bits=" + std::to_string(corpus.bits) + " but model.bits=" +
                      std::to_string(cfg.model.bits));
  }
  if (cfg.model.conditioned() && cfg.model.num_classes < static_cast<int>(corpus.classes.size())) {
    throw ConfigError("model.num_classes is smaller than the corpus class count");
  }
  const auto train_data = load_sequences(data_root, "train", corpus.bits, true);
  const auto val_data = load_sequences(data_root, "val", corpus.bits, false);
  length_precheck(kind, cfg, train_data);
  check_model_caps(cfg.model, val_data);

  ojson ck_config;
  ck_config["kind"] = kind_name;
  ck_config["model"] = to_json(cfg.model);
  ck_config["train"] = to_json(cfg.train);
  ck_config["corpus_hash"] = corpus.hash;
  ck_config["classes"] = corpus.classes;
  const std::string hash = config_hash(ck_config);

  const fs::path dir = fs::path(cfg.paths.run_dir) / kind_name;
  fs::create_directories(dir);
  const fs::path last_path = dir / "last.ckpt";
  const fs::path best_path = dir / "best.ckpt";
  const fs::path log_path = dir / "train_log.jsonl";
  ojson run_json = to_json(cfg);
  run_json["config_hash"] = hash;
  write_json(dir / "config.json", run_json);

  ParamStore<float> params;
  double best = kInf;
  if (opt.resume && fs::exists(last_path)) {
    Checkpoint ck = load_checkpoint(last_path);
    if (ck.config_hash != hash) {
      throw ConfigError("last.ckpt was written with config " + ck.config_hash +
                        ", current config is " + hash + "; rerun without --resume");
    }
    params = std::move(ck.params);
    if (ck.extra.contains("best_val") && ck.extra["best_val"].is_number()) {
      best = ck.extra["best_val"].get<double>();
    }
    keep_log_prefix(log_path, params.step());
    std::cout << "resuming " << kind_name << " model at step " << params.step() << "\n";
  } else {
    if (opt.resume) std::cerr << "no last.ckpt in " << dir.string() << ", starting fresh\n";
    params = init_model_params(kind, cfg.model, cfg.train.seed);
    fs::remove(log_path);
    fs::remove(best_path);
  }

  Trainer trainer(kind, cfg.model, cfg.train, std::move(params));
  const auto& eval_set = val_data.empty() ? train_data : val_data;
  const char* eval_split = val_data.empty() ? "train" : "val";
  std::cout << kind_name << " model: " << trainer.params().parameter_count() << " parameters, "
            << train_data.size() << " train / " << val_data.size() << " val examples, config "
            << hash << "\n";

  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  auto save = [&](const fs::path& path) {
    ojson extra;
    extra["step"] = trainer.params().step();
    extra["best_val"] = number_or_null(best);
    extra["eval_split"] = eval_split;
    save_checkpoint(path, trainer.params(), ck_config, hash, extra);
  };
  auto run_eval = [&](std::int64_t n) {
    const double v = trainer.evaluate(eval_set);
    ojson line{{"step", n}, {"eval_split", eval_split}, {"eval_bits", v}};
    log << line.dump() << '\n';
    log.flush();
    std::printf("step %lld  %s bits/vertex %.5f\n", static_cast<long long>(n), eval_split, v);
    if (v < best) {
      best = v;
      save(best_path);
    }
  };

  const std::int64_t steps = cfg.train.steps;
  const std::int64_t stop = opt.stop_at > 0 ? std::min(opt.stop_at, steps) : steps;
  while (trainer.params().step() < stop) {
    const StepStats st = trainer.step(train_data);
    const std::int64_t n = trainer.params().step();
    if (n % cfg.job.log_every == 0 || n == steps) {
      ojson line{{"step", n}, {"bits", st.bits_per_vertex}, {"grad_norm", st.grad_norm}, {"lr", st.lr}};
      log << line.dump() << '\n';
      log.flush();
      std::printf("step %lld  train bits/vertex %.5f  grad %.4f  lr %.3g\n",
                  static_cast<long long>(n), st.bits_per_vertex, st.grad_norm, st.lr);
      std::fflush(stdout);
    }
    const bool evaluated = n % cfg.job.eval_every == 0 || n == steps;
    if (evaluated) run_eval(n);
    if (evaluated || n % cfg.job.checkpoint_every == 0) save(last_path);
  }
  if (trainer.params().step() < steps) {
    save(last_path);
    std::printf("stopped at step %lld of %lld; continue with --resume\n",
                static_cast<long long>(trainer.params().step()), static_cast<long long>(steps));
    return 0;
  }
  if (!fs::exists(best_path)) {
    run_eval(trainer.params().step());
    save(last_path);
  }
  std::printf("done: %s model at step %lld, best %s bits/vertex %.5f\n", kind_name.c_str(),
              static_cast<long long>(trainer.params().step()), eval_split, best);
  return 0;
}

int sample(const RunConfig& cfg, const SampleOptions& opt) {
  if (opt.count < 0) throw ConfigError("sample count must be >= 0");
  const fs::path run = cfg.paths.run_dir;
  const LoadedModel vm = load_model(or_default(opt.vertex_ckpt, run / "vertex" / "best.ckpt"), ModelKind::kVertex);
  const LoadedModel fm = load_model(or_default(opt.face_ckpt, run / "face" / "best.ckpt"), ModelKind::kFace);
  check_pair(vm, fm);
  const bool conditioned = vm.config.conditioned() || fm.config.conditioned();
  std::optional<int> fixed;
  if (opt.class_name) fixed = resolve_class(*opt.class_name, vm.classes, conditioned);

  const fs::path out_dir = or_default(opt.out_dir, run / "samples");
  fs::create_directories(out_dir);
  const auto gens = generate(vm, fm, opt.count, fixed, cfg.sampler);
  int valid = 0;
  for (const GeneratedMesh& g : gens) {
    const std::string name = sample_name(g.report.index);
    ojson j = to_json(g.report);
    j["class_name"] = g.report.class_id && *g.report.class_id < static_cast<int>(vm.classes.size())
                          ? ojson(vm.classes[*g.report.class_id])
                          : ojson();
    j["obj"] = g.report.valid ? ojson(name + ".obj") : ojson();
    j["vertex_config_hash"] = vm.hash;
    j["face_config_hash"] = fm.hash;
    j["sampler"] = to_json(cfg.sampler);
    if (g.report.valid) {
      save_obj(g.mesh, out_dir / (name + ".obj"));
      ++valid;
    }
    write_json(out_dir / (name + ".json"), j);
  }
  ojson summary;
  summary["count"] = opt.count;
  summary["valid"] = valid;
  summary["invalid"] = opt.count - valid;
  summary["class"] = fixed ? ojson(vm.classes[*fixed]) : ojson();
  summary["vertex_config_hash"] = vm.hash;
  summary["face_config_hash"] = fm.hash;
  summary["sampler"] = to_json(cfg.sampler);
  write_json(out_dir / "summary.json", summary);
  std::printf("wrote %d samples to %s: %d valid, %d invalid\n", opt.count, out_dir.string().c_str(),
              valid, opt.count - valid);
  return 0;
}

int eval(const RunConfig& cfg, const EvalOptions& opt) {
  const fs::path data_root = cfg.paths.data_dir;
  const fs::path run = cfg.paths.run_dir;
  const CorpusInfo corpus = read_corpus_info(data_root);
  const LoadedModel vm = load_model(or_default(opt.vertex_ckpt, run / "vertex" / "best.ckpt"), ModelKind::kVertex);
  const LoadedModel fm = load_model(or_default(opt.face_ckpt, run / "face" / "best.ckpt"), ModelKind::kFace);
  for (const LoadedModel* m : {&vm, &fm}) {
    if (m->config.bits != corpus.bits) {
      throw ConfigError(std::string(model_kind_name(m->kind)) + " checkpoint uses bits=" +
                        std::to_string(m->config.bits) + " but the corpus uses bits=" +
                        std::to_string(corpus.bits) + "; refusing to evaluate");
    }
    if (m->config.conditioned() && m->config.num_classes < static_cast<int>(corpus.classes.size())) {
      throw ConfigError(std::string(model_kind_name(m->kind)) +
                        " checkpoint has fewer classes than the corpus");
    }
    if (m->corpus_hash != corpus.hash) {
      std::cerr << "note: " << model_kind_name(m->kind) << " model was trained on corpus "
                << m->corpus_hash << ", evaluating on " << corpus.hash << "\n";
    }
  }
  check_pair(vm, fm);
  const int bits = corpus.bits;
  const auto data = load_sequences(data_root, cfg.eval.split, bits, true);
  check_model_caps(vm.config, data);
  check_model_caps(fm.config, data);
  const MaskRules rules = cfg.sampler.mask_rules;

  const EvalReport model = evaluate(model_predictor(ModelKind::kVertex, vm.config, vm.params),
                                    model_predictor(ModelKind::kFace, fm.config, fm.params), data,
                                    bits, rules);
  const EvalReport uniform = evaluate(uniform_predictor(ModelKind::kVertex, bits),
                                      uniform_predictor(ModelKind::kFace, bits), data, bits, rules);

  ojson rows = ojson::array();
  rows.push_back(table_row("uniform", *uniform.vertices, *uniform.faces, false));
  rows.push_back(table_row("valid_uniform", *uniform.vertices, *uniform.faces, true));
  rows.push_back(table_row("model", *model.vertices, *model.faces, false));
  rows.push_back(table_row("model_valid_predictions", *model.vertices, *model.faces, true));

  // Statistics of generated meshes against the split.
  SamplerConfig stats_sampler = cfg.sampler;
  stats_sampler.seed = derive_seed(cfg.sampler.seed, {0x57a7});
  const auto gens = generate(vm, fm, cfg.eval.num_samples, std::nullopt, stats_sampler);
  std::vector<MeshStats> gen_stats, data_stats;
  for (const GeneratedMesh& g : gens) {
    if (g.report.valid) gen_stats.push_back(mesh_statistics(g.mesh));
  }
  for (const SequenceExample& ex : data) data_stats.push_back(mesh_statistics(dequantize(ex.mesh, bits)));
  const auto hists = stats_summary(gen_stats, data_stats, cfg.eval.histogram_bins);
  const fs::path out_dir = or_default(opt.out_dir, run / "eval");
  write_text(out_dir / "stats.csv", histograms_csv(hists));
  ojson stats;
  stats["generated"] = cfg.eval.num_samples;
  stats["valid"] = gen_stats.size();
  ojson tv;
  for (const Histogram& h : hists) {
    tv[h.statistic] = gen_stats.empty() ? ojson() : ojson(total_variation(h.model, h.data));
  }
  stats["total_variation"] = tv;

  // Best-of-k chamfer on evenly spaced targets.
  const VertexModel vmod(vm.config);
  const FaceModel fmod(fm.config);
  const int k = cfg.eval.best_of_k;
  const int targets = std::min<int>(cfg.eval.chamfer_targets, static_cast<int>(data.size()));
  ojson target_json = ojson::array();
  std::vector<double> curve(static_cast<std::size_t>(k), 0.0);
  double floor_sum = 0.0;
  int scored = 0;
  for (int t = 0; t < targets; ++t) {
    const SequenceExample& ex = data[static_cast<std::size_t>(t) * data.size() / targets];
    SamplerConfig sc = cfg.sampler;
    sc.seed = derive_seed(cfg.sampler.seed, {0xc4a3, static_cast<std::uint64_t>(t)});
    std::optional<int> cls;
    if (vm.config.conditioned() || fm.config.conditioned()) cls = ex.class_id;
    ojson entry{{"id", ex.id}, {"class_id", ex.class_id}};
    try {
      const BestOfK b = best_of_k_chamfer(vmod, vm.params, fmod, fm.params, dequantize(ex.mesh, bits),
                                          cls, k, sc, cfg.eval.chamfer_points);
      entry["result"] = to_json(b);
      for (int i = 0; i < k; ++i) curve[i] += b.running_minimum[i];
      floor_sum += b.data_floor;
      ++scored;
    } catch (const std::exception& e) {
      entry["error"] = e.what();
    }
    target_json.push_back(entry);
  }
  ojson chamfer;
  chamfer["k"] = k;
  chamfer["points"] = cfg.eval.chamfer_points;
  chamfer["scored_targets"] = scored;
  ojson mean_curve = ojson::array();
  std::string chamfer_csv = "k,mean_best_chamfer\n";
  for (int i = 0; i < k; ++i) {
    const double v = scored > 0 ? curve[i] / scored : kInf;
    mean_curve.push_back(number_or_null(v));
    std::ostringstream row;
    row.precision(17);
    row << (i + 1) << ',' << v << '\n';
    chamfer_csv += row.str();
  }
  chamfer["mean_running_minimum"] = mean_curve;
  chamfer["mean_data_floor"] = scored > 0 ? ojson(floor_sum / scored) : ojson();
  chamfer["targets"] = target_json;
  write_text(out_dir / "chamfer.csv", chamfer_csv);

  ojson report;
  report["split"] = cfg.eval.split;
  report["num_examples"] = data.size();
  report["bits"] = bits;
  report["config_hash"] = {{"corpus", corpus.hash}, {"vertex", vm.hash}, {"face", fm.hash}};
  report["mask_rules"] = rules == MaskRules::kBasic ? "basic" : "lookahead";
  report["rows"] = rows;
  report["notes"] = {
      "bits_per_vertex divides each sequence's negative log-likelihood in bits by the example's "
      "vertex count, then averages over examples",
      "face accuracy counts new-face and stop tokens as predictions",
      "accuracy credits a tie among k maximal logits that contains the target with 1/k",
      "valid rows renormalize the prediction over tokens the validity masks allow"};
  report["statistics"] = stats;
  report["chamfer"] = chamfer;
  report["model"] = to_json(model, true);
  report["uniform"] = to_json(uniform, false);
  write_json(out_dir / "report.json", report);

  std::printf("%-24s %10s %10s %10s %8s %8s\n", "", "vert bpv", "face bpv", "total", "acc v", "acc f");
  for (const auto& row : rows) print_row(row);
  std::printf("best-of-%d chamfer (mean over %d targets):", k, scored);
  for (const auto& v : mean_curve) {
    if (v.is_number()) std::printf(" %.5f", v.get<double>());
    else std::printf(" -");
  }
  std::printf("\nreport written to %s\n", (out_dir / "report.json").string().c_str());
  return 0;
}

int inspect(const RunConfig& cfg, const InspectOptions& opt) {
  MaskRules rules;
  if (opt.rules == "basic") rules = MaskRules::kBasic;
  else if (opt.rules == "lookahead") rules = MaskRules::kLookahead;
  else throw ConfigError("--rules must be basic or lookahead");
  Mesh mesh;
  try {
    mesh = load_obj(opt.mesh_path);
  } catch (const ParseError& e) {
    throw DataError(opt.mesh_path + ": " + e.what());
  }
  if (opt.normalize) mesh = normalize(mesh);
  const int bits = cfg.corpus.bits;
  QuantizeReport qr;
  const QuantizedMesh q = quantize(mesh, bits, &qr);
  const Tokens vt = encode_vertices(q);
  const Tokens ft = encode_faces(q);

  ojson j;
  j["file"] = opt.mesh_path;
  j["bits"] = bits;
  j["num_vertices"] = q.vertices.size();
  j["num_faces"] = q.faces.size();
  j["vertex_tokens"] = vt.size();
  j["face_tokens"] = ft.size();
  j["quantize"] = {{"merged_vertices", qr.merged_vertices},
                   {"dropped_faces", qr.dropped_faces},
                   {"dropped_unreferenced", qr.dropped_unreferenced}};
  const auto violation = find_violation(q, bits);
  j["violation"] = violation ? ojson(*violation) : ojson();
  if (opt.dump_tokens) j["tokens"] = {{"vertex", vt}, {"face", ft}};
  if (opt.dump_masks) {
    ojson masks;
    masks["rules"] = opt.rules;
    auto dump = [&](auto&& compute) {
      try {
        ojson rows = ojson::array();
        for (const MaskVector& m : compute()) rows.push_back(allowed_ranges(m));
        return rows;
      } catch (const SequenceError& e) {
        return ojson(std::string("mask violation: ") + e.what());
      }
    };
    masks["vertex"] = dump([&] { return vertex_masks(vt, bits, rules); });
    masks["face"] = dump([&] { return face_masks(ft, static_cast<int>(q.vertices.size()), rules); });
    j["masks"] = masks;
  }
  std::cout << (opt.dump_tokens || opt.dump_masks ? j.dump() : j.dump(2)) << "\n";
  return 0;
}

}  // namespace polygen::cli
