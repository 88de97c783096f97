#include "polygen/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "polygen/parallel.hpp"

namespace polygen {

const char* model_kind_name(ModelKind kind) {
  return kind == ModelKind::kVertex ? "vertex" : "face";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "vertex") return ModelKind::kVertex;
  if (name == "face") return ModelKind::kFace;
  throw std::invalid_argument("unknown model kind '" + name + "' (expected vertex or face)");
}

std::vector<SequenceExample> to_sequences(const std::vector<Example>& examples) {
  std::vector<SequenceExample> out(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& e = examples[i];
    out[i].id = e.id;
    out[i].class_id = e.class_id;
    out[i].mesh = e.mesh;
    out[i].vertex_tokens = encode_vertices(e.mesh);
    out[i].face_tokens = encode_faces(e.mesh);
  }
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (steps < 0) fail("steps must be >= 0");
  if (!(clip_norm >= 0.0)) fail("clip_norm must be >= 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0)) {
    fail("adam betas must be in [0, 1) and eps > 0");
  }
  schedule.validate();
}

nlohmann::ordered_json to_json(const TrainConfig& cfg) {
  return {{"batch_size", cfg.batch_size},
          {"steps", cfg.steps},
          {"max_lr", cfg.schedule.max_lr},
          {"warmup_steps", cfg.schedule.warmup_steps},
          {"total_steps", cfg.schedule.total_steps},
          {"clip_norm", cfg.clip_norm},
          {"beta1", cfg.adam.beta1},
          {"beta2", cfg.adam.beta2},
          {"adam_eps", cfg.adam.eps},
          {"seed", cfg.seed},
          {"apply_masks", cfg.apply_masks}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  bool total_given = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "steps") c.steps = value.get<std::int64_t>();
    else if (key == "max_lr") c.schedule.max_lr = value.get<double>();
    else if (key == "warmup_steps") c.schedule.warmup_steps = value.get<std::int64_t>();
    else if (key == "total_steps") {
      c.schedule.total_steps = value.get<std::int64_t>();
      total_given = true;
    } else if (key == "clip_norm") c.clip_norm = value.get<double>();
    else if (key == "beta1") c.adam.beta1 = value.get<double>();
    else if (key == "beta2") c.adam.beta2 = value.get<double>();
    else if (key == "adam_eps") c.adam.eps = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "apply_masks") c.apply_masks = value.get<bool>();
    else throw std::invalid_argument("train config: unknown key '" + key + "'");
  }
  if (!total_given) c.schedule.total_steps = c.steps + 1;
  return c;
}

ParamStore<float> init_model_params(ModelKind kind, const ModelConfig& cfg, std::uint64_t seed) {
  ParamStore<float> store;
  Rng rng = make_rng(seed, {0x1417, static_cast<std::uint64_t>(kind)});
  if (kind == ModelKind::kVertex) {
    VertexModel(cfg).init_params(store, rng);
  } else {
    FaceModel(cfg).init_params(store, rng);
  }
  return store;
}

double example_loss(ModelKind kind, const ModelConfig& cfg, const ParamStore<float>& params,
                    const SequenceExample& ex, const ForwardOptions& opt,
                    std::vector<Tensor<float>>* grads, double weight) {
  const int nv = ex.num_vertices();
  if (nv < 1) throw std::invalid_argument("example " + ex.id + " has no vertices");
  const std::optional<int> cls = cfg.conditioned() ? std::optional<int>(ex.class_id) : std::nullopt;
  Graph<float> g(&params);
  Var nll;
  if (kind == ModelKind::kVertex) {
    nll = VertexModel(cfg).nll(g, ex.vertex_tokens, cls, opt);
  } else {
    nll = FaceModel(cfg).nll(g, ex.mesh.vertices, ex.face_tokens, cls, opt);
  }
  const double per_vertex = std::numbers::ln2 * nv;
  const double bits = static_cast<double>(g.value(nll)(0, 0)) / per_vertex;
  if (grads != nullptr) {
    const Var loss = g.scale(nll, static_cast<float>(weight / per_vertex));
    g.backward(loss);
    g.accumulate_param_grads(*grads);
  }
  return bits;
}

namespace {

std::vector<MaskVector> example_masks(ModelKind kind, const ModelConfig& cfg,
                                      const SequenceExample& ex) {
  if (kind == ModelKind::kVertex) return vertex_masks(ex.vertex_tokens, cfg.bits);
  return face_masks(ex.face_tokens, ex.num_vertices());
}

}  // namespace

Trainer::Trainer(ModelKind kind, ModelConfig model, TrainConfig cfg, ParamStore<float> params)
    : kind_(kind), model_(std::move(model)), cfg_(std::move(cfg)), params_(std::move(params)) {
  model_.validate();
  cfg_.validate();
}

std::vector<int> Trainer::batch_indices(std::int64_t step, int dataset_size) const {
  if (dataset_size < 1) throw std::invalid_argument("empty training set");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(cfg_.batch_size));
  std::int64_t cached_epoch = -1;
  std::vector<int> perm(static_cast<std::size_t>(dataset_size));
  for (int j = 0; j < cfg_.batch_size; ++j) {
    const std::int64_t pos = step * cfg_.batch_size + j;
    const std::int64_t epoch = pos / dataset_size;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng = make_rng(cfg_.seed, {0xe90c, static_cast<std::uint64_t>(epoch)});
      for (int i = dataset_size - 1; i > 0; --i) {
        const int k = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[i], perm[k]);
      }
      cached_epoch = epoch;
    }
    out.push_back(perm[static_cast<std::size_t>(pos % dataset_size)]);
  }
  return out;
}

StepStats Trainer::step(const std::vector<SequenceExample>& data) {
  const std::int64_t s = params_.step();
  const std::vector<int> batch = batch_indices(s, static_cast<int>(data.size()));
  const int b = static_cast<int>(batch.size());
  std::vector<std::vector<Tensor<float>>> slot_grads(static_cast<std::size_t>(b));
  std::vector<double> slot_bits(static_cast<std::size_t>(b), 0.0);
  const double weight = 1.0 / b;

  parallel_for(batch.size(), [&](std::size_t j) {
    const SequenceExample& ex = data[static_cast<std::size_t>(batch[j])];
    Rng rng = make_rng(cfg_.seed, {static_cast<std::uint64_t>(s), j});
    std::vector<MaskVector> masks;
    ForwardOptions opt;
    opt.train = true;
    opt.rng = &rng;
    if (cfg_.apply_masks) {
      masks = example_masks(kind_, model_, ex);
      opt.masks = &masks;
    }
    slot_grads[j] = params_.zeros_like();
    slot_bits[j] = example_loss(kind_, model_, params_, ex, opt, &slot_grads[j], weight);
  });

  std::vector<Tensor<float>> grads = std::move(slot_grads[0]);
  for (int j = 1; j < b; ++j) {
    for (std::size_t p = 0; p < grads.size(); ++p) {
      float* dst = grads[p].data();
      const float* src = slot_grads[j][p].data();
      for (std::size_t i = 0; i < grads[p].size(); ++i) dst[i] += src[i];
    }
  }

  StepStats stats;
  stats.step = s + 1;
  stats.bits_per_vertex = std::accumulate(slot_bits.begin(), slot_bits.end(), 0.0) / b;
  stats.grad_norm = cfg_.clip_norm > 0 ? clip_global_norm(grads, cfg_.clip_norm)
                                       : clip_global_norm(grads, INFINITY);
  stats.lr = cfg_.schedule.lr_at(s + 1);
  adam_step(params_, grads, stats.lr, cfg_.adam);
  return stats;
}

double activation_bytes_estimate(ModelKind kind, const ModelConfig& cfg, int tokens,
                                 int num_vertices) {
  const double l = tokens, e = cfg.embed_dim, f = cfg.fc_dim, h = cfg.heads;
  auto stack = [&](double n, int layers, bool cross, double m) {
    double per_layer = 3.0 * h * n * n + n * (12.0 * e + 3.0 * f);
    if (cross) per_layer += 3.0 * h * n * m + 6.0 * n * e;
    return layers * per_layer;
  };
  double floats = 0.0;
  if (kind == ModelKind::kVertex) {
    floats = stack(l, cfg.vertex_layers, false, 0) + 2.0 * l * e + l * cfg.vertex_vocab();
  } else {
    const double nv = num_vertices + 2;
    floats = stack(nv, cfg.face_layers, false, 0) +
             stack(l, cfg.face_layers, cfg.use_face_cross_attention, nv) + 4.0 * l * e + 3.0 * l * nv;
  }
  return 2.0 * sizeof(float) * floats;
}

double Trainer::evaluate(const std::vector<SequenceExample>& data) const {
  if (data.empty()) throw std::invalid_argument("evaluate: empty data");
  std::vector<double> bits(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    bits[i] = example_loss(kind_, model_, params_, data[i], ForwardOptions{}, nullptr);
  });
  return std::accumulate(bits.begin(), bits.end(), 0.0) / static_cast<double>(data.size());
}

}  // namespace polygen
