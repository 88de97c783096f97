#include "polygen/models.hpp"

#include <cmath>
#include <stdexcept>
#include <tuple>

#include "polygen/kernels.hpp"
#include "polygen/sequencing.hpp"

namespace polygen {

namespace {

constexpr double kInitStd = 0.02;

const char* mode_name(ConditionMode m) { return m == ConditionMode::kClass ? "class" : "none"; }

std::string block_name(const char* stack, int i) {
  return std::string(stack) + std::to_string(i) + "/";
}

Tensor<float> ones(int cols) { return Tensor<float>(1, cols, 1.0f); }
Tensor<float> zeros(int rows, int cols) { return Tensor<float>(rows, cols); }

void check_class(const ModelConfig& cfg, std::optional<int> class_id) {
  if (!cfg.conditioned()) return;
  if (!class_id) throw std::invalid_argument("class-conditioned model needs a class id");
  if (*class_id < 0 || *class_id >= cfg.num_classes) {
    throw std::out_of_range("class id " + std::to_string(*class_id) + " outside [0, " +
                            std::to_string(cfg.num_classes) + ")");
  }
}

template <typename T>
Var class_vector(Graph<T>& g, const ModelConfig& cfg, const char* table,
                 std::optional<int> class_id) {
  if (!cfg.conditioned()) return {};
  return g.gather_rows(g.param(table), {*class_id});
}

template <typename T>
Var final_norm(Graph<T>& g, Var h, const std::string& prefix) {
  return g.layer_norm(h, g.param(prefix + "_g"), g.param(prefix + "_b"));
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (embed_dim < 1 || fc_dim < 1) fail("embed_dim and fc_dim must be positive");
  if (heads < 1 || embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
  if (vertex_layers < 0 || face_layers < 0) fail("negative layer count");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (bits < 1 || bits > 16) fail("bits must be in [1, 16]");
  if (max_vertices < 3) fail("max_vertices must be >= 3");
  if (max_face_tokens < 4) fail("max_face_tokens must be >= 4");
  if (conditioned() && num_classes < 1) fail("class conditioning needs num_classes >= 1");
}

nlohmann::ordered_json to_json(const ModelConfig& cfg) {
  return {{"embed_dim", cfg.embed_dim},
          {"fc_dim", cfg.fc_dim},
          {"vertex_layers", cfg.vertex_layers},
          {"face_layers", cfg.face_layers},
          {"heads", cfg.heads},
          {"dropout", cfg.dropout},
          {"bits", cfg.bits},
          {"max_vertices", cfg.max_vertices},
          {"max_face_tokens", cfg.max_face_tokens},
          {"num_classes", cfg.num_classes},
          {"use_face_cross_attention", cfg.use_face_cross_attention},
          {"condition_mode", mode_name(cfg.condition_mode)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "embed_dim") c.embed_dim = value.get<int>();
    else if (key == "fc_dim") c.fc_dim = value.get<int>();
    else if (key == "vertex_layers") c.vertex_layers = value.get<int>();
    else if (key == "face_layers") c.face_layers = value.get<int>();
    else if (key == "heads") c.heads = value.get<int>();
    else if (key == "dropout") c.dropout = value.get<double>();
    else if (key == "bits") c.bits = value.get<int>();
    else if (key == "max_vertices") c.max_vertices = value.get<int>();
    else if (key == "max_face_tokens") c.max_face_tokens = value.get<int>();
    else if (key == "num_classes") c.num_classes = value.get<int>();
    else if (key == "use_face_cross_attention") c.use_face_cross_attention = value.get<bool>();
    else if (key == "condition_mode") {
      const auto m = value.get<std::string>();
      if (m == "none") c.condition_mode = ConditionMode::kNone;
      else if (m == "class") c.condition_mode = ConditionMode::kClass;
      else throw std::invalid_argument("model config: unknown condition_mode '" + m + "'");
    } else {
      throw std::invalid_argument("model config: unknown key '" + key + "'");
    }
  }
  return c;
}

void add_block_params(ParamStore<float>& store, const std::string& prefix, int e, int f,
                      bool conditioned, bool cross_attention, Rng& rng) {
  auto w = [&](int r, int c) { return truncated_normal<float>(r, c, kInitStd, rng); };
  store.add(prefix + "ln1_g", ones(e));
  store.add(prefix + "ln1_b", zeros(1, e));
  for (const char* m : {"q", "k", "v", "o"}) {
    store.add(prefix + "w" + m, w(e, e));
    store.add(prefix + "b" + m, zeros(1, e));
  }
  if (conditioned) store.add(prefix + "cond_w", w(e, e));
  if (cross_attention) {
    store.add(prefix + "lnc_g", ones(e));
    store.add(prefix + "lnc_b", zeros(1, e));
    for (const char* m : {"q", "k", "v", "o"}) {
      store.add(prefix + "c" + m, w(e, e));
      store.add(prefix + "cb" + m, zeros(1, e));
    }
  }
  store.add(prefix + "ln2_g", ones(e));
  store.add(prefix + "ln2_b", zeros(1, e));
  store.add(prefix + "fc1_w", w(e, f));
  store.add(prefix + "fc1_b", zeros(1, f));
  store.add(prefix + "fc2_w", w(f, e));
  store.add(prefix + "fc2_b", zeros(1, e));
}

template <typename T>
Var transformer_block(Graph<T>& g, Var h, const std::string& p, const BlockContext<T>& ctx) {
  auto P = [&](const char* n) { return g.param(p + n); };
  Var x = g.layer_norm(h, P("ln1_g"), P("ln1_b"));
  Var q = g.linear(x, P("wq"), P("bq"));
  Var k = g.linear(x, P("wk"), P("bk"));
  Var v = g.linear(x, P("wv"), P("bv"));
  h = g.add(h, g.linear(g.attention(q, k, v, ctx.heads, ctx.causal), P("wo"), P("bo")));
  if (ctx.cond.valid()) h = g.add_row(h, g.matmul(ctx.cond, P("cond_w")));
  if (ctx.memory.valid()) {
    x = g.layer_norm(h, P("lnc_g"), P("lnc_b"));
    q = g.linear(x, P("cq"), P("cbq"));
    k = g.linear(ctx.memory, P("ck"), P("cbk"));
    v = g.linear(ctx.memory, P("cv"), P("cbv"));
    h = g.add(h, g.linear(g.attention(q, k, v, ctx.heads, false), P("co"), P("cbo")));
  }
  x = g.layer_norm(h, P("ln2_g"), P("ln2_b"));
  Var f = g.relu(g.linear(x, P("fc1_w"), P("fc1_b")));
  if (ctx.dropout > 0 && ctx.rng != nullptr) f = g.dropout(f, ctx.dropout, *ctx.rng);
  return g.add(h, g.linear(f, P("fc2_w"), P("fc2_b")));
}

// ---------------------------------------------------------------------------

VertexModel::VertexModel(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

void VertexModel::init_params(ParamStore<float>& store, Rng& rng) const {
  const int e = cfg_.embed_dim, vocab = cfg_.vertex_vocab();
  store.add("vertex/value_emb", truncated_normal<float>(vocab, e, kInitStd, rng));
  store.add("vertex/coord_emb", truncated_normal<float>(3, e, kInitStd, rng));
  store.add("vertex/pos_emb", truncated_normal<float>(cfg_.max_vertices + 1, e, kInitStd, rng));
  store.add("vertex/start", truncated_normal<float>(1, e, kInitStd, rng));
  if (cfg_.conditioned()) {
    store.add("vertex/class_emb", truncated_normal<float>(cfg_.num_classes, e, kInitStd, rng));
  }
  for (int i = 0; i < cfg_.vertex_layers; ++i) {
    add_block_params(store, block_name("vertex/block", i), e, cfg_.fc_dim, cfg_.conditioned(),
                     false, rng);
  }
  store.add("vertex/ln_f_g", ones(e));
  store.add("vertex/ln_f_b", zeros(1, e));
  store.add("vertex/out_w", zeros(e, vocab));
  store.add("vertex/out_b", zeros(1, vocab));
}

template <typename T>
Var VertexModel::logits(Graph<T>& g, std::span<const int> prefix, std::optional<int> class_id,
                        const ForwardOptions& opt) const {
  check_class(cfg_, class_id);
  if (static_cast<int>(prefix.size()) > cfg_.max_vertex_prefix()) {
    throw std::length_error("vertex prefix of " + std::to_string(prefix.size()) +
                            " tokens exceeds " + std::to_string(cfg_.max_vertex_prefix()));
  }
  Var h = g.param("vertex/start");
  if (!prefix.empty()) {
    std::vector<int> values(prefix.begin(), prefix.end()), coord, pos;
    for (std::size_t t = 0; t < prefix.size(); ++t) {
      if (prefix[t] < 0 || prefix[t] >= cfg_.vertex_vocab()) {
        throw std::out_of_range("vertex token " + std::to_string(prefix[t]) + " out of range");
      }
      coord.push_back(static_cast<int>(t % 3));
      pos.push_back(static_cast<int>(t / 3));
    }
    Var emb = g.gather_rows(g.param("vertex/value_emb"), std::move(values));
    emb = g.add(emb, g.gather_rows(g.param("vertex/coord_emb"), std::move(coord)));
    emb = g.add(emb, g.gather_rows(g.param("vertex/pos_emb"), std::move(pos)));
    h = g.concat_rows({h, emb});
  }
  BlockContext<T> ctx;
  ctx.heads = cfg_.heads;
  ctx.causal = true;
  ctx.cond = class_vector(g, cfg_, "vertex/class_emb", class_id);
  ctx.dropout = opt.train ? static_cast<T>(cfg_.dropout) : T(0);
  ctx.rng = opt.rng;
  for (int i = 0; i < cfg_.vertex_layers; ++i) {
    h = transformer_block(g, h, block_name("vertex/block", i), ctx);
  }
  h = final_norm(g, h, "vertex/ln_f");
  return g.linear(h, g.param("vertex/out_w"), g.param("vertex/out_b"));
}

template <typename T>
Var VertexModel::nll(Graph<T>& g, std::span<const int> tokens, std::optional<int> class_id,
                     const ForwardOptions& opt) const {
  if (tokens.empty()) throw std::invalid_argument("vertex nll: empty sequence");
  const Var l = logits(g, tokens.first(tokens.size() - 1), class_id, opt);
  return g.cross_entropy(l, tokens, opt.masks);
}

// ---------------------------------------------------------------------------

FaceModel::FaceModel(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

namespace {

int face_index_rows(const ModelConfig& c) { return c.max_face_tokens / 4 + 2; }
int in_face_rows(const ModelConfig& c) { return c.max_vertices + 2; }

}  // namespace

void FaceModel::init_params(ParamStore<float>& store, Rng& rng) const {
  const int e = cfg_.embed_dim, grid = 1 << cfg_.bits;
  auto w = [&](int r, int c) { return truncated_normal<float>(r, c, kInitStd, rng); };
  store.add("face/enc_value_z", w(grid, e));
  store.add("face/enc_value_y", w(grid, e));
  store.add("face/enc_value_x", w(grid, e));
  store.add("face/enc_pos", w(cfg_.max_vertices, e));
  store.add("face/enc_special", w(2, e));
  store.add("face/enc_special_pos", w(2, e));
  if (cfg_.conditioned()) store.add("face/class_emb", w(cfg_.num_classes, e));
  for (int i = 0; i < cfg_.face_layers; ++i) {
    add_block_params(store, block_name("face/enc_block", i), e, cfg_.fc_dim, cfg_.conditioned(),
                     false, rng);
  }
  store.add("face/enc_ln_g", ones(e));
  store.add("face/enc_ln_b", zeros(1, e));
  store.add("face/dec_start", w(1, e));
  store.add("face/dec_face_idx", w(face_index_rows(cfg_), e));
  store.add("face/dec_in_face", w(in_face_rows(cfg_), e));
  for (int i = 0; i < cfg_.face_layers; ++i) {
    add_block_params(store, block_name("face/dec_block", i), e, cfg_.fc_dim, cfg_.conditioned(),
                     cfg_.use_face_cross_attention, rng);
  }
  store.add("face/dec_ln_g", ones(e));
  store.add("face/dec_ln_b", zeros(1, e));
  store.add("face/ptr_w", zeros(e, e));
  store.add("face/ptr_b", zeros(1, e));
}

template <typename T>
Var FaceModel::encode(Graph<T>& g, std::span<const QVertex> vertices, std::optional<int> class_id,
                      const ForwardOptions& opt) const {
  check_class(cfg_, class_id);
  const int n = static_cast<int>(vertices.size());
  if (n > cfg_.max_vertices) {
    throw std::length_error(std::to_string(n) + " vertices exceed " +
                            std::to_string(cfg_.max_vertices));
  }
  const int grid = 1 << cfg_.bits;
  Var h = g.add(g.param("face/enc_special"), g.param("face/enc_special_pos"));
  if (n > 0) {
    std::vector<int> z, y, x, pos;
    for (int i = 0; i < n; ++i) {
      const QVertex& v = vertices[i];
      if (v.z < 0 || v.z >= grid || v.y < 0 || v.y >= grid || v.x < 0 || v.x >= grid) {
        throw std::out_of_range("vertex " + std::to_string(i) + " outside the quantization grid");
      }
      z.push_back(v.z);
      y.push_back(v.y);
      x.push_back(v.x);
      pos.push_back(i);
    }
    Var emb = g.gather_rows(g.param("face/enc_value_z"), std::move(z));
    emb = g.add(emb, g.gather_rows(g.param("face/enc_value_y"), std::move(y)));
    emb = g.add(emb, g.gather_rows(g.param("face/enc_value_x"), std::move(x)));
    emb = g.add(emb, g.gather_rows(g.param("face/enc_pos"), std::move(pos)));
    h = g.concat_rows({h, emb});
  }
  BlockContext<T> ctx;
  ctx.heads = cfg_.heads;
  ctx.causal = false;
  ctx.cond = class_vector(g, cfg_, "face/class_emb", class_id);
  ctx.dropout = opt.train ? static_cast<T>(cfg_.dropout) : T(0);
  ctx.rng = opt.rng;
  for (int i = 0; i < cfg_.face_layers; ++i) {
    h = transformer_block(g, h, block_name("face/enc_block", i), ctx);
  }
  return final_norm(g, h, "face/enc_ln");
}

void face_token_positions(std::span<const int> tokens, std::vector<int>& face_index,
                          std::vector<int>& in_face) {
  face_index.clear();
  in_face.clear();
  int face = 0, pos = 0;
  for (int t : tokens) {
    face_index.push_back(face);
    in_face.push_back(pos);
    if (t == kNewFaceToken) {
      ++face;
      pos = 0;
    } else if (t != kStopToken) {
      ++pos;
    }
  }
}

template <typename T>
Var FaceModel::pointers(Graph<T>& g, Var encoded, std::span<const int> prefix,
                        std::optional<int> class_id, const ForwardOptions& opt) const {
  check_class(cfg_, class_id);
  if (static_cast<int>(prefix.size()) > cfg_.max_face_tokens) {
    throw std::length_error("face prefix of " + std::to_string(prefix.size()) +
                            " tokens exceeds " + std::to_string(cfg_.max_face_tokens));
  }
  const int rows = g.value(encoded).rows();
  Var h = g.param("face/dec_start");
  if (!prefix.empty()) {
    for (int t : prefix) {
      if (t < 0 || t >= rows) {
        throw std::out_of_range("face token " + std::to_string(t) + " out of range for " +
                                std::to_string(rows - 2) + " vertices");
      }
    }
    std::vector<int> fi, pos;
    face_token_positions(prefix, fi, pos);
    for (int& f : fi) f = std::min(f, face_index_rows(cfg_) - 1);
    for (int& p : pos) p = std::min(p, in_face_rows(cfg_) - 1);
    Var emb = g.gather_rows(encoded, std::vector<int>(prefix.begin(), prefix.end()));
    emb = g.add(emb, g.gather_rows(g.param("face/dec_face_idx"), std::move(fi)));
    emb = g.add(emb, g.gather_rows(g.param("face/dec_in_face"), std::move(pos)));
    h = g.concat_rows({h, emb});
  }
  BlockContext<T> ctx;
  ctx.heads = cfg_.heads;
  ctx.causal = true;
  ctx.cond = class_vector(g, cfg_, "face/class_emb", class_id);
  if (cfg_.use_face_cross_attention) ctx.memory = encoded;
  ctx.dropout = opt.train ? static_cast<T>(cfg_.dropout) : T(0);
  ctx.rng = opt.rng;
  for (int i = 0; i < cfg_.face_layers; ++i) {
    h = transformer_block(g, h, block_name("face/dec_block", i), ctx);
  }
  h = final_norm(g, h, "face/dec_ln");
  return g.linear(h, g.param("face/ptr_w"), g.param("face/ptr_b"));
}

template <typename T>
Var FaceModel::logits(Graph<T>& g, std::span<const QVertex> vertices, std::span<const int> prefix,
                      std::optional<int> class_id, const ForwardOptions& opt) const {
  const Var enc = encode(g, vertices, class_id, opt);
  const Var ptr = pointers(g, enc, prefix, class_id, opt);
  return g.matmul(ptr, enc, true);
}

template <typename T>
Var FaceModel::nll(Graph<T>& g, std::span<const QVertex> vertices, std::span<const int> tokens,
                   std::optional<int> class_id, const ForwardOptions& opt) const {
  if (tokens.empty()) throw std::invalid_argument("face nll: empty sequence");
  const Var l = logits(g, vertices, tokens.first(tokens.size() - 1), class_id, opt);
  return g.cross_entropy(l, tokens, opt.masks);
}

// ---------------------------------------------------------------------------
// Incremental decoding.

namespace {

void vec_mat(const std::vector<float>& x, const Tensor<float>& w, const Tensor<float>* b,
             std::vector<float>& y) {
  y.assign(static_cast<std::size_t>(w.cols()), 0.0f);
  if (b != nullptr) std::copy(b->data(), b->data() + w.cols(), y.begin());
  kernels::gemm<float>(false, false, 1, w.cols(), w.rows(), 1.0f, x.data(), w.rows(), w.data(),
                       w.cols(), b != nullptr ? 1.0f : 0.0f, y.data(), w.cols());
}

void norm_row(const std::vector<float>& x, const Tensor<float>& g, const Tensor<float>& b,
              std::vector<float>& y) {
  y.resize(x.size());
  kernels::layer_norm_rows<float>(x.data(), 1, static_cast<int>(x.size()), g.data(), b.data(),
                                  1e-5f, y.data(), nullptr, nullptr);
}

// Attention of one query row over `rows` cached key/value rows of width e.
void attend(const std::vector<float>& q, const float* keys, const float* values, int rows, int e,
            int heads, std::vector<float>& out, std::vector<float>& scratch) {
  const int d = e / heads;
  const float sc = 1.0f / std::sqrt(static_cast<float>(d));
  out.assign(static_cast<std::size_t>(e), 0.0f);
  scratch.resize(static_cast<std::size_t>(rows));
  for (int h = 0; h < heads; ++h) {
    const float* qh = q.data() + h * d;
    for (int j = 0; j < rows; ++j) {
      const float* kj = keys + static_cast<std::size_t>(j) * e + h * d;
      float s = 0;
      for (int c = 0; c < d; ++c) s += qh[c] * kj[c];
      scratch[j] = s * sc;
    }
    kernels::softmax_rows<float>(scratch.data(), 1, rows, rows);
    float* oh = out.data() + h * d;
    for (int j = 0; j < rows; ++j) {
      const float* vj = values + static_cast<std::size_t>(j) * e + h * d;
      for (int c = 0; c < d; ++c) oh[c] += scratch[j] * vj[c];
    }
  }
}

struct LayerCache {
  const Tensor<float>* p[32] = {};
  std::vector<float> cond;
  std::vector<float> k, v;          // self-attention cache, grows by rows
  std::vector<float> mem_k, mem_v;  // cross-attention keys/values
  int mem_rows = 0;
};

enum Slot {
  kLn1G, kLn1B, kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo, kCondW,
  kLncG, kLncB, kCq, kCbq, kCk, kCbk, kCv, kCbv, kCo, kCbo,
  kLn2G, kLn2B, kFc1W, kFc1B, kFc2W, kFc2B, kSlotCount
};

const char* const kSlotNames[kSlotCount] = {
    "ln1_g", "ln1_b", "wq",  "bq",  "wk",  "bk",    "wv",    "bv",    "wo",
    "bo",    "cond_w", "lnc_g", "lnc_b", "cq", "cbq", "ck",    "cbk",   "cv",
    "cbv",   "co",    "cbo", "ln2_g", "ln2_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b"};

// A causal block stack fed one row at a time.
class IncrementalStack {
 public:
  IncrementalStack(const ParamStore<float>& params, const std::string& stack, int layers,
                   int heads, const std::vector<float>* class_vec, const Tensor<float>* memory)
      : heads_(heads), layers_(static_cast<std::size_t>(layers)) {
    for (int l = 0; l < layers; ++l) {
      LayerCache& c = layers_[l];
      const std::string prefix = block_name(stack.c_str(), l);
      for (int s = 0; s < kSlotCount; ++s) {
        const int i = params.find(prefix + kSlotNames[s]);
        c.p[s] = i >= 0 ? &params.value(i) : nullptr;
      }
      if (class_vec != nullptr && c.p[kCondW] != nullptr) vec_mat(*class_vec, *c.p[kCondW], nullptr, c.cond);
      if (memory != nullptr && c.p[kCq] != nullptr) {
        const int rows = memory->rows(), e = memory->cols();
        c.mem_rows = rows;
        for (auto [w, b, dst] : {std::tuple{c.p[kCk], c.p[kCbk], &c.mem_k},
                                 std::tuple{c.p[kCv], c.p[kCbv], &c.mem_v}}) {
          dst->resize(static_cast<std::size_t>(rows) * e);
          for (int r = 0; r < rows; ++r) std::copy(b->data(), b->data() + e, dst->data() + r * e);
          kernels::gemm<float>(false, false, rows, e, e, 1.0f, memory->data(), e, w->data(), e,
                               1.0f, dst->data(), e);
        }
      }
    }
  }

  void step(std::vector<float>& h) {
    const int e = static_cast<int>(h.size());
    for (LayerCache& c : layers_) {
      norm_row(h, *c.p[kLn1G], *c.p[kLn1B], x_);
      vec_mat(x_, *c.p[kWq], c.p[kBq], q_);
      vec_mat(x_, *c.p[kWk], c.p[kBk], k_);
      vec_mat(x_, *c.p[kWv], c.p[kBv], v_);
      c.k.insert(c.k.end(), k_.begin(), k_.end());
      c.v.insert(c.v.end(), v_.begin(), v_.end());
      attend(q_, c.k.data(), c.v.data(), length_ + 1, e, heads_, o_, scratch_);
      vec_mat(o_, *c.p[kWo], c.p[kBo], r_);
      for (int i = 0; i < e; ++i) h[i] += r_[i];
      if (!c.cond.empty()) {
        for (int i = 0; i < e; ++i) h[i] += c.cond[i];
      }
      if (c.mem_rows > 0) {
        norm_row(h, *c.p[kLncG], *c.p[kLncB], x_);
        vec_mat(x_, *c.p[kCq], c.p[kCbq], q_);
        attend(q_, c.mem_k.data(), c.mem_v.data(), c.mem_rows, e, heads_, o_, scratch_);
        vec_mat(o_, *c.p[kCo], c.p[kCbo], r_);
        for (int i = 0; i < e; ++i) h[i] += r_[i];
      }
      norm_row(h, *c.p[kLn2G], *c.p[kLn2B], x_);
      vec_mat(x_, *c.p[kFc1W], c.p[kFc1B], f_);
      for (float& v : f_) v = v > 0 ? v : 0.0f;
      vec_mat(f_, *c.p[kFc2W], c.p[kFc2B], r_);
      for (int i = 0; i < e; ++i) h[i] += r_[i];
    }
    ++length_;
  }

  int length() const { return length_; }

 private:
  int heads_;
  int length_ = 0;
  std::vector<LayerCache> layers_;
  std::vector<float> x_, q_, k_, v_, o_, r_, f_, scratch_;
};

std::vector<float> row_of(const ParamStore<float>& p, const char* name, int row) {
  const Tensor<float>& t = p.value(p.index(name));
  if (row < 0 || row >= t.rows()) {
    throw std::out_of_range(std::string(name) + " has no row " + std::to_string(row));
  }
  return std::vector<float>(t.row(row), t.row(row) + t.cols());
}

std::vector<float> class_row(const ParamStore<float>& p, const ModelConfig& cfg, const char* table,
                             std::optional<int> class_id) {
  check_class(cfg, class_id);
  if (!cfg.conditioned()) return {};
  return row_of(p, table, *class_id);
}

void add_into(std::vector<float>& a, const std::vector<float>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace

struct VertexDecoder::State {
  const ParamStore<float>& params;
  ModelConfig cfg;
  std::vector<float> class_vec;
  IncrementalStack stack;
  std::vector<float> h, normed, logits;
  int tokens = 0;

  State(const VertexModel& model, const ParamStore<float>& p, std::optional<int> class_id)
      : params(p),
        cfg(model.config()),
        class_vec(class_row(p, cfg, "vertex/class_emb", class_id)),
        stack(p, "vertex/block", cfg.vertex_layers, cfg.heads,
              cfg.conditioned() ? &class_vec : nullptr, nullptr) {
    h = row_of(p, "vertex/start", 0);
    advance();
  }

  void advance() {
    stack.step(h);
    norm_row(h, params.value(params.index("vertex/ln_f_g")),
             params.value(params.index("vertex/ln_f_b")), normed);
    vec_mat(normed, params.value(params.index("vertex/out_w")),
            &params.value(params.index("vertex/out_b")), logits);
  }
};

VertexDecoder::VertexDecoder(const VertexModel& model, const ParamStore<float>& params,
                             std::optional<int> class_id)
    : s_(std::make_unique<State>(model, params, class_id)) {}
VertexDecoder::~VertexDecoder() = default;
VertexDecoder::VertexDecoder(VertexDecoder&&) noexcept = default;

const std::vector<float>& VertexDecoder::logits() const { return s_->logits; }
int VertexDecoder::length() const { return s_->tokens; }

void VertexDecoder::push(int token) {
  State& s = *s_;
  if (token < 0 || token >= s.cfg.vertex_vocab()) {
    throw std::out_of_range("vertex token " + std::to_string(token) + " out of range");
  }
  if (s.tokens >= s.cfg.max_vertex_prefix()) throw std::length_error("vertex decoder is full");
  const int t = s.tokens;
  s.h = row_of(s.params, "vertex/value_emb", token);
  add_into(s.h, row_of(s.params, "vertex/coord_emb", t % 3));
  add_into(s.h, row_of(s.params, "vertex/pos_emb", t / 3));
  ++s.tokens;
  s.advance();
}

struct FaceDecoder::State {
  const ParamStore<float>& params;
  ModelConfig cfg;
  std::vector<float> class_vec;
  Tensor<float> encoded;
  std::unique_ptr<IncrementalStack> stack;
  std::vector<float> h, normed, ptr, logits;
  int tokens = 0;
  int face = 0, pos = 0;

  State(const FaceModel& model, const ParamStore<float>& p, std::span<const QVertex> vertices,
        std::optional<int> class_id)
      : params(p), cfg(model.config()), class_vec(class_row(p, cfg, "face/class_emb", class_id)) {
    {
      Graph<float> g(&p);
      encoded = g.value(model.encode(g, vertices, class_id));
    }
    stack = std::make_unique<IncrementalStack>(
        p, "face/dec_block", cfg.face_layers, cfg.heads, cfg.conditioned() ? &class_vec : nullptr,
        cfg.use_face_cross_attention ? &encoded : nullptr);
    h = row_of(p, "face/dec_start", 0);
    advance();
  }

  void advance() {
    stack->step(h);
    norm_row(h, params.value(params.index("face/dec_ln_g")),
             params.value(params.index("face/dec_ln_b")), normed);
    vec_mat(normed, params.value(params.index("face/ptr_w")),
            &params.value(params.index("face/ptr_b")), ptr);
    logits.assign(static_cast<std::size_t>(encoded.rows()), 0.0f);
    kernels::gemm<float>(false, true, 1, encoded.rows(), encoded.cols(), 1.0f, ptr.data(),
                         encoded.cols(), encoded.data(), encoded.cols(), 0.0f, logits.data(),
                         encoded.rows());
  }
};

FaceDecoder::FaceDecoder(const FaceModel& model, const ParamStore<float>& params,
                         std::span<const QVertex> vertices, std::optional<int> class_id)
    : s_(std::make_unique<State>(model, params, vertices, class_id)) {}
FaceDecoder::~FaceDecoder() = default;
FaceDecoder::FaceDecoder(FaceDecoder&&) noexcept = default;

const std::vector<float>& FaceDecoder::logits() const { return s_->logits; }
int FaceDecoder::length() const { return s_->tokens; }

void FaceDecoder::push(int token) {
  State& s = *s_;
  if (token < 0 || token >= s.encoded.rows()) {
    throw std::out_of_range("face token " + std::to_string(token) + " out of range");
  }
  if (s.tokens >= s.cfg.max_face_tokens) throw std::length_error("face decoder is full");
  const int e = s.encoded.cols();
  s.h.assign(s.encoded.row(token), s.encoded.row(token) + e);
  add_into(s.h, row_of(s.params, "face/dec_face_idx", std::min(s.face, face_index_rows(s.cfg) - 1)));
  add_into(s.h, row_of(s.params, "face/dec_in_face", std::min(s.pos, in_face_rows(s.cfg) - 1)));
  if (token == kNewFaceToken) {
    ++s.face;
    s.pos = 0;
  } else if (token != kStopToken) {
    ++s.pos;
  }
  ++s.tokens;
  s.advance();
}

#define POLYGEN_INSTANTIATE(T)                                                                   \
  template Var transformer_block<T>(Graph<T>&, Var, const std::string&, const BlockContext<T>&); \
  template Var VertexModel::logits<T>(Graph<T>&, std::span<const int>, std::optional<int>,      \
                                      const ForwardOptions&) const;                              \
  template Var VertexModel::nll<T>(Graph<T>&, std::span<const int>, std::optional<int>,         \
                                   const ForwardOptions&) const;                                 \
  template Var FaceModel::encode<T>(Graph<T>&, std::span<const QVertex>, std::optional<int>,    \
                                    const ForwardOptions&) const;                                \
  template Var FaceModel::pointers<T>(Graph<T>&, Var, std::span<const int>, std::optional<int>, \
                                      const ForwardOptions&) const;                              \
  template Var FaceModel::logits<T>(Graph<T>&, std::span<const QVertex>, std::span<const int>,  \
                                    std::optional<int>, const ForwardOptions&) const;            \
  template Var FaceModel::nll<T>(Graph<T>&, std::span<const QVertex>, std::span<const int>,     \
                                 std::optional<int>, const ForwardOptions&) const;

POLYGEN_INSTANTIATE(float)
POLYGEN_INSTANTIATE(double)

#undef POLYGEN_INSTANTIATE

}  // namespace polygen
