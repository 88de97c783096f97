#include "polygen/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "polygen/parallel.hpp"

namespace polygen {

void SamplerConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("sampler config: " + m); };
  if (!(top_p > 0.0 && top_p <= 1.0)) fail("top_p must be in (0, 1]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) fail("temperature must be positive");
  if (max_vertex_tokens < 0 || max_face_tokens < 0) fail("token limits must be >= 0");
}

nlohmann::ordered_json to_json(const SamplerConfig& cfg) {
  return {{"top_p", cfg.top_p},
          {"temperature", cfg.temperature},
          {"max_vertex_tokens", cfg.max_vertex_tokens},
          {"max_face_tokens", cfg.max_face_tokens},
          {"seed", cfg.seed},
          {"apply_masks", cfg.apply_masks},
          {"mask_rules", cfg.mask_rules == MaskRules::kBasic ? "basic" : "lookahead"}};
}

SamplerConfig sampler_config_from_json(const nlohmann::json& j) {
  SamplerConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "top_p") c.top_p = value.get<double>();
    else if (key == "temperature") c.temperature = value.get<double>();
    else if (key == "max_vertex_tokens") c.max_vertex_tokens = value.get<int>();
    else if (key == "max_face_tokens") c.max_face_tokens = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "apply_masks") c.apply_masks = value.get<bool>();
    else if (key == "mask_rules") {
      const auto r = value.get<std::string>();
      if (r == "basic") c.mask_rules = MaskRules::kBasic;
      else if (r == "lookahead") c.mask_rules = MaskRules::kLookahead;
      else throw std::invalid_argument("sampler config: unknown mask_rules '" + r + "'");
    } else {
      throw std::invalid_argument("sampler config: unknown key '" + key + "'");
    }
  }
  return c;
}

std::vector<double> nucleus_filter(std::span<const double> probs, double top_p) {
  std::vector<double> out(probs.size(), 0.0);
  if (probs.empty()) return out;
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
  double mass = 0.0;
  std::size_t keep = order.size();
  for (std::size_t i = 0; i < order.size(); ++i) {
    mass += probs[order[i]];
    if (mass >= top_p) {
      keep = i + 1;
      break;
    }
  }
  double kept = 0.0;
  for (std::size_t i = 0; i < keep; ++i) kept += probs[order[i]];
  if (!(kept > 0.0)) {
    out[order[0]] = 1.0;
    return out;
  }
  for (std::size_t i = 0; i < keep; ++i) out[order[i]] = probs[order[i]] / kept;
  return out;
}

std::vector<double> next_token_probs(std::span<const float> logits, double temperature,
                                     const MaskVector* mask) {
  if (mask != nullptr && mask->size() != logits.size()) {
    throw std::invalid_argument("mask and logits differ in size");
  }
  std::vector<double> p(logits.size(), 0.0);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    top = std::max(top, static_cast<double>(logits[i]) / temperature);
  }
  if (!std::isfinite(top)) throw std::domain_error("no allowed token with finite logit");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    p[i] = std::exp(static_cast<double>(logits[i]) / temperature - top);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

int draw_token(std::span<const double> probs, Rng& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double cum = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cum += probs[i];
    last = static_cast<int>(i);
    if (u < cum) return last;
  }
  if (last < 0) throw std::domain_error("draw from an all-zero distribution");
  return last;
}

namespace {

template <typename Decoder, typename MaskState>
Tokens sample_sequence(Decoder& decoder, std::optional<MaskState> state, int max_tokens,
                       const SamplerConfig& cfg, Rng& rng, bool& truncated) {
  Tokens tokens;
  MaskVector mask;
  truncated = false;
  while (true) {
    const MaskVector* m = nullptr;
    if (state) {
      mask = state->mask();
      m = &mask;
    }
    auto probs = next_token_probs(decoder.logits(), cfg.temperature, m);
    if (cfg.top_p < 1.0) probs = nucleus_filter(probs, cfg.top_p);
    const int t = draw_token(probs, rng);
    if (state) state->push(t);
    tokens.push_back(t);
    if (t == kStopToken) break;
    if (static_cast<int>(tokens.size()) >= max_tokens) {
      truncated = true;
      break;
    }
    decoder.push(t);
  }
  return tokens;
}

}  // namespace

VertexSample sample_vertices(const VertexModel& model, const ParamStore<float>& params,
                             std::optional<int> class_id, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  const int limit = mc.max_vertex_prefix() + 1;
  const int max_tokens = cfg.max_vertex_tokens > 0 ? std::min(cfg.max_vertex_tokens, limit) : limit;
  VertexDecoder decoder(model, params, mc.conditioned() ? class_id : std::nullopt);
  std::optional<VertexMaskState> state;
  if (cfg.apply_masks) state.emplace(mc.bits, cfg.mask_rules);
  VertexSample out;
  out.tokens = sample_sequence(decoder, std::move(state), max_tokens, cfg, rng, out.truncated);
  return out;
}

FaceSample sample_faces(const FaceModel& model, const ParamStore<float>& params,
                        std::span<const QVertex> vertices, std::optional<int> class_id,
                        const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  const int limit = mc.max_face_tokens + 1;
  const int max_tokens = cfg.max_face_tokens > 0 ? std::min(cfg.max_face_tokens, limit) : limit;
  FaceDecoder decoder(model, params, vertices, mc.conditioned() ? class_id : std::nullopt);
  std::optional<FaceMaskState> state;
  if (cfg.apply_masks) state.emplace(static_cast<int>(vertices.size()), cfg.mask_rules);
  FaceSample out;
  out.tokens = sample_sequence(decoder, std::move(state), max_tokens, cfg, rng, out.truncated);
  return out;
}

nlohmann::ordered_json to_json(const GenerationReport& r) {
  nlohmann::ordered_json j = {{"index", r.index}};
  j["class_id"] = r.class_id ? nlohmann::ordered_json(*r.class_id) : nlohmann::ordered_json();
  j["vertex_tokens"] = r.vertex_tokens;
  j["face_tokens"] = r.face_tokens;
  j["num_vertices"] = r.num_vertices;
  j["num_faces"] = r.num_faces;
  j["vertices_truncated"] = r.vertices_truncated;
  j["faces_truncated"] = r.faces_truncated;
  j["valid"] = r.valid;
  j["error"] = r.error;
  return j;
}

GeneratedMesh generate_mesh(const VertexModel& vertex_model, const ParamStore<float>& vertex_params,
                            const FaceModel& face_model, const ParamStore<float>& face_params,
                            std::optional<int> class_id, const SamplerConfig& cfg, Rng& rng) {
  const int bits = vertex_model.config().bits;
  if (face_model.config().bits != bits) {
    throw std::invalid_argument("vertex and face models use different bit depths");
  }
  GeneratedMesh out;
  GenerationReport& r = out.report;
  r.class_id = class_id;

  VertexSample vs = sample_vertices(vertex_model, vertex_params, class_id, cfg, rng);
  out.vertex_tokens = std::move(vs.tokens);
  r.vertex_tokens = static_cast<int>(out.vertex_tokens.size());
  r.vertices_truncated = vs.truncated;
  if (vs.truncated) {
    r.error = "vertex sequence truncated";
    return out;
  }
  try {
    out.qmesh.vertices = decode_vertices(out.vertex_tokens, bits);
  } catch (const SequenceError& e) {
    r.error = e.what();
    return out;
  }
  r.num_vertices = static_cast<int>(out.qmesh.vertices.size());
  if (r.num_vertices < 3) {
    r.error = "fewer than 3 vertices";
    return out;
  }
  if (r.num_vertices > face_model.config().max_vertices) {
    r.error = "more vertices than the face model accepts";
    return out;
  }

  FaceSample fs = sample_faces(face_model, face_params, out.qmesh.vertices, class_id, cfg, rng);
  out.face_tokens = std::move(fs.tokens);
  r.face_tokens = static_cast<int>(out.face_tokens.size());
  r.faces_truncated = fs.truncated;
  if (fs.truncated) {
    r.error = "face sequence truncated";
    return out;
  }
  try {
    out.qmesh.faces = decode_faces(out.face_tokens, r.num_vertices);
  } catch (const SequenceError& e) {
    r.error = e.what();
    return out;
  }
  r.num_faces = static_cast<int>(out.qmesh.faces.size());
  out.qmesh.class_id = class_id;
  try {
    out.qmesh = canonical_order(out.qmesh);
  } catch (const std::exception& e) {
    r.error = e.what();
    return out;
  }
  if (auto v = find_violation(out.qmesh, bits)) {
    r.error = *v;
    return out;
  }
  out.mesh = dequantize(out.qmesh, bits);
  r.valid = true;
  return out;
}

std::vector<GeneratedMesh> generate_meshes(const VertexModel& vertex_model,
                                           const ParamStore<float>& vertex_params,
                                           const FaceModel& face_model,
                                           const ParamStore<float>& face_params, int n,
                                           std::optional<int> class_id, const SamplerConfig& cfg) {
  if (n < 0) throw std::invalid_argument("negative sample count");
  std::vector<GeneratedMesh> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), [&](std::size_t i) {
    Rng rng = make_rng(cfg.seed, {i});
    out[i] = generate_mesh(vertex_model, vertex_params, face_model, face_params, class_id, cfg, rng);
    out[i].report.index = static_cast<int>(i);
  });
  return out;
}

}  // namespace polygen
