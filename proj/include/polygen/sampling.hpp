#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "polygen/mesh.hpp"
#include "polygen/models.hpp"
#include "polygen/params.hpp"
#include "polygen/rng.hpp"
#include "polygen/sequencing.hpp"

namespace polygen {

struct SamplerConfig {
  double top_p = 0.9;
  double temperature = 1.0;
  int max_vertex_tokens = 0;  // 0: the model limit, 3 * max_vertices + 1
  int max_face_tokens = 0;    // 0: the model limit, max_face_tokens + 1
  std::uint64_t seed = 0;
  bool apply_masks = true;
  MaskRules mask_rules = MaskRules::kLookahead;

  /// Throws std::invalid_argument.
  void validate() const;
};

nlohmann::ordered_json to_json(const SamplerConfig& cfg);
SamplerConfig sampler_config_from_json(const nlohmann::json& j);

/// Keeps the smallest set of most probable tokens whose mass reaches top_p
/// (at least one token), zeroes the rest and renormalizes. Equal
/// probabilities rank by token id.
std::vector<double> nucleus_filter(std::span<const double> probs, double top_p);

/// softmax(logits / temperature) with disallowed entries set to zero.
std::vector<double> next_token_probs(std::span<const float> logits, double temperature,
                                     const MaskVector* mask = nullptr);

/// Inverse-CDF draw with one 53-bit uniform.
int draw_token(std::span<const double> probs, Rng& rng);

struct VertexSample {
  Tokens tokens;
  bool truncated = false;  // length limit hit before a stop token
};

struct FaceSample {
  Tokens tokens;
  bool truncated = false;
};

/// With masks on, every drawn token is pushed through the mask state, which
/// throws SequenceError(kMaskViolation) if it was not allowed.
VertexSample sample_vertices(const VertexModel& model, const ParamStore<float>& params,
                             std::optional<int> class_id, const SamplerConfig& cfg, Rng& rng);
FaceSample sample_faces(const FaceModel& model, const ParamStore<float>& params,
                        std::span<const QVertex> vertices, std::optional<int> class_id,
                        const SamplerConfig& cfg, Rng& rng);

struct GenerationReport {
  int index = 0;
  std::optional<int> class_id;
  int vertex_tokens = 0;
  int face_tokens = 0;
  int num_vertices = 0;
  int num_faces = 0;
  bool vertices_truncated = false;
  bool faces_truncated = false;
  bool valid = false;  // decoded and passed the mesh invariants
  std::string error;   // why not valid, if not truncated
};

nlohmann::ordered_json to_json(const GenerationReport& r);

struct GeneratedMesh {
  Tokens vertex_tokens;
  Tokens face_tokens;
  QuantizedMesh qmesh;
  Mesh mesh;  // dequantized; empty unless report.valid
  GenerationReport report;
};

/// Vertex model, then the face model on the decoded vertices.
GeneratedMesh generate_mesh(const VertexModel& vertex_model, const ParamStore<float>& vertex_params,
                            const FaceModel& face_model, const ParamStore<float>& face_params,
                            std::optional<int> class_id, const SamplerConfig& cfg, Rng& rng);

/// n independent generations; sample i draws from make_rng(cfg.seed, {i}),
/// so results do not depend on the thread count.
std::vector<GeneratedMesh> generate_meshes(const VertexModel& vertex_model,
                                           const ParamStore<float>& vertex_params,
                                           const FaceModel& face_model,
                                           const ParamStore<float>& face_params, int n,
                                           std::optional<int> class_id, const SamplerConfig& cfg);

}  // namespace polygen
