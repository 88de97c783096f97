#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "polygen/graph.hpp"
#include "polygen/mesh.hpp"
#include "polygen/params.hpp"
#include "polygen/rng.hpp"

namespace polygen {

enum class ConditionMode { kNone, kClass };

struct ModelConfig {
  int embed_dim = 128;
  int fc_dim = 512;
  int vertex_layers = 4;
  int face_layers = 3;
  int heads = 4;
  double dropout = 0.2;
  int bits = kDefaultBits;
  int max_vertices = 800;
  int max_face_tokens = 2800;
  int num_classes = 0;
  bool use_face_cross_attention = false;
  ConditionMode condition_mode = ConditionMode::kNone;

  /// Throws std::invalid_argument.
  void validate() const;
  int vertex_vocab() const { return (1 << bits) + 1; }
  /// Longest vertex input prefix (every token but the final stop).
  int max_vertex_prefix() const { return 3 * max_vertices; }
  bool conditioned() const { return condition_mode == ConditionMode::kClass; }
};

nlohmann::ordered_json to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Train-time switches for one forward pass.
struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;  // dropout draws; required when train and dropout > 0
  const std::vector<MaskVector>* masks = nullptr;  // applied to the loss only
};

/// Inputs shared by all blocks of one stack.
template <typename T>
struct BlockContext {
  int heads = 1;
  bool causal = false;
  Var cond;    // [1, E] class embedding, or invalid
  Var memory;  // encoder outputs for cross-attention, or invalid
  T dropout = 0;
  Rng* rng = nullptr;
};

/// Registers the parameters of one block under `prefix`.
void add_block_params(ParamStore<float>& store, const std::string& prefix, int embed_dim,
                      int fc_dim, bool conditioned, bool cross_attention, Rng& rng);

/// Pre-LN block: H += MHA(LN(H)); H += cond W_c; [H += CrossMHA(LN(H), M)];
/// H += W2 dropout(ReLU(W1 LN(H))).
template <typename T>
Var transformer_block(Graph<T>& g, Var h, const std::string& prefix, const BlockContext<T>& ctx);

class VertexModel {
 public:
  explicit VertexModel(ModelConfig cfg);
  const ModelConfig& config() const { return cfg_; }

  void init_params(ParamStore<float>& store, Rng& rng) const;

  /// Logits [prefix.size() + 1, 2^bits + 1]; row t predicts token t.
  template <typename T>
  Var logits(Graph<T>& g, std::span<const int> prefix, std::optional<int> class_id,
             const ForwardOptions& opt = {}) const;
  /// Sequence NLL in nats (1 x 1) for a full token sequence ending in stop.
  template <typename T>
  Var nll(Graph<T>& g, std::span<const int> tokens, std::optional<int> class_id,
          const ForwardOptions& opt = {}) const;

 private:
  ModelConfig cfg_;
};

class FaceModel {
 public:
  explicit FaceModel(ModelConfig cfg);
  const ModelConfig& config() const { return cfg_; }

  void init_params(ParamStore<float>& store, Rng& rng) const;

  /// Contextual embeddings [N_V + 2, E]: row 0 stop, row 1 new-face, row
  /// 2 + i vertex i.
  template <typename T>
  Var encode(Graph<T>& g, std::span<const QVertex> vertices, std::optional<int> class_id,
             const ForwardOptions& opt = {}) const;
  /// Pointer logits [prefix.size() + 1, N_V + 2].
  template <typename T>
  Var logits(Graph<T>& g, std::span<const QVertex> vertices, std::span<const int> prefix,
             std::optional<int> class_id, const ForwardOptions& opt = {}) const;
  template <typename T>
  Var nll(Graph<T>& g, std::span<const QVertex> vertices, std::span<const int> tokens,
          std::optional<int> class_id, const ForwardOptions& opt = {}) const;

  /// Decoder-side pointer rows given encoder output (shared by logits and
  /// the incremental path's tests).
  template <typename T>
  Var pointers(Graph<T>& g, Var encoded, std::span<const int> prefix, std::optional<int> class_id,
               const ForwardOptions& opt) const;

 private:
  ModelConfig cfg_;
};

/// Face index and in-face position of every token, as fed to the decoder.
/// A new-face token takes the index of the face it closes and the position
/// after its last vertex.
void face_token_positions(std::span<const int> tokens, std::vector<int>& face_index,
                          std::vector<int>& in_face);

/// Incremental (KV-cached) decoding with fixed parameters. Matches the
/// graph forward pass without dropout.
class VertexDecoder {
 public:
  VertexDecoder(const VertexModel& model, const ParamStore<float>& params,
                std::optional<int> class_id);
  ~VertexDecoder();
  VertexDecoder(VertexDecoder&&) noexcept;
  /// Logits for the next token; call push() to feed the chosen token.
  const std::vector<float>& logits() const;
  void push(int token);
  int length() const;

 private:
  struct State;
  std::unique_ptr<State> s_;
};

class FaceDecoder {
 public:
  FaceDecoder(const FaceModel& model, const ParamStore<float>& params,
              std::span<const QVertex> vertices, std::optional<int> class_id);
  ~FaceDecoder();
  FaceDecoder(FaceDecoder&&) noexcept;
  const std::vector<float>& logits() const;
  void push(int token);
  int length() const;

 private:
  struct State;
  std::unique_ptr<State> s_;
};

}  // namespace polygen
