#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "polygen/corpus.hpp"
#include "polygen/models.hpp"
#include "polygen/params.hpp"
#include "polygen/sequencing.hpp"

namespace polygen {

enum class ModelKind { kVertex, kFace };

const char* model_kind_name(ModelKind kind);
/// Throws std::invalid_argument for anything but "vertex" / "face".
ModelKind parse_model_kind(const std::string& name);

/// A mesh with both token sequences precomputed.
struct SequenceExample {
  std::string id;
  int class_id = 0;
  QuantizedMesh mesh;
  Tokens vertex_tokens;
  Tokens face_tokens;
  int num_vertices() const { return static_cast<int>(mesh.vertices.size()); }
};

std::vector<SequenceExample> to_sequences(const std::vector<Example>& examples);

struct TrainConfig {
  int batch_size = 8;
  std::int64_t steps = 2000;
  LrSchedule schedule;
  double clip_norm = 1.0;
  AdamConfig adam;
  std::uint64_t seed = 0;
  bool apply_masks = false;

  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& cfg);
/// Unknown keys throw. Without "total_steps" the schedule ends at steps + 1,
/// so the last update still has a nonzero rate.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct StepStats {
  std::int64_t step = 0;
  double bits_per_vertex = 0.0;  // batch mean, before the update
  double grad_norm = 0.0;
  double lr = 0.0;
};

/// Fresh parameters for one model kind, drawn from `seed`.
ParamStore<float> init_model_params(ModelKind kind, const ModelConfig& cfg, std::uint64_t seed);

/// Teacher-forced NLL of one example in bits per vertex, with the gradient
/// of `weight` times that value added into `grads` when non-null.
double example_loss(ModelKind kind, const ModelConfig& cfg, const ParamStore<float>& params,
                    const SequenceExample& ex, const ForwardOptions& opt,
                    std::vector<Tensor<float>>* grads, double weight = 1.0);

/// Rough peak bytes of one training example's graph (values and gradients)
/// for a target sequence of `tokens` tokens over `num_vertices` vertices.
double activation_bytes_estimate(ModelKind kind, const ModelConfig& cfg, int tokens,
                                 int num_vertices);

class Trainer {
 public:
  Trainer(ModelKind kind, ModelConfig model, TrainConfig cfg, ParamStore<float> params);

  /// One optimizer update on the batch the current step selects. Batch
  /// choice and dropout draws depend only on (seed, step), so a resumed run
  /// repeats an uninterrupted one.
  StepStats step(const std::vector<SequenceExample>& data);
  /// Mean bits per vertex over `data`, dropout off.
  double evaluate(const std::vector<SequenceExample>& data) const;
  /// Example indices used by a given step.
  std::vector<int> batch_indices(std::int64_t step, int dataset_size) const;

  ModelKind kind() const { return kind_; }
  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& train_config() const { return cfg_; }
  ParamStore<float>& params() { return params_; }
  const ParamStore<float>& params() const { return params_; }

 private:
  ModelKind kind_;
  ModelConfig model_;
  TrainConfig cfg_;
  ParamStore<float> params_;
};

}  // namespace polygen
