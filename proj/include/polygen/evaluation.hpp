#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "polygen/mesh.hpp"
#include "polygen/models.hpp"
#include "polygen/params.hpp"
#include "polygen/rng.hpp"
#include "polygen/sampling.hpp"
#include "polygen/tensor.hpp"
#include "polygen/train.hpp"

namespace polygen {

/// Teacher-forced next-token logits for one example, one row per token of
/// the target sequence (vertex or face, depending on the predictor).
using Predictor = std::function<Tensor<float>(const SequenceExample&)>;

/// Graph forward pass with dropout off. Keeps a reference to `params`.
Predictor model_predictor(ModelKind kind, const ModelConfig& cfg, const ParamStore<float>& params);
/// All-equal logits: the uniform baseline, or the valid-uniform baseline
/// when scored with masks.
Predictor uniform_predictor(ModelKind kind, int bits);

/// Scores of one sequence. Accuracy credits a tie among k maximal logits
/// that includes the target with 1/k (the expectation under random
/// tie-breaking), so a uniform predictor scores exactly chance level.
struct SequenceScore {
  double bits = 0.0;         // NLL in bits, whole sequence
  double masked_bits = 0.0;  // renormalized over mask-allowed tokens
  double correct = 0.0;
  double masked_correct = 0.0;
  int positions = 0;
  int mask_violations = 0;   // targets the mask rejected
};

/// Without masks (the target sequence broke the mask rules) the masked
/// fields are +inf and one violation is recorded.
SequenceScore score_sequence(const Tensor<float>& logits, std::span<const int> targets,
                             const std::vector<MaskVector>* masks);

struct ExampleEval {
  std::string id;
  int class_id = 0;
  int num_vertices = 0;
  std::optional<SequenceScore> vertices;
  std::optional<SequenceScore> faces;
};

struct ModelEval {
  double bits_per_vertex = 0.0;  // mean over examples of bits / N_V
  double masked_bits_per_vertex = 0.0;
  double accuracy = 0.0;         // pooled over positions
  double masked_accuracy = 0.0;
  long long positions = 0;
  long long mask_violations = 0;
};

struct EvalReport {
  std::optional<ModelEval> vertices;
  std::optional<ModelEval> faces;
  std::optional<double> bits_total;         // vertices + faces
  std::optional<double> masked_bits_total;
  std::vector<ExampleEval> examples;
};

nlohmann::ordered_json to_json(const ModelEval& m);
nlohmann::ordered_json to_json(const EvalReport& r, bool per_example = true);

/// Either predictor may be empty. Examples run in parallel; the reduction is
/// in example order.
EvalReport evaluate(const Predictor& vertex, const Predictor& face,
                    const std::vector<SequenceExample>& data, int bits,
                    MaskRules rules = MaskRules::kLookahead);

/// Uniform predictor value (3N + 1) / N * log2(2^bits + 1).
double uniform_vertex_bits(int num_vertices, int bits);

// Point clouds.

/// n points uniformly on the surface: faces fan-triangulated from their
/// first vertex, triangles picked by area, uniform barycentric draw.
/// Throws MeshError for a mesh of zero area.
std::vector<Vec3> sample_surface_points(const Mesh& mesh, int n, Rng& rng);

/// sum_p min_q |p - q|^2 + sum_q min_p |p - q|^2. Throws on an empty set.
double chamfer(std::span<const Vec3> p, std::span<const Vec3> q);

namespace reference {
double chamfer(std::span<const Vec3> p, std::span<const Vec3> q);
}  // namespace reference

struct BestOfK {
  std::vector<double> values;          // per sample; +inf if the sample was invalid
  std::vector<double> running_minimum;
  double data_floor = 0.0;             // two independent resamplings of the target
  int invalid = 0;
};

/// k generated meshes (conditioned on the target's class when the models are)
/// scored against the target point cloud. Throws std::runtime_error if no
/// sample is valid.
BestOfK best_of_k_chamfer(const VertexModel& vertex_model, const ParamStore<float>& vertex_params,
                          const FaceModel& face_model, const ParamStore<float>& face_params,
                          const Mesh& target, std::optional<int> class_id, int k,
                          const SamplerConfig& cfg, int n_points = 2500);

nlohmann::ordered_json to_json(const BestOfK& b);

// Mesh statistics.

struct MeshStats {
  int num_vertices = 0;
  int num_faces = 0;
  std::vector<int> degrees;  // distinct incident edges per vertex
  double average_face_area = 0.0;
  double average_edge_length = 0.0;
};

MeshStats mesh_statistics(const Mesh& mesh);

struct Histogram {
  std::string statistic;
  std::vector<double> bins;  // lower bin edge (integer statistics: the value)
  std::vector<long long> model;
  std::vector<long long> data;
};

/// Aligned histograms of num_vertices, num_faces, node_degree,
/// average_face_area and average_edge_length for two groups of meshes.
std::vector<Histogram> stats_summary(std::span<const MeshStats> model,
                                     std::span<const MeshStats> data, int continuous_bins = 20);
/// Rows "statistic,bin,model_count,data_count".
std::string histograms_csv(const std::vector<Histogram>& hists);

/// Total variation distance between two count histograms over the same bins.
double total_variation(std::span<const long long> a, std::span<const long long> b);

}  // namespace polygen
