#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "polygen/augment.hpp"
#include "polygen/mesh.hpp"
#include "polygen/primitives.hpp"

namespace polygen {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CorpusSpec {
  std::vector<ClassSpec> classes;
  int examples_per_class = 40;
  double train_fraction = 0.925;
  double val_fraction = 0.025;
  double test_fraction = 0.05;
  int bits = kDefaultBits;
  int max_vertices = 800;
  int max_face_tokens = 2800;
  std::uint64_t seed = 0;

  /// The six default families: box, pyramid, prism, l_extrusion, table, stool.
  static std::vector<ClassSpec> default_classes();
  /// Throws std::invalid_argument (bad fractions, no classes, ...).
  void validate() const;
};

nlohmann::ordered_json to_json(const ClassSpec& spec);
ClassSpec class_spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const CorpusSpec& spec);
nlohmann::ordered_json to_json(const AugmentConfig& cfg);
/// Missing keys keep their defaults (the six default classes when "classes"
/// is absent); unknown keys throw std::invalid_argument.
CorpusSpec corpus_spec_from_json(const nlohmann::json& j);
AugmentConfig augment_config_from_json(const nlohmann::json& j);

/// Deterministic per-class split: examples are ranked by a hash of
/// (seed, class, index) and cut at the rounded fraction counts.
struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
};
SplitCounts split_counts(int n, double val_fraction, double test_fraction);

/// One preprocessed example before it is written: normalize, (train only:
/// axis_scale + piecewise_warp), planar_decimate with a sampled tolerance,
/// normalize, quantize.
QuantizedMesh preprocess_example(const Mesh& base, bool augment, Rng& rng,
                                 const AugmentConfig& aug, int bits);

/// Writes {split}/{class}/{id}.obj + {id}.json and manifest.json under `root`
/// and returns the manifest. Existing split directories are replaced.
nlohmann::ordered_json make_corpus(const CorpusSpec& spec, const AugmentConfig& aug,
                                   const std::filesystem::path& root);

struct Example {
  std::string id;
  std::string class_name;
  int class_id = 0;
  QuantizedMesh mesh;
};

/// Loads one split, sorted by class then id. OBJ coordinates are bin centres,
/// so re-quantizing recovers the stored mesh exactly.
std::vector<Example> load_split(const std::filesystem::path& root, std::string_view split,
                                int bits);
nlohmann::json load_manifest(const std::filesystem::path& root);

/// FNV-1a over the compact dump, as 16 hex digits.
std::string config_hash(const nlohmann::ordered_json& config);

}  // namespace polygen
