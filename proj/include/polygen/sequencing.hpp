#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "polygen/mesh.hpp"

namespace polygen {

// Vertex alphabet: 0 = stop, t in [1, 2^bits] is coordinate value t - 1.
// Face alphabet: 0 = stop, 1 = new face, t >= 2 is vertex index t - 2.
inline constexpr int kStopToken = 0;
inline constexpr int kNewFaceToken = 1;
inline constexpr int kCoordinateOffset = 1;
inline constexpr int kVertexIndexOffset = 2;

enum class SequenceErrorCode {
  kEmpty,
  kMissingStop,
  kTokenAfterStop,
  kTokenOutOfRange,
  kStopMidVertex,
  kZDecreased,
  kYDecreased,
  kXNotIncreasing,
  kUnknownIndex,
  kDuplicateIndex,
  kFaceTooShort,
  kRepeatedNewFace,
  kTrailingNewFace,
  kFirstNotMinimum,
  kFaceOrder,
  kUnreferencedVertex,
  kMaskViolation,
};

const char* to_string(SequenceErrorCode code);

class SequenceError : public std::runtime_error {
 public:
  SequenceError(SequenceErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  SequenceErrorCode code() const { return code_; }

 private:
  SequenceErrorCode code_;
};

using Tokens = std::vector<int>;

Tokens encode_vertices(const QuantizedMesh& qmesh);
std::vector<QVertex> decode_vertices(std::span<const int> tokens, int bits);

Tokens encode_faces(const QuantizedMesh& qmesh);
/// Validates the face grammar the masks enforce: faces of >= 3 distinct
/// indices starting at their minimum, first indices non-decreasing, single
/// separators, one trailing stop, every vertex referenced.
std::vector<Face> decode_faces(std::span<const int> tokens, int n_vertices);

/// Full lexicographic face order, which canonical meshes also satisfy.
bool faces_in_canonical_order(const std::vector<Face>& faces);

/// kBasic applies the per-token ordering and uniqueness rules only. kLookahead
/// additionally prunes tokens after which no valid completion exists (a
/// vertex with no lexicographic successor room, stopping before 3 vertices,
/// a face starting above n_vertices - 3).
enum class MaskRules { kBasic, kLookahead };

using MaskVector = std::vector<std::uint8_t>;

/// Incremental vertex-sequence mask. O(1) state update per token.
class VertexMaskState {
 public:
  VertexMaskState(int bits, MaskRules rules = MaskRules::kLookahead);

  int vocab_size() const { return grid_ + 1; }
  std::size_t length() const { return length_; }
  bool finished() const { return finished_; }

  bool allows(int token) const;
  void fill(std::span<std::uint8_t> allowed) const;
  MaskVector mask() const;
  /// Throws SequenceError(kMaskViolation) if the token is not allowed.
  void push(int token);

 private:
  int bits_;
  MaskRules rules_;
  long long grid_;
  std::size_t length_ = 0;
  bool finished_ = false;
  int vertices_done_ = 0;
  int current_[3] = {0, 0, 0};
  int previous_[3] = {0, 0, 0};
};

/// Incremental face-sequence mask over n_vertices + 2 tokens.
class FaceMaskState {
 public:
  FaceMaskState(int n_vertices, MaskRules rules = MaskRules::kLookahead);

  int vocab_size() const { return n_vertices_ + 2; }
  std::size_t length() const { return length_; }
  bool finished() const { return finished_; }

  bool allows(int token) const;
  void fill(std::span<std::uint8_t> allowed) const;
  MaskVector mask() const;
  void push(int token);

 private:
  int n_vertices_;
  MaskRules rules_;
  std::size_t length_ = 0;
  bool finished_ = false;
  std::vector<int> current_face_;
  std::vector<std::uint8_t> used_in_face_;
  std::vector<std::uint8_t> referenced_;
  int unreferenced_count_;
  int min_unreferenced_ = 0;
  int previous_first_ = 0;
};

MaskVector vertex_mask(std::span<const int> prefix, int bits,
                       MaskRules rules = MaskRules::kLookahead);
MaskVector face_mask(std::span<const int> prefix, int n_vertices,
                     MaskRules rules = MaskRules::kLookahead);

/// The mask in force before each token of a full sequence. Throws
/// SequenceError(kMaskViolation) if a token is itself masked.
std::vector<MaskVector> vertex_masks(std::span<const int> tokens, int bits,
                                     MaskRules rules = MaskRules::kLookahead);
std::vector<MaskVector> face_masks(std::span<const int> tokens, int n_vertices,
                                   MaskRules rules = MaskRules::kLookahead);

std::string tokens_to_json(std::span<const int> tokens);

}  // namespace polygen
