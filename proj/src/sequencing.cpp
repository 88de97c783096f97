#include "polygen/sequencing.hpp"

#include <algorithm>
#include <sstream>

namespace polygen {

const char* to_string(SequenceErrorCode code) {
  switch (code) {
    case SequenceErrorCode::kEmpty: return "empty sequence";
    case SequenceErrorCode::kMissingStop: return "missing stop token";
    case SequenceErrorCode::kTokenAfterStop: return "token after stop";
    case SequenceErrorCode::kTokenOutOfRange: return "token out of range";
    case SequenceErrorCode::kStopMidVertex: return "stop mid-vertex";
    case SequenceErrorCode::kZDecreased: return "z decreased";
    case SequenceErrorCode::kYDecreased: return "y decreased";
    case SequenceErrorCode::kXNotIncreasing: return "x not increasing";
    case SequenceErrorCode::kUnknownIndex: return "unknown vertex index";
    case SequenceErrorCode::kDuplicateIndex: return "duplicate index within face";
    case SequenceErrorCode::kFaceTooShort: return "face shorter than 3";
    case SequenceErrorCode::kRepeatedNewFace: return "repeated new-face token";
    case SequenceErrorCode::kTrailingNewFace: return "new-face token before stop";
    case SequenceErrorCode::kFirstNotMinimum: return "face does not start at its minimum";
    case SequenceErrorCode::kFaceOrder: return "face order violation";
    case SequenceErrorCode::kUnreferencedVertex: return "unreferenced vertex";
    case SequenceErrorCode::kMaskViolation: return "token masked";
  }
  return "unknown";
}

Tokens encode_vertices(const QuantizedMesh& qmesh) {
  Tokens tokens;
  tokens.reserve(qmesh.vertices.size() * 3 + 1);
  for (const QVertex& v : qmesh.vertices) {
    tokens.push_back(v.z + kCoordinateOffset);
    tokens.push_back(v.y + kCoordinateOffset);
    tokens.push_back(v.x + kCoordinateOffset);
  }
  tokens.push_back(kStopToken);
  return tokens;
}

std::vector<QVertex> decode_vertices(std::span<const int> tokens, int bits) {
  using E = SequenceErrorCode;
  const int grid = 1 << bits;
  std::vector<QVertex> out;
  int coords[3] = {0, 0, 0};
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    const int t = tokens[p];
    if (t < 0 || t > grid) {
      throw SequenceError(E::kTokenOutOfRange, "token " + std::to_string(t) + " at " +
                                                   std::to_string(p));
    }
    if (t == kStopToken) {
      if (p % 3 != 0) throw SequenceError(E::kStopMidVertex, "position " + std::to_string(p));
      if (p + 1 != tokens.size()) {
        throw SequenceError(E::kTokenAfterStop, "position " + std::to_string(p));
      }
      if (p == 0) throw SequenceError(E::kEmpty, "no vertices before stop");
      return out;
    }
    const int value = t - kCoordinateOffset;
    const int slot = static_cast<int>(p % 3);
    coords[slot] = value;
    if (!out.empty()) {
      const QVertex& prev = out.back();
      if (slot == 0 && value < prev.z) {
        throw SequenceError(E::kZDecreased, "vertex " + std::to_string(out.size()));
      }
      if (slot == 1 && coords[0] == prev.z && value < prev.y) {
        throw SequenceError(E::kYDecreased, "vertex " + std::to_string(out.size()));
      }
      if (slot == 2 && coords[0] == prev.z && coords[1] == prev.y && value <= prev.x) {
        throw SequenceError(E::kXNotIncreasing, "vertex " + std::to_string(out.size()));
      }
    }
    if (slot == 2) out.push_back({coords[0], coords[1], coords[2]});
  }
  if (tokens.empty()) throw SequenceError(E::kEmpty, "no tokens");
  throw SequenceError(E::kMissingStop, "sequence ends without stop");
}

Tokens encode_faces(const QuantizedMesh& qmesh) {
  Tokens tokens;
  for (std::size_t f = 0; f < qmesh.faces.size(); ++f) {
    if (f > 0) tokens.push_back(kNewFaceToken);
    for (int idx : qmesh.faces[f]) tokens.push_back(idx + kVertexIndexOffset);
  }
  tokens.push_back(kStopToken);
  return tokens;
}

std::vector<Face> decode_faces(std::span<const int> tokens, int n_vertices) {
  using E = SequenceErrorCode;
  std::vector<Face> faces;
  Face current;
  std::vector<std::uint8_t> referenced(static_cast<std::size_t>(std::max(n_vertices, 0)), 0);
  int previous_first = 0;
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    const int t = tokens[p];
    const std::string where = "position " + std::to_string(p);
    if (t < 0 || t >= n_vertices + kVertexIndexOffset) {
      throw SequenceError(E::kUnknownIndex, "token " + std::to_string(t) + " at " + where);
    }
    if (t == kStopToken) {
      if (p + 1 != tokens.size()) throw SequenceError(E::kTokenAfterStop, where);
      if (current.empty()) {
        if (faces.empty()) throw SequenceError(E::kEmpty, "no faces before stop");
        throw SequenceError(E::kTrailingNewFace, where);
      }
      if (current.size() < 3) throw SequenceError(E::kFaceTooShort, where);
      faces.push_back(std::move(current));
      for (int v = 0; v < n_vertices; ++v) {
        if (!referenced[v]) {
          throw SequenceError(E::kUnreferencedVertex, "vertex " + std::to_string(v) +
                                                          " unreferenced");
        }
      }
      return faces;
    }
    if (t == kNewFaceToken) {
      if (current.empty()) throw SequenceError(E::kRepeatedNewFace, where);
      if (current.size() < 3) throw SequenceError(E::kFaceTooShort, where);
      previous_first = current.front();
      faces.push_back(std::move(current));
      current.clear();
      continue;
    }
    const int idx = t - kVertexIndexOffset;
    if (current.empty()) {
      if (idx < previous_first) throw SequenceError(E::kFaceOrder, where);
    } else {
      if (std::find(current.begin(), current.end(), idx) != current.end()) {
        throw SequenceError(E::kDuplicateIndex, where);
      }
      if (idx < current.front()) throw SequenceError(E::kFirstNotMinimum, where);
    }
    referenced[idx] = 1;
    current.push_back(idx);
  }
  if (tokens.empty()) throw SequenceError(E::kEmpty, "no tokens");
  throw SequenceError(E::kMissingStop, "sequence ends without stop");
}

bool faces_in_canonical_order(const std::vector<Face>& faces) {
  return std::is_sorted(faces.begin(), faces.end());
}

// ---------------------------------------------------------------------------

VertexMaskState::VertexMaskState(int bits, MaskRules rules)
    : bits_(bits), rules_(rules), grid_(1LL << bits) {
  if (bits < 1 || bits > 16) throw std::invalid_argument("bits must be in [1, 16]");
}

bool VertexMaskState::allows(int token) const {
  if (finished_) return false;
  const int slot = static_cast<int>(length_ % 3);
  if (token == kStopToken) {
    const int min_vertices = rules_ == MaskRules::kLookahead ? 3 : 1;
    return slot == 0 && vertices_done_ >= min_vertices;
  }
  if (token < kCoordinateOffset || token > grid_) return false;
  const int v = token - kCoordinateOffset;

  if (rules_ == MaskRules::kBasic) {
    if (vertices_done_ == 0) return true;
    switch (slot) {
      case 0: return v >= previous_[0];
      case 1: return current_[0] != previous_[0] || v >= previous_[1];
      default:
        return current_[0] != previous_[0] || current_[1] != previous_[1] || v > previous_[2];
    }
  }

  // Lexicographic rank of the vertex being built must land strictly above the
  // previous vertex and leave room for the vertices still needed to reach 3.
  const long long g = grid_;
  long long lo = 0;
  long long hi = 0;
  switch (slot) {
    case 0:
      lo = v * g * g;
      hi = lo + g * g - 1;
      break;
    case 1:
      lo = current_[0] * g * g + v * g;
      hi = lo + g - 1;
      break;
    default:
      lo = hi = current_[0] * g * g + current_[1] * g + v;
      break;
  }
  const long long floor =
      vertices_done_ > 0 ? previous_[0] * g * g + previous_[1] * g + previous_[2] + 1 : 0;
  const long long still_needed = std::max(0, 3 - (vertices_done_ + 1));
  const long long ceiling = g * g * g - 1 - still_needed;
  return std::max(lo, floor) <= std::min(hi, ceiling);
}

void VertexMaskState::fill(std::span<std::uint8_t> allowed) const {
  for (std::size_t t = 0; t < allowed.size(); ++t) allowed[t] = allows(static_cast<int>(t));
}

MaskVector VertexMaskState::mask() const {
  MaskVector m(static_cast<std::size_t>(vocab_size()));
  fill(m);
  return m;
}

void VertexMaskState::push(int token) {
  if (!allows(token)) {
    throw SequenceError(SequenceErrorCode::kMaskViolation,
                        "vertex token " + std::to_string(token) + " at " + std::to_string(length_));
  }
  if (token == kStopToken) {
    finished_ = true;
    ++length_;
    return;
  }
  const int slot = static_cast<int>(length_ % 3);
  current_[slot] = token - kCoordinateOffset;
  ++length_;
  if (slot == 2) {
    std::copy(current_, current_ + 3, previous_);
    ++vertices_done_;
  }
}

FaceMaskState::FaceMaskState(int n_vertices, MaskRules rules)
    : n_vertices_(n_vertices),
      rules_(rules),
      used_in_face_(static_cast<std::size_t>(std::max(n_vertices, 0)), 0),
      referenced_(static_cast<std::size_t>(std::max(n_vertices, 0)), 0),
      unreferenced_count_(n_vertices) {
  if (n_vertices < 0) throw std::invalid_argument("n_vertices must be non-negative");
}

bool FaceMaskState::allows(int token) const {
  if (finished_ || token < 0 || token >= n_vertices_ + kVertexIndexOffset) return false;
  const std::size_t size = current_face_.size();
  if (token == kStopToken) return size >= 3 && unreferenced_count_ == 0;
  if (token == kNewFaceToken) return size >= 3;
  const int idx = token - kVertexIndexOffset;
  if (size == 0) {
    int upper = min_unreferenced_;
    if (rules_ == MaskRules::kLookahead) upper = std::min(upper, n_vertices_ - 3);
    return idx >= previous_first_ && idx <= upper;
  }
  return idx > current_face_.front() && !used_in_face_[idx];
}

void FaceMaskState::fill(std::span<std::uint8_t> allowed) const {
  for (std::size_t t = 0; t < allowed.size(); ++t) allowed[t] = allows(static_cast<int>(t));
}

MaskVector FaceMaskState::mask() const {
  MaskVector m(static_cast<std::size_t>(vocab_size()));
  fill(m);
  return m;
}

void FaceMaskState::push(int token) {
  if (!allows(token)) {
    throw SequenceError(SequenceErrorCode::kMaskViolation,
                        "face token " + std::to_string(token) + " at " + std::to_string(length_));
  }
  ++length_;
  if (token == kStopToken) {
    finished_ = true;
    return;
  }
  if (token == kNewFaceToken) {
    previous_first_ = current_face_.front();
    for (int idx : current_face_) used_in_face_[idx] = 0;
    current_face_.clear();
    return;
  }
  const int idx = token - kVertexIndexOffset;
  current_face_.push_back(idx);
  used_in_face_[idx] = 1;
  if (!referenced_[idx]) {
    referenced_[idx] = 1;
    --unreferenced_count_;
    while (min_unreferenced_ < n_vertices_ && referenced_[min_unreferenced_]) ++min_unreferenced_;
  }
}

MaskVector vertex_mask(std::span<const int> prefix, int bits, MaskRules rules) {
  VertexMaskState state(bits, rules);
  for (int t : prefix) state.push(t);
  return state.mask();
}

MaskVector face_mask(std::span<const int> prefix, int n_vertices, MaskRules rules) {
  FaceMaskState state(n_vertices, rules);
  for (int t : prefix) state.push(t);
  return state.mask();
}

namespace {

template <typename State>
std::vector<MaskVector> masks_along(State state, std::span<const int> tokens) {
  std::vector<MaskVector> out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    out.push_back(state.mask());
    state.push(t);
  }
  return out;
}

}  // namespace

std::vector<MaskVector> vertex_masks(std::span<const int> tokens, int bits, MaskRules rules) {
  return masks_along(VertexMaskState(bits, rules), tokens);
}

std::vector<MaskVector> face_masks(std::span<const int> tokens, int n_vertices, MaskRules rules) {
  return masks_along(FaceMaskState(n_vertices, rules), tokens);
}

std::string tokens_to_json(std::span<const int> tokens) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out << ',';
    out << tokens[i];
  }
  out << ']';
  return out.str();
}

}  // namespace polygen
