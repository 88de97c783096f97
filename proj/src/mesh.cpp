#include "polygen/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace polygen {

double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

void validate(const Mesh& mesh) {
  const auto n = static_cast<long long>(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    if (face.size() < 3) {
      throw MeshError("face " + std::to_string(f) + " has fewer than 3 indices");
    }
    for (std::size_t i = 0; i < face.size(); ++i) {
      if (face[i] < 0 || face[i] >= n) {
        throw MeshError("face " + std::to_string(f) + " index " + std::to_string(face[i]) +
                        " out of range for " + std::to_string(n) + " vertices");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (face[j] == face[i]) {
          throw MeshError("face " + std::to_string(f) + " repeats index " +
                          std::to_string(face[i]));
        }
      }
    }
  }
}

std::optional<std::string> find_violation(const QuantizedMesh& qmesh, int bits) {
  const int hi = (1 << bits) - 1;
  const auto n = qmesh.vertices.size();
  if (n == 0) return "no vertices";
  if (qmesh.faces.empty()) return "no faces";
  for (std::size_t i = 0; i < n; ++i) {
    const QVertex& v = qmesh.vertices[i];
    if (v.z < 0 || v.z > hi || v.y < 0 || v.y > hi || v.x < 0 || v.x > hi) {
      return "vertex " + std::to_string(i) + " outside the quantization grid";
    }
    if (i > 0 && !(qmesh.vertices[i - 1] < v)) {
      return "vertices not strictly increasing at " + std::to_string(i);
    }
  }
  std::vector<char> referenced(n, 0);
  for (std::size_t f = 0; f < qmesh.faces.size(); ++f) {
    const Face& face = qmesh.faces[f];
    if (face.size() < 3) return "face " + std::to_string(f) + " shorter than 3";
    for (std::size_t i = 0; i < face.size(); ++i) {
      if (face[i] < 0 || static_cast<std::size_t>(face[i]) >= n) {
        return "face " + std::to_string(f) + " index out of range";
      }
      if (i > 0 && face[i] <= face[0]) {
        return "face " + std::to_string(f) + " does not start at its minimum index";
      }
      for (std::size_t j = 1; j < i; ++j) {
        if (face[j] == face[i]) return "face " + std::to_string(f) + " repeats an index";
      }
      referenced[face[i]] = 1;
    }
    if (f > 0 && qmesh.faces[f] < qmesh.faces[f - 1]) {
      return "faces not sorted at " + std::to_string(f);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!referenced[i]) return "vertex " + std::to_string(i) + " unreferenced";
  }
  return std::nullopt;
}

Mesh normalize(const Mesh& mesh) {
  if (mesh.vertices.empty()) throw MeshError("cannot normalize an empty mesh");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Vec3 lo{kInf, kInf, kInf};
  Vec3 hi{-kInf, -kInf, -kInf};
  for (const Vec3& v : mesh.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  const double diagonal = norm(hi - lo);
  if (!(diagonal > 1e-12) || !std::isfinite(diagonal)) {
    throw MeshError("degenerate mesh: bounding box diagonal is zero");
  }
  const Vec3 center = (lo + hi) * 0.5;
  Mesh out = mesh;
  for (Vec3& v : out.vertices) v = (v - center) * (1.0 / diagonal);
  return out;
}

int quantize_coordinate(double c, int bits) {
  const double scaled = std::floor((c + 0.5) * static_cast<double>(1 << bits));
  const double hi = static_cast<double>((1 << bits) - 1);
  return static_cast<int>(std::clamp(scaled, 0.0, hi));
}

double dequantize_coordinate(int bin, int bits) {
  return (static_cast<double>(bin) + 0.5) / static_cast<double>(1 << bits) - 0.5;
}

namespace {

// Removes cyclically consecutive repeats, e.g. (a, a, b, c, a) -> (a, b, c).
Face drop_consecutive_repeats(const Face& face) {
  Face out;
  out.reserve(face.size());
  for (int idx : face) {
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  while (out.size() > 1 && out.front() == out.back()) out.pop_back();
  return out;
}

bool has_repeats(const Face& face) {
  Face sorted = face;
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
}

}  // namespace

QuantizedMesh quantize(const Mesh& mesh, int bits, QuantizeReport* report) {
  if (bits < 1 || bits > 16) throw MeshError("quantization bits must be in [1, 16]");
  validate(mesh);
  QuantizeReport local;

  std::map<QVertex, int> slot_of;
  std::vector<QVertex> merged;
  std::vector<int> remap(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    const QVertex q{quantize_coordinate(v.z, bits), quantize_coordinate(v.y, bits),
                    quantize_coordinate(v.x, bits)};
    auto [it, inserted] = slot_of.try_emplace(q, static_cast<int>(merged.size()));
    if (inserted) {
      merged.push_back(q);
    } else {
      ++local.merged_vertices;
    }
    remap[i] = it->second;
  }

  std::vector<Face> faces;
  faces.reserve(mesh.faces.size());
  for (const Face& face : mesh.faces) {
    Face mapped;
    mapped.reserve(face.size());
    for (int idx : face) mapped.push_back(remap[idx]);
    mapped = drop_consecutive_repeats(mapped);
    if (mapped.size() < 3 || has_repeats(mapped)) {
      ++local.dropped_faces;
      continue;
    }
    faces.push_back(std::move(mapped));
  }
  if (faces.empty()) throw MeshError("degenerate after quantization");

  std::vector<char> referenced(merged.size(), 0);
  for (const Face& face : faces) {
    for (int idx : face) referenced[idx] = 1;
  }
  std::vector<int> compact(merged.size(), -1);
  QuantizedMesh out;
  out.class_id = mesh.class_id;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    if (!referenced[i]) {
      ++local.dropped_unreferenced;
      continue;
    }
    compact[i] = static_cast<int>(out.vertices.size());
    out.vertices.push_back(merged[i]);
  }
  for (Face& face : faces) {
    for (int& idx : face) idx = compact[idx];
  }
  out.faces = std::move(faces);
  if (report != nullptr) *report = local;
  return canonical_order(out);
}

QuantizedMesh canonical_order(const QuantizedMesh& qmesh) {
  const std::size_t n = qmesh.vertices.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return qmesh.vertices[a] < qmesh.vertices[b];
  });
  QuantizedMesh out;
  out.class_id = qmesh.class_id;
  out.vertices.reserve(n);
  std::vector<int> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && qmesh.vertices[order[i]] == qmesh.vertices[order[i - 1]]) {
      throw MeshError("canonical_order: duplicate vertices must be merged first");
    }
    rank[order[i]] = static_cast<int>(i);
    out.vertices.push_back(qmesh.vertices[order[i]]);
  }
  out.faces.reserve(qmesh.faces.size());
  for (const Face& face : qmesh.faces) {
    Face mapped;
    mapped.reserve(face.size());
    for (int idx : face) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= n) {
        throw MeshError("canonical_order: face index out of range");
      }
      mapped.push_back(rank[idx]);
    }
    if (!mapped.empty()) {
      std::rotate(mapped.begin(), std::min_element(mapped.begin(), mapped.end()), mapped.end());
    }
    out.faces.push_back(std::move(mapped));
  }
  std::sort(out.faces.begin(), out.faces.end());
  return out;
}

Mesh dequantize(const QuantizedMesh& qmesh, int bits) {
  Mesh out;
  out.class_id = qmesh.class_id;
  out.vertices.reserve(qmesh.vertices.size());
  for (const QVertex& v : qmesh.vertices) {
    out.vertices.push_back({dequantize_coordinate(v.x, bits), dequantize_coordinate(v.y, bits),
                            dequantize_coordinate(v.z, bits)});
  }
  out.faces = qmesh.faces;
  return out;
}

}  // namespace polygen
