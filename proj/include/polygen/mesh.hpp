#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace polygen {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

double dot(Vec3 a, Vec3 b);
Vec3 cross(Vec3 a, Vec3 b);
double norm(Vec3 a);

using Face = std::vector<int>;

/// Continuous-coordinate n-gon mesh. Faces hold 0-based vertex indices.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::optional<int> class_id;
};

/// Quantized vertex, stored (z, y, x) so the defaulted comparison is the
/// canonical vertex order.
struct QVertex {
  int z = 0;
  int y = 0;
  int x = 0;

  friend auto operator<=>(const QVertex&, const QVertex&) = default;
};

struct QuantizedMesh {
  std::vector<QVertex> vertices;
  std::vector<Face> faces;
  std::optional<int> class_id;
};

/// Counts of what quantize() discarded.
struct QuantizeReport {
  std::size_t merged_vertices = 0;
  std::size_t dropped_faces = 0;
  std::size_t dropped_unreferenced = 0;
};

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDefaultBits = 8;

/// Throws MeshError if a face is shorter than 3, repeats an index, or points
/// past the vertex list.
void validate(const Mesh& mesh);

/// Returns a description of the first violated QuantizedMesh invariant, or
/// nullopt when the mesh is canonical and valid.
std::optional<std::string> find_violation(const QuantizedMesh& qmesh, int bits);

/// Centers the bounding box at the origin and scales its diagonal to 1.
Mesh normalize(const Mesh& mesh);

/// Bin index of a coordinate on the [-0.5, 0.5] grid.
int quantize_coordinate(double c, int bits);
/// Bin center of a quantized coordinate.
double dequantize_coordinate(int bin, int bits);

/// Quantizes, merges co-binned vertices (first occurrence wins), drops
/// collapsed faces and unreferenced vertices, then canonicalizes.
QuantizedMesh quantize(const Mesh& mesh, int bits, QuantizeReport* report = nullptr);

/// Sorts vertices by (z, y, x), rotates every face to start at its minimum
/// index and sorts faces lexicographically. Throws on duplicate vertices.
QuantizedMesh canonical_order(const QuantizedMesh& qmesh);

Mesh dequantize(const QuantizedMesh& qmesh, int bits);

}  // namespace polygen
