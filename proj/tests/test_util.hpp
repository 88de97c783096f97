#pragma once

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "polygen/mesh.hpp"

namespace polygen::testing {

// Random triangle/quad soup over random points in [-0.5, 0.5]^3.
inline Mesh random_mesh(std::mt19937_64& rng, int max_vertices = 40) {
  std::uniform_int_distribution<int> count(3, max_vertices);
  std::uniform_real_distribution<double> coord(-0.5, 0.5);
  Mesh mesh;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) mesh.vertices.push_back({coord(rng), coord(rng), coord(rng)});
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::uniform_int_distribution<int> arity(3, std::min(6, n));
  const int faces = std::uniform_int_distribution<int>(1, 2 * n)(rng);
  for (int f = 0; f < faces; ++f) {
    const int k = arity(rng);
    std::set<int> seen;
    Face face;
    while (static_cast<int>(face.size()) < k) {
      const int v = pick(rng);
      if (seen.insert(v).second) face.push_back(v);
    }
    mesh.faces.push_back(face);
  }
  return mesh;
}

// Random valid canonical quantized mesh: distinct sorted vertices, faces that
// reference every vertex.
inline QuantizedMesh random_canonical(std::mt19937_64& rng, int bits = 8, int max_vertices = 30) {
  const int grid = 1 << bits;
  std::uniform_int_distribution<int> coord(0, grid - 1);
  const int n = std::uniform_int_distribution<int>(3, max_vertices)(rng);
  std::set<QVertex> vs;
  while (static_cast<int>(vs.size()) < n) vs.insert({coord(rng), coord(rng), coord(rng)});
  QuantizedMesh q;
  q.vertices.assign(vs.begin(), vs.end());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<char> covered(n, 0);
  auto add_face = [&](int must) {
    const int k = std::uniform_int_distribution<int>(3, std::min(n, 6))(rng);
    std::vector<int> face{must};
    while (static_cast<int>(face.size()) < k) {
      const int v = pick(rng);
      if (std::find(face.begin(), face.end(), v) == face.end()) face.push_back(v);
    }
    std::shuffle(face.begin() + 1, face.end(), rng);
    for (int v : face) covered[v] = 1;
    q.faces.push_back(face);
  };
  for (int v = 0; v < n; ++v) {
    if (!covered[v]) add_face(v);
  }
  const int extra = std::uniform_int_distribution<int>(0, n)(rng);
  for (int i = 0; i < extra; ++i) add_face(pick(rng));
  return canonical_order(q);
}

}  // namespace polygen::testing
