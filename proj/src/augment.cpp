#include "polygen/augment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>
#include <tuple>

namespace polygen {

void AugmentConfig::validate() const {
  if (!(scale_lo > 0.0) || scale_lo > scale_hi) {
    throw std::invalid_argument("augment: need 0 < scale_lo <= scale_hi");
  }
  if (warp_segments < 1) throw std::invalid_argument("augment: warp_segments must be >= 1");
  if (!(warp_log_variance >= 0.0)) throw std::invalid_argument("augment: negative warp variance");
  if (!(decimate_tol_lo > 0.0 && decimate_tol_hi < 90.0 && decimate_tol_lo <= decimate_tol_hi)) {
    throw std::invalid_argument("augment: decimation tolerances must lie in (0, 90)");
  }
  if (copies_per_mesh < 1) throw std::invalid_argument("augment: copies_per_mesh must be >= 1");
}

Mesh axis_scale(const Mesh& mesh, Rng& rng, const AugmentConfig& cfg,
                std::array<double, 3>* draws) {
  std::uniform_real_distribution<double> u(cfg.scale_lo, cfg.scale_hi);
  const double sx = cfg.scale_lo == cfg.scale_hi ? cfg.scale_lo : u(rng);
  const double sy = cfg.scale_lo == cfg.scale_hi ? cfg.scale_lo : u(rng);
  const double sz = cfg.scale_lo == cfg.scale_hi ? cfg.scale_lo : u(rng);
  if (draws != nullptr) *draws = {sx, sy, sz};
  Mesh out = mesh;
  for (Vec3& v : out.vertices) v = {v.x * sx, v.y * sy, v.z * sz};
  return normalize(out);
}

PiecewiseWarp PiecewiseWarp::from_gradients(const std::vector<double>& gradients) {
  if (gradients.empty()) throw std::invalid_argument("warp needs at least one segment");
  const double n = static_cast<double>(gradients.size());
  double total = 0.0;
  for (double g : gradients) {
    if (!(g > 0.0)) throw std::invalid_argument("warp gradients must be positive");
    total += g / n;
  }
  PiecewiseWarp w;
  w.knots_.push_back(0.0);
  w.values_.push_back(0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    acc += gradients[i] / n;
    w.knots_.push_back(static_cast<double>(i + 1) / n);
    w.values_.push_back(acc / total);
  }
  w.values_.back() = 1.0;
  return w;
}

PiecewiseWarp PiecewiseWarp::symmetric_from_gradients(const std::vector<double>& half_gradients) {
  const PiecewiseWarp half = from_gradients(half_gradients);
  PiecewiseWarp w;
  for (std::size_t i = 0; i < half.knots_.size(); ++i) {
    w.knots_.push_back(0.5 * half.knots_[i]);
    w.values_.push_back(0.5 * half.values_[i]);
  }
  for (std::size_t i = half.knots_.size() - 1; i-- > 0;) {
    w.knots_.push_back(1.0 - 0.5 * half.knots_[i]);
    w.values_.push_back(1.0 - 0.5 * half.values_[i]);
  }
  return w;
}

double PiecewiseWarp::operator()(double t) const {
  if (t <= knots_.front()) return values_.front() + (t - knots_.front());
  if (t >= knots_.back()) return values_.back() + (t - knots_.back());
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - knots_.begin());
  const double a = knots_[i - 1];
  const double b = knots_[i];
  const double f = (t - a) / (b - a);
  return values_[i - 1] + f * (values_[i] - values_[i - 1]);
}

Mesh apply_warps(const Mesh& mesh, const std::array<PiecewiseWarp, 3>& xyz) {
  Mesh out = mesh;
  for (Vec3& v : out.vertices) {
    v = {xyz[0](v.x + 0.5) - 0.5, xyz[1](v.y + 0.5) - 0.5, xyz[2](v.z + 0.5) - 0.5};
  }
  return normalize(out);
}

Mesh piecewise_warp(const Mesh& mesh, Rng& rng, const AugmentConfig& cfg) {
  std::lognormal_distribution<double> gradient(0.0, std::sqrt(cfg.warp_log_variance));
  const int half_segments = (cfg.warp_segments + 1) / 2;
  auto draw = [&](int count) {
    std::vector<double> g(static_cast<std::size_t>(count));
    for (double& x : g) x = gradient(rng);
    return g;
  };
  const PiecewiseWarp wx = PiecewiseWarp::symmetric_from_gradients(draw(half_segments));
  const PiecewiseWarp wy = PiecewiseWarp::symmetric_from_gradients(draw(half_segments));
  const PiecewiseWarp wz = PiecewiseWarp::from_gradients(draw(cfg.warp_segments));
  return apply_warps(mesh, {wx, wy, wz});
}

Vec3 polygon_normal(const Mesh& mesh, const Face& face) {
  Vec3 n;
  for (std::size_t i = 0; i < face.size(); ++i) {
    const Vec3& a = mesh.vertices[face[i]];
    const Vec3& b = mesh.vertices[face[(i + 1) % face.size()]];
    n = n + Vec3{(a.y - b.y) * (a.z + b.z), (a.z - b.z) * (a.x + b.x), (a.x - b.x) * (a.y + b.y)};
  }
  return n;
}

namespace {

using EdgeKey = std::pair<int, int>;

EdgeKey edge_key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

// Rotates `face` so that it ends with the directed edge a -> (front), i.e. the
// closing edge of the returned cycle is a -> b.
Face rotate_to_close(const Face& face, int a, int b) {
  const auto pos = std::find(face.begin(), face.end(), b);
  Face out(pos, face.end());
  out.insert(out.end(), face.begin(), pos);
  if (out.back() != a) return {};
  return out;
}

// Collapses x, y, x spikes left behind when two faces share consecutive edges.
Face remove_spikes(Face f) {
  bool changed = true;
  while (changed && f.size() >= 3) {
    changed = false;
    const std::size_t n = f.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (f[i] == f[(i + 2) % n]) {
        const std::size_t mid = (i + 1) % n;
        const std::size_t far = (i + 2) % n;
        std::vector<std::size_t> drop{mid, far};
        std::sort(drop.begin(), drop.end(), std::greater<>());
        for (std::size_t d : drop) f.erase(f.begin() + static_cast<std::ptrdiff_t>(d));
        changed = true;
        break;
      }
    }
  }
  return f;
}

bool is_simple(const Face& f) {
  if (f.size() < 3) return false;
  Face s = f;
  std::sort(s.begin(), s.end());
  return std::adjacent_find(s.begin(), s.end()) == s.end();
}

double angle_degrees(Vec3 a, Vec3 b) {
  const double c = std::clamp(dot(a, b) / (norm(a) * norm(b)), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace

Mesh planar_decimate(const Mesh& mesh, double tol_degrees, DecimateReport* report) {
  validate(mesh);
  DecimateReport local;
  std::vector<Face> faces = mesh.faces;
  std::vector<char> alive(faces.size(), 1);
  std::set<EdgeKey> warned;

  for (;;) {
    // Directed edge occurrences per undirected edge.
    std::map<EdgeKey, std::vector<std::tuple<int, int, int>>> edges;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (!alive[f]) continue;
      const Face& face = faces[f];
      for (std::size_t i = 0; i < face.size(); ++i) {
        const int a = face[i];
        const int b = face[(i + 1) % face.size()];
        edges[edge_key(a, b)].emplace_back(static_cast<int>(f), a, b);
      }
    }
    std::vector<Vec3> normals(faces.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (alive[f]) normals[f] = polygon_normal(mesh, faces[f]);
    }

    struct Candidate {
      double angle;
      EdgeKey key;
      int f, g, a, b;
    };
    std::vector<Candidate> candidates;
    for (const auto& [key, uses] : edges) {
      if (uses.size() > 2) {
        if (warned.insert(key).second) {
          local.warnings.push_back("non-manifold edge (" + std::to_string(key.first) + ", " +
                                   std::to_string(key.second) + ") skipped");
        }
        continue;
      }
      if (uses.size() != 2) continue;
      const auto [f, a, b] = uses[0];
      const auto [g, c, d] = uses[1];
      if (f == g || a != d || b != c) continue;  // same face or inconsistent winding
      if (norm(normals[f]) < 1e-300 || norm(normals[g]) < 1e-300) continue;
      const double angle = angle_degrees(normals[f], normals[g]);
      if (angle < tol_degrees) candidates.push_back({angle, key, f, g, a, b});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
      return std::tie(x.angle, x.key) < std::tie(y.angle, y.key);
    });

    std::vector<char> touched(faces.size(), 0);
    bool merged_any = false;
    for (const Candidate& c : candidates) {
      if (touched[c.f] || touched[c.g]) continue;
      // f holds a -> b, g holds b -> a.
      const Face fa = rotate_to_close(faces[c.f], c.a, c.b);  // [b, ..., a]
      const Face gb = rotate_to_close(faces[c.g], c.b, c.a);  // [a, ..., b]
      if (fa.empty() || gb.empty()) continue;
      Face merged(fa.begin(), fa.end());
      merged.insert(merged.end(), gb.begin() + 1, gb.end() - 1);
      merged = remove_spikes(merged);
      if (!is_simple(merged)) continue;
      faces[c.f] = std::move(merged);
      alive[c.g] = 0;
      touched[c.f] = touched[c.g] = 1;
      ++local.merges;
      merged_any = true;
    }
    if (!merged_any) break;
  }
  local.non_manifold_edges = 0;
  {
    std::map<EdgeKey, int> counts;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (!alive[f]) continue;
      for (std::size_t i = 0; i < faces[f].size(); ++i) {
        ++counts[edge_key(faces[f][i], faces[f][(i + 1) % faces[f].size()])];
      }
    }
    for (const auto& [key, count] : counts) local.non_manifold_edges += count > 2;
  }

  Mesh out;
  out.vertices = mesh.vertices;
  out.class_id = mesh.class_id;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    if (alive[f]) out.faces.push_back(std::move(faces[f]));
  }
  if (report != nullptr) *report = std::move(local);
  return out;
}

}  // namespace polygen
