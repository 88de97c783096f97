#include "polygen/primitives.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace polygen {

std::string_view family_name(PrimitiveFamily family) {
  switch (family) {
    case PrimitiveFamily::kBox: return "box";
    case PrimitiveFamily::kPyramid: return "pyramid";
    case PrimitiveFamily::kPrism: return "prism";
    case PrimitiveFamily::kLExtrusion: return "l_extrusion";
    case PrimitiveFamily::kTable: return "table";
    case PrimitiveFamily::kStool: return "stool";
  }
  return "box";
}

std::optional<PrimitiveFamily> parse_family(std::string_view name) {
  for (PrimitiveFamily f : {PrimitiveFamily::kBox, PrimitiveFamily::kPyramid,
                            PrimitiveFamily::kPrism, PrimitiveFamily::kLExtrusion,
                            PrimitiveFamily::kTable, PrimitiveFamily::kStool}) {
    if (family_name(f) == name) return f;
  }
  return std::nullopt;
}

Mesh triangulated_prism(std::span<const Point2> outline, double z0, double z1) {
  const int n = static_cast<int>(outline.size());
  Mesh m;
  for (const Point2& p : outline) m.vertices.push_back({p[0], p[1], z0});
  for (const Point2& p : outline) m.vertices.push_back({p[0], p[1], z1});
  for (int i = 1; i + 1 < n; ++i) {
    m.faces.push_back({0, i + 1, i});          // bottom, facing -z
    m.faces.push_back({n, n + i, n + i + 1});  // top, facing +z
  }
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.faces.push_back({i, j, n + j});
    m.faces.push_back({i, n + j, n + i});
  }
  return m;
}

Mesh triangulated_box(Vec3 lo, Vec3 hi) {
  const Point2 outline[] = {{lo.x, lo.y}, {hi.x, lo.y}, {hi.x, hi.y}, {lo.x, hi.y}};
  return triangulated_prism(outline, lo.z, hi.z);
}

Mesh triangulated_pyramid(std::span<const Point2> base, double z0, Vec3 apex) {
  const int n = static_cast<int>(base.size());
  Mesh m;
  for (const Point2& p : base) m.vertices.push_back({p[0], p[1], z0});
  m.vertices.push_back(apex);
  for (int i = 1; i + 1 < n; ++i) m.faces.push_back({0, i + 1, i});
  for (int i = 0; i < n; ++i) m.faces.push_back({i, (i + 1) % n, n});
  return m;
}

Mesh concatenate(std::span<const Mesh> parts) {
  Mesh out;
  for (const Mesh& part : parts) {
    const int offset = static_cast<int>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), part.vertices.begin(), part.vertices.end());
    for (Face f : part.faces) {
      for (int& idx : f) idx += offset;
      out.faces.push_back(std::move(f));
    }
  }
  return out;
}

namespace {

std::vector<Point2> regular_polygon(int sides, double radius) {
  std::vector<Point2> pts;
  const double phase = std::numbers::pi / sides;
  for (int i = 0; i < sides; ++i) {
    const double a = phase + 2.0 * std::numbers::pi * i / sides;
    pts.push_back({radius * std::cos(a), radius * std::sin(a)});
  }
  return pts;
}

Mesh leg(double cx, double cy, double half, double z0, double z1) {
  return triangulated_box({cx - half, cy - half, z0}, {cx + half, cy + half, z1});
}

}  // namespace

Mesh make_primitive(const ClassSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> size(spec.size_lo, spec.size_hi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> sides(spec.sides_lo, std::max(spec.sides_lo, spec.sides_hi));
  switch (spec.family) {
    case PrimitiveFamily::kBox: {
      const double w = size(rng), d = size(rng), h = size(rng);
      return triangulated_box({-w / 2, -d / 2, 0.0}, {w / 2, d / 2, h});
    }
    case PrimitiveFamily::kPyramid: {
      const int n = std::max(3, sides(rng));
      const double r = size(rng) / 2, h = size(rng);
      const double ox = (unit(rng) - 0.5) * 0.3 * r, oy = (unit(rng) - 0.5) * 0.3 * r;
      const auto base = regular_polygon(n, r);
      return triangulated_pyramid(base, 0.0, {ox, oy, h});
    }
    case PrimitiveFamily::kPrism: {
      const int n = std::max(3, sides(rng));
      const double r = size(rng) / 2, h = size(rng);
      const auto outline = regular_polygon(n, r);
      return triangulated_prism(outline, 0.0, h);
    }
    case PrimitiveFamily::kLExtrusion: {
      const double w = size(rng), d = size(rng), h = size(rng) * 0.6;
      const double tx = w * (0.3 + 0.3 * unit(rng)), ty = d * (0.3 + 0.3 * unit(rng));
      // Starts at the reflex corner so the fan stays inside the outline.
      const Point2 outline[] = {{tx, ty}, {tx, d}, {0, d}, {0, 0}, {w, 0}, {w, ty}};
      return triangulated_prism(outline, 0.0, h);
    }
    case PrimitiveFamily::kTable: {
      const double w = size(rng) * 1.2, d = size(rng), top = 0.04 + 0.06 * unit(rng);
      const double height = 0.4 + 0.5 * unit(rng) * std::max(w, d);
      const double half = 0.02 + 0.04 * unit(rng);
      const double inset = half + 0.1 * unit(rng) * std::min(w, d) / 2;
      std::vector<Mesh> parts{
          triangulated_box({-w / 2, -d / 2, height}, {w / 2, d / 2, height + top})};
      for (int sx : {-1, 1}) {
        for (int sy : {-1, 1}) {
          parts.push_back(leg(sx * (w / 2 - inset), sy * (d / 2 - inset), half, 0.0, height));
        }
      }
      return concatenate(parts);
    }
    case PrimitiveFamily::kStool: {
      const double w = size(rng) * 0.8, d = size(rng) * 0.8, top = 0.04 + 0.06 * unit(rng);
      const double height = 0.3 + 0.5 * unit(rng);
      const double half = 0.02 + 0.03 * unit(rng);
      const double ax = w / 2 - half, ay = d / 2 - half;
      std::vector<Mesh> parts{
          triangulated_box({-w / 2, -d / 2, height}, {w / 2, d / 2, height + top}),
          leg(-ax, -ay, half, 0.0, height), leg(ax, -ay, half, 0.0, height),
          leg(0.0, ay, half, 0.0, height)};
      return concatenate(parts);
    }
  }
  return {};
}

}  // namespace polygen
