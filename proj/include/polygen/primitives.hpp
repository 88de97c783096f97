#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "polygen/mesh.hpp"
#include "polygen/rng.hpp"

namespace polygen {

enum class PrimitiveFamily { kBox, kPyramid, kPrism, kLExtrusion, kTable, kStool };

std::string_view family_name(PrimitiveFamily family);
std::optional<PrimitiveFamily> parse_family(std::string_view name);

/// Parameter ranges for one generated class.
struct ClassSpec {
  std::string name;
  PrimitiveFamily family = PrimitiveFamily::kBox;
  double size_lo = 0.3;
  double size_hi = 1.0;
  int sides_lo = 4;
  int sides_hi = 8;
};

using Point2 = std::array<double, 2>;

// Closed, outward-oriented triangle meshes.
Mesh triangulated_box(Vec3 lo, Vec3 hi);
/// `outline` is counter-clockwise seen from +z and fan-triangulable from its
/// first point.
Mesh triangulated_prism(std::span<const Point2> outline, double z0, double z1);
Mesh triangulated_pyramid(std::span<const Point2> base, double z0, Vec3 apex);
Mesh concatenate(std::span<const Mesh> parts);

/// Random instance of the class (triangulated, not normalized).
Mesh make_primitive(const ClassSpec& spec, Rng& rng);

}  // namespace polygen
