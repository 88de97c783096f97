#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "polygen/mesh.hpp"
#include "polygen/rng.hpp"

namespace polygen {

struct AugmentConfig {
  double scale_lo = 0.75;
  double scale_hi = 1.25;
  int warp_segments = 5;
  double warp_log_variance = 0.5;
  double decimate_tol_lo = 1.0;
  double decimate_tol_hi = 20.0;
  int copies_per_mesh = 50;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

/// Scales each axis by an independent U[scale_lo, scale_hi] draw (x, y, z
/// order), then re-normalizes. The draws are written to `draws` if given.
Mesh axis_scale(const Mesh& mesh, Rng& rng, const AugmentConfig& cfg,
                std::array<double, 3>* draws = nullptr);

/// Continuous piecewise-linear monotone map of [0, 1] onto itself.
class PiecewiseWarp {
 public:
  /// Even segments with the given (positive) slopes, rescaled so w(1) = 1.
  static PiecewiseWarp from_gradients(const std::vector<double>& gradients);
  /// Segments on [0, 0.5] rescaled so w(0.5) = 0.5, reflected so that
  /// w(1 - t) = 1 - w(t).
  static PiecewiseWarp symmetric_from_gradients(const std::vector<double>& half_gradients);

  double operator()(double t) const;
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
};

/// Draws a warp per axis: symmetric for x and y, plain for z. Each maps
/// c -> w(c + 0.5) - 0.5; the result is re-normalized.
Mesh piecewise_warp(const Mesh& mesh, Rng& rng, const AugmentConfig& cfg);
Mesh apply_warps(const Mesh& mesh, const std::array<PiecewiseWarp, 3>& xyz);

struct DecimateReport {
  std::size_t merges = 0;
  std::size_t non_manifold_edges = 0;
  std::vector<std::string> warnings;
};

/// Greedily merges edge-adjacent, consistently oriented faces whose normals
/// differ by less than `tol_degrees`, smallest angle first, until no pair
/// qualifies. Vertices are untouched; merged faces stay simple cycles.
Mesh planar_decimate(const Mesh& mesh, double tol_degrees, DecimateReport* report = nullptr);

/// Newell normal (unnormalized, length = 2 * area for planar polygons).
Vec3 polygon_normal(const Mesh& mesh, const Face& face);

}  // namespace polygen
