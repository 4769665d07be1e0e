#pragma once

// Finite-sample checks of the generic-descent-map conditions: anchored
// Lipschitz constants, monotonicity, the 1D r = sign(h')(2/K - eps)
// construction, the Frobenius-norm bound and empirical contraction.

#include <cstdint>
#include <optional>
#include <vector>

#include "sdm/core.hpp"

namespace sdm {

/// Euclidean ball around anchor, sampled on a regular lattice.
struct Neighborhood {
  ParamVector anchor;
  double radius = 1.0;
  int grid_per_dim = 1001;
  /// Seeds the uniform fill used when the lattice would exceed max_points.
  std::uint64_t seed = 42;
  std::size_t max_points = 100000;

  /// Throws invalid_argument on non-finite radius or grid_per_dim < 3.
  void validate() const;
};

/// Lattice points of the ball, anchor included when it lies on the lattice.
/// 1D: grid_per_dim evenly spaced points on [anchor - r, anchor + r].
std::vector<ParamVector> sample_neighborhood(const Neighborhood& nbhd);

/// K = max ||h(x) - h(x*)|| / ||x - x*|| over sampled x != x*.
double lipschitz_anchored(const SmoothMap& map, const Neighborhood& nbhd);

enum class MonotoneSign { decreasing = -1, none = 0, increasing = 1 };

MonotoneSign monotone_anchored_1d(const SmoothMap& map, const Neighborhood& nbhd);

/// sign(h') * (2/K - epsilon). epsilon defaults to 0.01 * 2/K.
double generic_dm_1d(const SmoothMap& map, const Neighborhood& nbhd,
                     std::optional<double> epsilon = std::nullopt);

/// <x - x*, R h(x) - R h(x*)> > 0 at every sampled x != x*; ties fail.
bool monotone_operator_check(const SmoothMap& map, const Matrix& gain, const Neighborhood& nbhd);

struct FrobeniusBound {
  double bound = 0.0;      // (2/K) * min cos(theta)
  double frobenius = 0.0;  // ||R||_F
  double min_cos = 0.0;
  double lipschitz = 0.0;
  bool satisfied = false;  // frobenius < bound
};

FrobeniusBound frobenius_dm_bound(const SmoothMap& map, const Matrix& gain,
                                  const Neighborhood& nbhd);

struct ContractionCertificate {
  double contraction_factor = 0.0;
  std::size_t samples_checked = 0;
  ParamVector worst_point;

  bool valid() const noexcept { return samples_checked > 0 && contraction_factor < 1.0; }
};

/// Max of ||x* - x'|| / ||x* - x|| with x' = dm_update(x, step, h(x), y).
ContractionCertificate contraction_certify(const SmoothMap& map, const DescentStep& step,
                                           const Neighborhood& nbhd, const FeatureVector& y);

}  // namespace sdm
