#include "sdm/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

namespace sdm {

namespace {

constexpr double kStrictTol = 1e-12;

// Uniform draw from the unit-radius ball in R^p.
ParamVector uniform_in_ball(std::mt19937_64& rng, Index p) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ParamVector dir(p);
  for (Index i = 0; i < p; ++i) dir[i] = normal(rng);
  const double n = dir.norm();
  if (n == 0.0) return ParamVector::Zero(p);
  const double r = std::pow(unit(rng), 1.0 / static_cast<double>(p));
  return dir * (r / n);
}

std::vector<ParamVector> off_anchor_points(const Neighborhood& nbhd) {
  auto pts = sample_neighborhood(nbhd);
  std::erase_if(pts, [&](const ParamVector& x) { return (x - nbhd.anchor).norm() == 0.0; });
  if (pts.empty()) {
    throw Error(ErrorCode::degenerate_neighborhood,
                "every neighborhood sample coincides with the anchor");
  }
  return pts;
}

}  // namespace

void Neighborhood::validate() const {
  if (anchor.size() < 1) throw Error(ErrorCode::invalid_argument, "neighborhood anchor is empty");
  if (!anchor.allFinite()) throw Error(ErrorCode::invalid_argument, "anchor is non-finite");
  if (!std::isfinite(radius) || radius < 0.0) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("neighborhood radius must be finite and >= 0, got {}", radius));
  }
  if (grid_per_dim < 3) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("grid_per_dim must be >= 3, got {}", grid_per_dim));
  }
  if (max_points < 1) throw Error(ErrorCode::invalid_argument, "max_points must be >= 1");
}

std::vector<ParamVector> sample_neighborhood(const Neighborhood& nbhd) {
  nbhd.validate();
  const Index p = nbhd.anchor.size();
  const double r = nbhd.radius;

  // Per-dimension count, shrunk until the full lattice fits max_points.
  std::size_t g = static_cast<std::size_t>(nbhd.grid_per_dim);
  auto lattice_size = [p](std::size_t per) {
    double total = 1.0;
    for (Index i = 0; i < p; ++i) total *= static_cast<double>(per);
    return total;
  };
  while (g > 2 && lattice_size(g) > static_cast<double>(nbhd.max_points)) --g;
  const bool capped = g < static_cast<std::size_t>(nbhd.grid_per_dim);

  std::vector<ParamVector> out;
  std::vector<std::size_t> idx(static_cast<std::size_t>(p), 0);
  const double spacing = g > 1 ? 2.0 * r / static_cast<double>(g - 1) : 0.0;
  while (true) {
    ParamVector offset(p);
    for (Index i = 0; i < p; ++i) {
      offset[i] = -r + spacing * static_cast<double>(idx[static_cast<std::size_t>(i)]);
    }
    // 1D lattices are the whole interval; in higher dimensions clip to the ball.
    if (p == 1 || offset.norm() <= r * (1.0 + 1e-12)) out.push_back(nbhd.anchor + offset);
    Index d = p - 1;
    while (d >= 0) {
      auto& c = idx[static_cast<std::size_t>(d)];
      if (++c < g) break;
      c = 0;
      --d;
    }
    if (d < 0) break;
  }

  if (capped && out.size() < nbhd.max_points) {
    std::mt19937_64 rng(nbhd.seed);
    while (out.size() < nbhd.max_points) out.push_back(nbhd.anchor + r * uniform_in_ball(rng, p));
  }
  return out;
}

double lipschitz_anchored(const SmoothMap& map, const Neighborhood& nbhd) {
  const auto pts = off_anchor_points(nbhd);
  const FeatureVector h_star = map(nbhd.anchor);
  double k = 0.0;
  for (const auto& x : pts) {
    const double ratio = (map(x) - h_star).norm() / (x - nbhd.anchor).norm();
    k = std::max(k, ratio);
  }
  return k;
}

MonotoneSign monotone_anchored_1d(const SmoothMap& map, const Neighborhood& nbhd) {
  if (map.param_dim() != 1 || map.feature_dim() != 1) {
    throw Error(ErrorCode::precondition, "monotone_anchored_1d needs a scalar map");
  }
  const auto pts = off_anchor_points(nbhd);
  const double h_star = map(nbhd.anchor)[0];
  bool all_pos = true;
  bool all_neg = true;
  for (const auto& x : pts) {
    const double s = (map(x)[0] - h_star) * (x[0] - nbhd.anchor[0]);
    if (!(s > 0.0)) all_pos = false;
    if (!(s < 0.0)) all_neg = false;
  }
  if (all_pos) return MonotoneSign::increasing;
  if (all_neg) return MonotoneSign::decreasing;
  return MonotoneSign::none;
}

double generic_dm_1d(const SmoothMap& map, const Neighborhood& nbhd,
                     std::optional<double> epsilon) {
  const MonotoneSign sign = monotone_anchored_1d(map, nbhd);
  if (sign == MonotoneSign::none) {
    throw Error(ErrorCode::precondition, "map is not strictly monotone around the anchor");
  }
  const double k = lipschitz_anchored(map, nbhd);
  if (!(k > 0.0)) throw Error(ErrorCode::precondition, "anchored Lipschitz constant is zero");
  const double limit = 2.0 / k;
  const double eps = epsilon.value_or(0.01 * limit);
  if (!(eps > 0.0) || eps >= limit) {
    throw Error(ErrorCode::invalid_epsilon,
                fmt::format("epsilon must lie in (0, 2/K) = (0, {}), got {}", limit, eps));
  }
  return static_cast<double>(static_cast<int>(sign)) * (limit - eps);
}

bool monotone_operator_check(const SmoothMap& map, const Matrix& gain, const Neighborhood& nbhd) {
  if (gain.rows() != map.param_dim() || gain.cols() != map.feature_dim()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("gain is {}x{}, map is {}->{}", gain.rows(), gain.cols(),
                            map.param_dim(), map.feature_dim()));
  }
  const auto pts = off_anchor_points(nbhd);
  const FeatureVector h_star = map(nbhd.anchor);
  for (const auto& x : pts) {
    const Vector dx = x - nbhd.anchor;
    const Vector g = gain * (map(x) - h_star);
    const double inner = dx.dot(g);
    if (!(inner > kStrictTol * dx.norm() * g.norm())) return false;
  }
  return true;
}

FrobeniusBound frobenius_dm_bound(const SmoothMap& map, const Matrix& gain,
                                  const Neighborhood& nbhd) {
  if (!monotone_operator_check(map, gain, nbhd)) {
    throw Error(ErrorCode::precondition, "R h(x) is not strictly monotone around the anchor");
  }
  const auto pts = off_anchor_points(nbhd);
  const FeatureVector h_star = map(nbhd.anchor);
  double min_cos = std::numeric_limits<double>::infinity();
  for (const auto& x : pts) {
    // Same angle whether both differences are taken as (x*-x) or (x-x*).
    const Vector dx = nbhd.anchor - x;
    const Vector rdh = gain * (h_star - map(x));
    min_cos = std::min(min_cos, dx.dot(rdh) / (dx.norm() * rdh.norm()));
  }
  FrobeniusBound out;
  out.min_cos = min_cos;
  out.lipschitz = lipschitz_anchored(map, nbhd);
  out.bound = 2.0 / out.lipschitz * min_cos;
  out.frobenius = gain.norm();
  out.satisfied = out.frobenius < out.bound;
  return out;
}

ContractionCertificate contraction_certify(const SmoothMap& map, const DescentStep& step,
                                           const Neighborhood& nbhd, const FeatureVector& y) {
  const auto pts = off_anchor_points(nbhd);
  ContractionCertificate cert;
  cert.worst_point = nbhd.anchor;
  cert.contraction_factor = 0.0;
  bool first = true;
  for (const auto& x : pts) {
    const ParamVector next = dm_update(x, step, map(x), y);
    const double ratio = (nbhd.anchor - next).norm() / (nbhd.anchor - x).norm();
    if (first || ratio > cert.contraction_factor || std::isnan(ratio)) {
      cert.contraction_factor = std::isnan(ratio) ? std::numeric_limits<double>::infinity() : ratio;
      cert.worst_point = x;
      first = false;
    }
    ++cert.samples_checked;
  }
  return cert;
}

}  // namespace sdm
