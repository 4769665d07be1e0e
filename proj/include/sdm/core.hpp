#pragma once

// Shared domain types and the descent-map update kernels.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sdm/error.hpp"

namespace sdm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Point in parameter space.
using ParamVector = Vector;
/// Point in feature (output) space.
using FeatureVector = Vector;
/// Every iterate from the start point onward.
using Trajectory = std::vector<ParamVector>;

bool all_finite(const Eigen::Ref<const Matrix>& values) noexcept;

/// Neumaier-compensated sum; result does not depend on how the caller
/// batches the inputs beyond rounding of the compensation term.
double stable_sum(std::span<const double> values) noexcept;
double stable_mean(std::span<const double> values) noexcept;

/// A map h: R^p -> R^m with an optional analytic Jacobian and optional
/// per-output Hessians. Missing derivatives are central-differenced.
class SmoothMap {
 public:
  using EvalFn = std::function<FeatureVector(const ParamVector&)>;
  using JacobianFn = std::function<Matrix(const ParamVector&)>;
  /// One p x p Hessian per output component.
  using HessianFn = std::function<std::vector<Matrix>(const ParamVector&)>;

  static constexpr double kDefaultFdStep = 1e-6;

  SmoothMap(Index param_dim, Index feature_dim, EvalFn eval, JacobianFn jacobian = {},
            HessianFn hessians = {}, double fd_step = kDefaultFdStep);

  Index param_dim() const noexcept { return param_dim_; }
  Index feature_dim() const noexcept { return feature_dim_; }
  double fd_step() const noexcept { return fd_step_; }
  bool has_analytic_jacobian() const noexcept { return static_cast<bool>(jacobian_); }
  bool has_analytic_hessians() const noexcept { return static_cast<bool>(hessians_); }

  FeatureVector operator()(const ParamVector& x) const;
  FeatureVector eval(const ParamVector& x) const { return (*this)(x); }

  Matrix jacobian(const ParamVector& x) const;
  /// Central differences with step fd_step * max(1, |x_i|) per coordinate.
  Matrix fd_jacobian(const ParamVector& x) const;
  std::vector<Matrix> hessians(const ParamVector& x) const;

 private:
  void check_param(const ParamVector& x) const;

  Index param_dim_;
  Index feature_dim_;
  EvalFn eval_;
  JacobianFn jacobian_;
  HessianFn hessians_;
  double fd_step_;
};

/// Max over columns j of max_i |analytic - fd|_ij / max(max_i |analytic_ij|, fd_step).
double max_jacobian_relative_error(const SmoothMap& map, const ParamVector& x);

enum class SequenceMode {
  template_target,  // fixed y shared by training and testing
  reversed,         // fixed start, per-sample y
  generalized,      // bias absorbs the unknown y
};

std::string_view to_string(SequenceMode mode) noexcept;
SequenceMode parse_sequence_mode(std::string_view text);

/// One learned descent map: gain is p x m, bias has length p.
struct DescentStep {
  Matrix gain;
  Vector bias;

  static DescentStep zero(Index param_dim, Index feature_dim);
  Index param_dim() const noexcept { return gain.rows(); }
  Index feature_dim() const noexcept { return gain.cols(); }
};

struct DescentSequence {
  std::vector<DescentStep> steps;
  SequenceMode mode = SequenceMode::reversed;
  /// Mean squared parameter error on the training set: entry 0 before any
  /// stage, entry k after stage k.
  std::vector<double> training_report;

  Index param_dim() const;
  Index feature_dim() const;
  std::size_t stage_count() const noexcept { return steps.size(); }

  /// Throws contract_violation when empty, ragged or non-finite.
  void validate() const;
};

/// x_prev - gain * (h_val - y)
ParamVector dm_update(const ParamVector& x_prev, const DescentStep& step,
                      const FeatureVector& h_val, const FeatureVector& y);

/// x_prev - gain * h_val + bias
ParamVector dm_update_biased(const ParamVector& x_prev, const DescentStep& step,
                             const FeatureVector& h_val);

/// Runs every stage of seq from x0, re-evaluating the map per stage.
/// Template and reversed modes need y; generalized mode ignores it.
/// Throws DivergedError (with the partial trajectory) on non-finite output.
Trajectory apply_sequence(const DescentSequence& seq, const ParamVector& x0, const SmoothMap& map,
                          const std::optional<FeatureVector>& y);

/// min f(x) = ||h(x) - y||^2
struct NlsProblem {
  std::shared_ptr<const SmoothMap> map;
  FeatureVector target;
  std::optional<ParamVector> optimum;

  void validate() const;
};

}  // namespace sdm
