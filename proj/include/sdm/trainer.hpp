#pragma once

// Batch SDM training. Each stage solves one ridge-regularized linear least
// squares problem, then pushes every sample through the freshly learned map.

#include <cstdint>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "sdm/core.hpp"

namespace sdm {

struct GaussianSampling {
  ParamVector mean_offset;  // added to `around`
  Vector stddev;            // per dimension, >= 0
  std::size_t count = 1;
};

/// Cartesian product of lo:step:hi per dimension, offset by `around`.
struct GridSampling {
  Vector lo;
  Vector hi;
  Vector step;
};

struct ExplicitSampling {
  std::vector<ParamVector> points;
};

struct SamplingSpec {
  std::variant<GaussianSampling, GridSampling, ExplicitSampling> distribution;
  std::uint64_t seed = 42;

  void validate(Index param_dim) const;
};

/// Number of points lo, lo+step, ... <= hi (tolerant to rounding of step).
std::size_t grid_axis_count(double lo, double hi, double step);

std::vector<ParamVector> sample_initials(const SamplingSpec& spec, const ParamVector& around);

struct TrainingProblem {
  ParamVector x_opt;
  FeatureVector target;
  std::shared_ptr<const SmoothMap> map;
};

struct TrainingSet {
  SequenceMode mode = SequenceMode::template_target;
  std::vector<TrainingProblem> problems;
  std::vector<ParamVector> initial_states;

  /// Shared map, x* and y = h(x*); one problem per initial state.
  static TrainingSet template_target(std::shared_ptr<const SmoothMap> map, const ParamVector& x_opt,
                                     std::vector<ParamVector> initials);
  /// Shared start x0; one (x*, y) pair per problem.
  static TrainingSet reversed(std::shared_ptr<const SmoothMap> map, const ParamVector& x0,
                              std::vector<ParamVector> x_opts, std::vector<FeatureVector> targets);

  std::size_t size() const noexcept { return problems.size(); }
  /// Throws contract_violation when the mode's invariants do not hold.
  void validate() const;
};

struct TrainerConfig {
  std::size_t stages = 4;
  /// nullopt selects 1e-6 * trace(Phi Phi^T) / m per stage.
  std::optional<double> ridge;
  bool record_loss = true;

  void validate() const;
};

/// Ridge used when TrainerConfig::ridge is unset.
double default_ridge(const Matrix& features);

/// Minimizes sum_i ||dx_i - R phi_i - b||^2 + ridge ||R||_F^2 where
/// residuals is p x n (columns dx_i) and features is m x n. b stays zero
/// unless with_bias. ridge = 0 takes the minimum-norm solution.
DescentStep solve_stage(const Matrix& residuals, const Matrix& features, bool with_bias,
                        double ridge);

/// List form of solve_stage.
DescentStep solve_stage(std::span<const ParamVector> residuals,
                        std::span<const FeatureVector> features, bool with_bias, double ridge);

/// Per-stage raw features h(x_k) - y (h(x_k) in generalized mode), m x n,
/// captured for seeding online covariance blocks.
struct TrainingTrace {
  std::vector<Matrix> stage_features;
  std::vector<double> stage_ridge;
};

DescentSequence train(const TrainingSet& set, const TrainerConfig& config,
                      TrainingTrace* trace = nullptr);

/// The per-stage loss is non-increasing within slack * max(1, previous).
bool report_non_increasing(const std::vector<double>& report, double slack = 1e-9);

}  // namespace sdm
