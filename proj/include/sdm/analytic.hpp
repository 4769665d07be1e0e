#pragma once

// Scalar test functions with analytic derivatives and inverses, and the
// SDM-versus-Newton comparison run over them.

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sdm/baselines.hpp"
#include "sdm/core.hpp"
#include "sdm/trainer.hpp"

namespace sdm::analytic {

using ScalarFn = std::function<double(double)>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

struct AnalyticFunction {
  std::string name;
  std::string formula;
  ScalarFn h;
  ScalarFn h_prime;
  ScalarFn h_double_prime;
  ScalarFn h_inverse;
  /// Values of y on which h_inverse is defined.
  Interval inverse_domain;
  Interval train_range;
  double train_step = 0.0;
  double test_step = 0.0;
  double x0 = 0.0;
  /// Stand-in entry rather than one of the reference functions.
  bool substitution = false;

  /// Checks the range/steps and that h(h_inverse(y)) = y to 1e-10 on the
  /// training grid with h strictly monotone there.
  void validate() const;
};

const std::vector<AnalyticFunction>& registry();
const AnalyticFunction& find_function(const std::string& name);

/// Bracketed bisection, accurate to the last representable bit.
double erf_inverse(double y);

std::shared_ptr<const SmoothMap> make_map(const AnalyticFunction& fn);

/// lo, lo + step, ... <= hi.
std::vector<double> sample_range(const Interval& range, double step);

/// Reversed mode: y on train_range at train_step, x* = h_inverse(y), x0 shared.
TrainingSet build_training_set(const AnalyticFunction& fn);
std::vector<double> test_targets(const AnalyticFunction& fn);

struct ComparisonTable {
  std::string function;
  std::size_t stages = 0;
  std::size_t num_test_points = 0;
  /// Mean normalized residual |x_k - x*| / |x*| for k = 0..stages.
  std::vector<double> sdm;
  std::vector<double> newton;
  std::map<RunStatus, std::size_t> newton_status;
  std::vector<double> training_report;
};

/// Value recorded for a Newton iterate after divergence.
constexpr double kResidualCap = 1e8;

ComparisonTable run_comparison(const AnalyticFunction& fn, std::size_t stages = 10);

/// Names of the properties the table violates; empty when all hold.
std::vector<std::string> failed_invariants(const ComparisonTable& table);

std::string format_csv(const AnalyticFunction& fn, const ComparisonTable& table);

}  // namespace sdm::analytic
