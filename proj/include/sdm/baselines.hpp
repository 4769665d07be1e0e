#pragma once

// Newton and Gauss-Newton on f(x) = ||h(x) - y||^2.

#include <string_view>
#include <vector>

#include "sdm/core.hpp"

namespace sdm {

enum class RunStatus { converged, max_iters, diverged, singular_hessian, saddle_stall };

std::string_view to_string(RunStatus status) noexcept;

struct DescentRun {
  std::vector<ParamVector> iterates;
  /// ||h(x_k) - y||, aligned with iterates.
  std::vector<double> residuals;
  RunStatus status = RunStatus::max_iters;
};

struct SolverOptions {
  std::size_t max_iters = 10;
  double damping = 0.0;
  /// Stop when ||x_k - x_{k-1}|| <= step_tol * max(1, ||x_k||) ...
  double step_tol = 1e-10;
  /// ... or the residual drops to residual_tol.
  double residual_tol = 1e-12;
  /// A step this short with residual above residual_tol is a stall.
  double stall_step = 1e-14;
  double divergence_threshold = 1e8;
  /// Consecutive residual increases that count as divergence (0 disables).
  std::size_t growth_patience = 5;

  void validate() const;
};

/// x_{k+1} = x_k - (H + damping I)^-1 g with g = 2 J^T r and
/// H = 2 (J^T J + sum_i r_i Hess(h_i)).
DescentRun newton_minimize(const NlsProblem& problem, const ParamVector& x0,
                           const SolverOptions& options = {});

/// x_{k+1} = x_k + (J^T J + damping I)^-1 J^T (y - h(x_k)).
DescentRun gauss_newton_minimize(const NlsProblem& problem, const ParamVector& x0,
                                 const SolverOptions& options = {});

}  // namespace sdm
