#include "sdm/baselines.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace sdm {

std::string_view to_string(RunStatus status) noexcept {
  switch (status) {
    case RunStatus::converged: return "converged";
    case RunStatus::max_iters: return "max_iters";
    case RunStatus::diverged: return "diverged";
    case RunStatus::singular_hessian: return "singular_hessian";
    case RunStatus::saddle_stall: return "saddle_stall";
  }
  return "unknown";
}

void SolverOptions::validate() const {
  if (!(damping >= 0.0)) throw Error(ErrorCode::invalid_argument, "damping must be >= 0");
  if (!(divergence_threshold > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "divergence threshold must be > 0");
  }
}

namespace {

enum class Method { newton, gauss_newton };

DescentRun minimize(const NlsProblem& problem, const ParamVector& x0, const SolverOptions& opt,
                    Method method) {
  problem.validate();
  opt.validate();
  const SmoothMap& map = *problem.map;
  const Index p = map.param_dim();
  if (x0.size() != p) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("x0 has {} entries, map expects {}", x0.size(), p));
  }

  DescentRun run;
  ParamVector x = x0;
  FeatureVector r = map(x) - problem.target;
  run.iterates.push_back(x);
  run.residuals.push_back(r.norm());

  auto blown = [&](double res) { return !std::isfinite(res) || res > opt.divergence_threshold; };
  if (blown(run.residuals.back())) {
    run.status = RunStatus::diverged;
    return run;
  }
  if (run.residuals.back() <= opt.residual_tol) {
    run.status = RunStatus::converged;
    return run;
  }

  std::size_t growth = 0;
  for (std::size_t k = 0; k < opt.max_iters; ++k) {
    const Matrix jac = map.jacobian(x);
    const Vector grad = 2.0 * jac.transpose() * r;
    Matrix hess = 2.0 * jac.transpose() * jac;
    if (method == Method::newton) {
      const auto hs = map.hessians(x);
      for (Index i = 0; i < r.size(); ++i) hess += 2.0 * r[i] * hs[static_cast<std::size_t>(i)];
    }
    if (!grad.allFinite() || !hess.allFinite()) {
      run.status = RunStatus::diverged;
      return run;
    }
    if (grad.norm() == 0.0) {
      run.status = RunStatus::saddle_stall;
      return run;
    }
    // Newton damps the Hessian of f; Gauss-Newton damps J^T J.
    hess.diagonal().array() += method == Method::newton ? opt.damping : 2.0 * opt.damping;

    Eigen::FullPivLU<Matrix> lu(hess);
    if (!lu.isInvertible()) {
      run.status = RunStatus::singular_hessian;
      return run;
    }
    const Vector step = -lu.solve(grad);
    if (step.norm() < opt.stall_step) {
      run.status = RunStatus::saddle_stall;
      return run;
    }

    x += step;
    r = map(x) - problem.target;
    const double res = r.allFinite() ? r.norm() : std::numeric_limits<double>::infinity();
    const double prev = run.residuals.back();
    run.iterates.push_back(x);
    run.residuals.push_back(res);
    if (blown(res)) {
      run.status = RunStatus::diverged;
      return run;
    }
    growth = res > prev ? growth + 1 : 0;
    if (opt.growth_patience > 0 && growth >= opt.growth_patience) {
      run.status = RunStatus::diverged;
      return run;
    }
    if (res <= opt.residual_tol || step.norm() <= opt.step_tol * std::max(1.0, x.norm())) {
      run.status = RunStatus::converged;
      return run;
    }
  }
  run.status = RunStatus::max_iters;
  return run;
}

}  // namespace

DescentRun newton_minimize(const NlsProblem& problem, const ParamVector& x0,
                           const SolverOptions& options) {
  return minimize(problem, x0, options, Method::newton);
}

DescentRun gauss_newton_minimize(const NlsProblem& problem, const ParamVector& x0,
                                 const SolverOptions& options) {
  return minimize(problem, x0, options, Method::gauss_newton);
}

}  // namespace sdm
