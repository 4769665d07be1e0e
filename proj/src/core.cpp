#include "sdm/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

namespace sdm {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::contract_violation: return "contract violation";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::diverged: return "diverged";
    case ErrorCode::rank_deficient: return "rank deficient";
    case ErrorCode::degenerate_neighborhood: return "degenerate neighborhood";
    case ErrorCode::precondition: return "precondition failed";
    case ErrorCode::invalid_epsilon: return "invalid epsilon";
    case ErrorCode::invalid_projection: return "invalid projection";
    case ErrorCode::numerical_breakdown: return "numerical breakdown";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::parse: return "parse error";
  }
  return "unknown error";
}

bool all_finite(const Eigen::Ref<const Matrix>& values) noexcept {
  return values.allFinite();
}

double stable_sum(std::span<const double> values) noexcept {
  double sum = 0.0;
  double comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

double stable_mean(std::span<const double> values) noexcept {
  if (values.empty()) return 0.0;
  return stable_sum(values) / static_cast<double>(values.size());
}

SmoothMap::SmoothMap(Index param_dim, Index feature_dim, EvalFn eval, JacobianFn jacobian,
                     HessianFn hessians, double fd_step)
    : param_dim_(param_dim), feature_dim_(feature_dim), eval_(std::move(eval)),
      jacobian_(std::move(jacobian)), hessians_(std::move(hessians)), fd_step_(fd_step) {
  if (param_dim_ < 1 || feature_dim_ < 1) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("SmoothMap dimensions must be >= 1 (got p={}, m={})", param_dim_,
                            feature_dim_));
  }
  if (!eval_) throw Error(ErrorCode::invalid_argument, "SmoothMap needs an eval function");
  if (!(fd_step_ > 0.0) || !std::isfinite(fd_step_)) {
    throw Error(ErrorCode::invalid_argument, "SmoothMap fd_step must be finite and > 0");
  }
}

void SmoothMap::check_param(const ParamVector& x) const {
  if (x.size() != param_dim_) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("parameter axis mismatch: map expects {}, got {}", param_dim_,
                            x.size()));
  }
}

FeatureVector SmoothMap::operator()(const ParamVector& x) const {
  check_param(x);
  FeatureVector out = eval_(x);
  if (out.size() != feature_dim_) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("feature axis mismatch: map declares {}, eval returned {}",
                            feature_dim_, out.size()));
  }
  return out;
}

Matrix SmoothMap::fd_jacobian(const ParamVector& x) const {
  check_param(x);
  Matrix jac(feature_dim_, param_dim_);
  ParamVector probe = x;
  for (Index i = 0; i < param_dim_; ++i) {
    const double h = fd_step_ * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const FeatureVector plus = (*this)(probe);
    probe[i] = x[i] - h;
    const FeatureVector minus = (*this)(probe);
    probe[i] = x[i];
    jac.col(i) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

Matrix SmoothMap::jacobian(const ParamVector& x) const {
  if (!jacobian_) return fd_jacobian(x);
  check_param(x);
  Matrix jac = jacobian_(x);
  if (jac.rows() != feature_dim_ || jac.cols() != param_dim_) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("jacobian is {}x{}, expected {}x{}", jac.rows(), jac.cols(),
                            feature_dim_, param_dim_));
  }
  return jac;
}

std::vector<Matrix> SmoothMap::hessians(const ParamVector& x) const {
  check_param(x);
  if (hessians_) {
    auto out = hessians_(x);
    if (static_cast<Index>(out.size()) != feature_dim_) {
      throw Error(ErrorCode::contract_violation, "hessians must return one matrix per output");
    }
    return out;
  }
  // Differentiate the Jacobian; symmetrize the result.
  std::vector<Matrix> out(static_cast<std::size_t>(feature_dim_), Matrix(param_dim_, param_dim_));
  ParamVector probe = x;
  // Nested differences need a coarser outer step.
  const double step = (jacobian_ ? 10.0 : 100.0) * fd_step_;
  for (Index j = 0; j < param_dim_; ++j) {
    const double h = step * std::max(1.0, std::abs(x[j]));
    probe[j] = x[j] + h;
    const Matrix plus = jacobian(probe);
    probe[j] = x[j] - h;
    const Matrix minus = jacobian(probe);
    probe[j] = x[j];
    const Matrix d = (plus - minus) / (2.0 * h);
    for (Index c = 0; c < feature_dim_; ++c) {
      out[static_cast<std::size_t>(c)].col(j) = d.row(c).transpose();
    }
  }
  for (auto& hm : out) hm = 0.5 * (hm + hm.transpose()).eval();
  return out;
}

double max_jacobian_relative_error(const SmoothMap& map, const ParamVector& x) {
  const Matrix analytic = map.jacobian(x);
  const Matrix numeric = map.fd_jacobian(x);
  // Each column is compared against its own magnitude, so small-scale
  // parameters (e.g. millimeter translations) are not swamped by large ones.
  double worst = 0.0;
  for (Index j = 0; j < analytic.cols(); ++j) {
    const double scale = std::max(analytic.col(j).cwiseAbs().maxCoeff(), map.fd_step());
    worst = std::max(worst, (analytic.col(j) - numeric.col(j)).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

std::string_view to_string(SequenceMode mode) noexcept {
  switch (mode) {
    case SequenceMode::template_target: return "template";
    case SequenceMode::reversed: return "reversed";
    case SequenceMode::generalized: return "generalized";
  }
  return "unknown";
}

SequenceMode parse_sequence_mode(std::string_view text) {
  if (text == "template") return SequenceMode::template_target;
  if (text == "reversed") return SequenceMode::reversed;
  if (text == "generalized") return SequenceMode::generalized;
  throw Error(ErrorCode::parse, fmt::format("unknown sequence mode '{}'", text));
}

DescentStep DescentStep::zero(Index param_dim, Index feature_dim) {
  return {Matrix::Zero(param_dim, feature_dim), Vector::Zero(param_dim)};
}

Index DescentSequence::param_dim() const {
  if (steps.empty()) throw Error(ErrorCode::contract_violation, "descent sequence has no steps");
  return steps.front().param_dim();
}

Index DescentSequence::feature_dim() const {
  if (steps.empty()) throw Error(ErrorCode::contract_violation, "descent sequence has no steps");
  return steps.front().feature_dim();
}

void DescentSequence::validate() const {
  const Index p = param_dim();
  const Index m = feature_dim();
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const auto& s = steps[k];
    if (s.gain.rows() != p || s.gain.cols() != m || s.bias.size() != p) {
      throw Error(ErrorCode::contract_violation,
                  fmt::format("step {} has shape {}x{} (bias {}), sequence is {}x{}", k,
                              s.gain.rows(), s.gain.cols(), s.bias.size(), p, m));
    }
    if (!s.gain.allFinite() || !s.bias.allFinite()) {
      throw Error(ErrorCode::contract_violation, fmt::format("step {} has non-finite entries", k));
    }
  }
}

namespace {

void check_update_dims(const ParamVector& x_prev, const DescentStep& step,
                       const FeatureVector& h_val) {
  if (x_prev.size() != step.gain.rows()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("parameter axis mismatch: x has {}, gain has {} rows", x_prev.size(),
                            step.gain.rows()));
  }
  if (h_val.size() != step.gain.cols()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("feature axis mismatch: h has {}, gain has {} columns", h_val.size(),
                            step.gain.cols()));
  }
}

}  // namespace

ParamVector dm_update(const ParamVector& x_prev, const DescentStep& step,
                      const FeatureVector& h_val, const FeatureVector& y) {
  check_update_dims(x_prev, step, h_val);
  if (y.size() != h_val.size()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("feature axis mismatch: y has {}, h has {}", y.size(), h_val.size()));
  }
  return x_prev - step.gain * (h_val - y);
}

ParamVector dm_update_biased(const ParamVector& x_prev, const DescentStep& step,
                             const FeatureVector& h_val) {
  check_update_dims(x_prev, step, h_val);
  if (step.bias.size() != x_prev.size()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("parameter axis mismatch: bias has {}, x has {}", step.bias.size(),
                            x_prev.size()));
  }
  return x_prev - step.gain * h_val + step.bias;
}

Trajectory apply_sequence(const DescentSequence& seq, const ParamVector& x0, const SmoothMap& map,
                          const std::optional<FeatureVector>& y) {
  seq.validate();
  if (x0.size() != seq.param_dim()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("parameter axis mismatch: x0 has {}, sequence expects {}", x0.size(),
                            seq.param_dim()));
  }
  if (map.param_dim() != seq.param_dim() || map.feature_dim() != seq.feature_dim()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("map is {}->{}, sequence is {}->{}", map.param_dim(),
                            map.feature_dim(), seq.param_dim(), seq.feature_dim()));
  }
  const bool needs_target = seq.mode != SequenceMode::generalized;
  if (needs_target && !y) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("{} mode needs a target y", to_string(seq.mode)));
  }

  Trajectory traj;
  traj.reserve(seq.steps.size() + 1);
  traj.push_back(x0);
  for (std::size_t k = 0; k < seq.steps.size(); ++k) {
    const auto& step = seq.steps[k];
    const FeatureVector h = map(traj.back());
    if (!h.allFinite()) {
      throw DivergedError(fmt::format("map output is non-finite at stage {}", k), traj, k);
    }
    ParamVector next = needs_target ? ParamVector(dm_update(traj.back(), step, h, *y) + step.bias)
                                    : dm_update_biased(traj.back(), step, h);
    if (!next.allFinite()) {
      throw DivergedError(fmt::format("iterate is non-finite after stage {}", k), traj, k);
    }
    traj.push_back(std::move(next));
  }
  return traj;
}

void NlsProblem::validate() const {
  if (!map) throw Error(ErrorCode::invalid_argument, "NLS problem has no map");
  if (target.size() != map->feature_dim()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("target has {} entries, map feature_dim is {}", target.size(),
                            map->feature_dim()));
  }
  if (optimum && optimum->size() != map->param_dim()) {
    throw Error(ErrorCode::contract_violation, "optimum length does not match map param_dim");
  }
}

}  // namespace sdm
