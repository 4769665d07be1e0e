#include "sdm/trainer.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

namespace sdm {

void SamplingSpec::validate(Index param_dim) const {
  std::visit(
      [param_dim](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, GaussianSampling>) {
          if (d.mean_offset.size() != param_dim || d.stddev.size() != param_dim) {
            throw Error(ErrorCode::contract_violation, "gaussian sampling dimension mismatch");
          }
          if ((d.stddev.array() < 0.0).any() || !d.stddev.allFinite()) {
            throw Error(ErrorCode::invalid_argument, "gaussian stddev must be finite and >= 0");
          }
          if (d.count < 1) throw Error(ErrorCode::invalid_argument, "sample count must be >= 1");
        } else if constexpr (std::is_same_v<T, GridSampling>) {
          if (d.lo.size() != param_dim || d.hi.size() != param_dim ||
              d.step.size() != param_dim) {
            throw Error(ErrorCode::contract_violation, "grid sampling dimension mismatch");
          }
          for (Index i = 0; i < param_dim; ++i) {
            if (!(d.lo[i] <= d.hi[i]) || !(d.step[i] > 0.0)) {
              throw Error(ErrorCode::invalid_argument,
                          fmt::format("grid axis {} needs lo <= hi and step > 0", i));
            }
          }
        } else {
          for (const auto& p : d.points) {
            if (p.size() != param_dim) {
              throw Error(ErrorCode::contract_violation, "explicit sample dimension mismatch");
            }
          }
        }
      },
      distribution);
}

std::size_t grid_axis_count(double lo, double hi, double step) {
  return static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
}

std::vector<ParamVector> sample_initials(const SamplingSpec& spec, const ParamVector& around) {
  spec.validate(around.size());
  const Index p = around.size();
  std::vector<ParamVector> out;

  if (const auto* g = std::get_if<GaussianSampling>(&spec.distribution)) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    out.reserve(g->count);
    for (std::size_t i = 0; i < g->count; ++i) {
      ParamVector x = around + g->mean_offset;
      for (Index d = 0; d < p; ++d) x[d] += g->stddev[d] * normal(rng);
      out.push_back(std::move(x));
    }
  } else if (const auto* gr = std::get_if<GridSampling>(&spec.distribution)) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(p));
    std::size_t total = 1;
    for (Index d = 0; d < p; ++d) {
      counts[static_cast<std::size_t>(d)] = grid_axis_count(gr->lo[d], gr->hi[d], gr->step[d]);
      total *= counts[static_cast<std::size_t>(d)];
    }
    out.reserve(total);
    // First axis varies slowest.
    std::vector<std::size_t> idx(static_cast<std::size_t>(p), 0);
    for (std::size_t n = 0; n < total; ++n) {
      ParamVector x = around;
      for (Index d = 0; d < p; ++d) {
        x[d] += gr->lo[d] + gr->step[d] * static_cast<double>(idx[static_cast<std::size_t>(d)]);
      }
      out.push_back(std::move(x));
      for (Index d = p - 1; d >= 0; --d) {
        auto& c = idx[static_cast<std::size_t>(d)];
        if (++c < counts[static_cast<std::size_t>(d)]) break;
        c = 0;
      }
    }
  } else {
    out = std::get<ExplicitSampling>(spec.distribution).points;
  }
  return out;
}

TrainingSet TrainingSet::template_target(std::shared_ptr<const SmoothMap> map,
                                         const ParamVector& x_opt,
                                         std::vector<ParamVector> initials) {
  TrainingSet set;
  set.mode = SequenceMode::template_target;
  const FeatureVector y = (*map)(x_opt);
  set.problems.assign(initials.size(), TrainingProblem{x_opt, y, map});
  set.initial_states = std::move(initials);
  return set;
}

TrainingSet TrainingSet::reversed(std::shared_ptr<const SmoothMap> map, const ParamVector& x0,
                                  std::vector<ParamVector> x_opts,
                                  std::vector<FeatureVector> targets) {
  if (x_opts.size() != targets.size()) {
    throw Error(ErrorCode::contract_violation, "reversed set needs one target per optimum");
  }
  TrainingSet set;
  set.mode = SequenceMode::reversed;
  set.problems.reserve(x_opts.size());
  for (std::size_t i = 0; i < x_opts.size(); ++i) {
    set.problems.push_back({std::move(x_opts[i]), std::move(targets[i]), map});
  }
  set.initial_states.assign(set.problems.size(), x0);
  return set;
}

void TrainingSet::validate() const {
  if (problems.empty()) throw Error(ErrorCode::contract_violation, "training set is empty");
  if (initial_states.size() != problems.size()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("{} initial states for {} problems", initial_states.size(),
                            problems.size()));
  }
  const auto& first = problems.front();
  if (!first.map) throw Error(ErrorCode::contract_violation, "training problem has no map");
  const Index p = first.map->param_dim();
  const Index m = first.map->feature_dim();
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const auto& pr = problems[i];
    if (!pr.map || pr.map->param_dim() != p || pr.map->feature_dim() != m ||
        pr.x_opt.size() != p || pr.target.size() != m || initial_states[i].size() != p) {
      throw Error(ErrorCode::contract_violation,
                  fmt::format("training sample {} has inconsistent dimensions", i));
    }
  }
  if (mode == SequenceMode::template_target) {
    for (const auto& pr : problems) {
      if (pr.map != first.map || pr.x_opt != first.x_opt || pr.target != first.target) {
        throw Error(ErrorCode::contract_violation,
                    "template mode needs one shared map, optimum and target");
      }
    }
  } else if (mode == SequenceMode::reversed) {
    for (const auto& x0 : initial_states) {
      if (x0 != initial_states.front()) {
        throw Error(ErrorCode::contract_violation, "reversed mode needs one shared start");
      }
    }
  }
}

void TrainerConfig::validate() const {
  if (stages < 1) throw Error(ErrorCode::invalid_argument, "stages must be >= 1");
  if (ridge && (!(*ridge >= 0.0) || !std::isfinite(*ridge))) {
    throw Error(ErrorCode::invalid_argument, "ridge must be finite and >= 0");
  }
}

double default_ridge(const Matrix& features) {
  if (features.rows() == 0) return 0.0;
  return 1e-6 * features.squaredNorm() / static_cast<double>(features.rows());
}

DescentStep solve_stage(const Matrix& residuals, const Matrix& features, bool with_bias,
                        double ridge) {
  const Index p = residuals.rows();
  const Index m = features.rows();
  const Index n = residuals.cols();
  if (n == 0 || features.cols() != n) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("solve_stage needs matching nonempty sample lists ({} vs {})", n,
                            features.cols()));
  }
  if (p < 1 || m < 1) throw Error(ErrorCode::contract_violation, "empty parameter/feature axis");
  if (!(ridge >= 0.0)) throw Error(ErrorCode::invalid_argument, "ridge must be >= 0");
  // Nothing to fit: zero is the minimum-norm solution for any features.
  if (residuals.isZero(0.0) && features.allFinite()) return DescentStep::zero(p, m);
  const Index unknowns = m + (with_bias ? 1 : 0);
  if (ridge == 0.0 && n < unknowns) {
    throw Error(ErrorCode::rank_deficient,
                fmt::format("{} samples for {} unknowns per row with ridge 0; use a nonzero ridge",
                            n, unknowns));
  }

  Matrix phi = features;
  Matrix dx = residuals;
  Vector phi_mean = Vector::Zero(m);
  Vector dx_mean = Vector::Zero(p);
  if (with_bias) {
    // An unpenalized intercept decouples after centering.
    phi_mean = phi.rowwise().mean();
    dx_mean = dx.rowwise().mean();
    phi.colwise() -= phi_mean;
    dx.colwise() -= dx_mean;
  }

  DescentStep step = DescentStep::zero(p, m);
  if (ridge > 0.0) {
    Matrix gram = phi * phi.transpose();
    gram.diagonal().array() += ridge;
    const Matrix rhs = phi * dx.transpose();  // m x p
    step.gain = gram.ldlt().solve(rhs).transpose();
  } else {
    // Minimum-norm least squares: R^T = argmin ||Phi^T R^T - dX^T||.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(phi.transpose());
    step.gain = cod.solve(dx.transpose()).transpose();
  }
  if (with_bias) step.bias = dx_mean - step.gain * phi_mean;
  if (!step.gain.allFinite() || !step.bias.allFinite()) {
    throw Error(ErrorCode::numerical_breakdown, "stage solve produced non-finite gains");
  }
  return step;
}

DescentStep solve_stage(std::span<const ParamVector> residuals,
                        std::span<const FeatureVector> features, bool with_bias, double ridge) {
  if (residuals.empty() || residuals.size() != features.size()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("solve_stage needs matching nonempty sample lists ({} vs {})",
                            residuals.size(), features.size()));
  }
  const Index n = static_cast<Index>(residuals.size());
  Matrix dx(residuals.front().size(), n);
  Matrix phi(features.front().size(), n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = residuals[static_cast<std::size_t>(i)];
    const auto& f = features[static_cast<std::size_t>(i)];
    if (r.size() != dx.rows() || f.size() != phi.rows()) {
      throw Error(ErrorCode::contract_violation,
                  fmt::format("sample {} has inconsistent dimensions", i));
    }
    dx.col(i) = r;
    phi.col(i) = f;
  }
  return solve_stage(dx, phi, with_bias, ridge);
}

namespace {

double mean_squared_error(const TrainingSet& set, const std::vector<ParamVector>& states) {
  std::vector<double> sq(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    sq[i] = (set.problems[i].x_opt - states[i]).squaredNorm();
  }
  return stable_mean(sq);
}

}  // namespace

DescentSequence train(const TrainingSet& set, const TrainerConfig& config, TrainingTrace* trace) {
  set.validate();
  config.validate();
  const bool generalized = set.mode == SequenceMode::generalized;
  const Index p = set.problems.front().map->param_dim();
  const Index m = set.problems.front().map->feature_dim();
  const Index n = static_cast<Index>(set.size());

  DescentSequence seq;
  seq.mode = set.mode;
  std::vector<ParamVector> states = set.initial_states;
  if (config.record_loss) seq.training_report.push_back(mean_squared_error(set, states));
  if (trace) {
    trace->stage_features.clear();
    trace->stage_ridge.clear();
  }

  Matrix hvals(m, n);
  Matrix raw(m, n);
  Matrix dx(p, n);
  for (std::size_t k = 0; k < config.stages; ++k) {
    for (Index i = 0; i < n; ++i) {
      const auto& pr = set.problems[static_cast<std::size_t>(i)];
      const FeatureVector h = (*pr.map)(states[static_cast<std::size_t>(i)]);
      if (!h.allFinite()) {
        throw DivergedError(
            fmt::format("training diverged: non-finite map output at stage {}, sample {}", k, i),
            {states[static_cast<std::size_t>(i)]}, k, static_cast<std::size_t>(i));
      }
      hvals.col(i) = h;
      raw.col(i) = generalized ? h : FeatureVector(h - pr.target);
      dx.col(i) = pr.x_opt - states[static_cast<std::size_t>(i)];
    }
    // Regress dx on -raw so the learned gain enters the update as x - R(h - y).
    const Matrix phi = -raw;
    const double ridge = config.ridge.value_or(default_ridge(raw));
    DescentStep step = solve_stage(dx, phi, generalized, ridge);
    if (trace) {
      trace->stage_features.push_back(raw);
      trace->stage_ridge.push_back(ridge);
    }

    for (Index i = 0; i < n; ++i) {
      auto& x = states[static_cast<std::size_t>(i)];
      const auto& pr = set.problems[static_cast<std::size_t>(i)];
      const FeatureVector h = hvals.col(i);
      x = generalized ? dm_update_biased(x, step, h) : dm_update(x, step, h, pr.target);
      if (!x.allFinite()) {
        throw DivergedError(
            fmt::format("training diverged: non-finite iterate at stage {}, sample {}", k, i), {x},
            k, static_cast<std::size_t>(i));
      }
    }
    seq.steps.push_back(std::move(step));
    if (config.record_loss) seq.training_report.push_back(mean_squared_error(set, states));
  }
  return seq;
}

bool report_non_increasing(const std::vector<double>& report, double slack) {
  for (std::size_t k = 1; k < report.size(); ++k) {
    if (report[k] > report[k - 1] + slack * std::max(1.0, report[k - 1])) return false;
  }
  return true;
}

}  // namespace sdm
