#include "sdm/analytic.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace sdm::analytic {

namespace {

constexpr double kTwoOverSqrtPi = 1.12837916709551257390;

}  // namespace

double erf_inverse(double y) {
  if (!(y > -1.0 && y < 1.0)) {
    throw Error(ErrorCode::invalid_argument, fmt::format("erf inverse undefined at {}", y));
  }
  double lo = -6.0, hi = 6.0;
  while (true) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (std::erf(mid) < y) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::abs(std::erf(lo) - y) <= std::abs(std::erf(hi) - y) ? lo : hi;
}

std::vector<double> sample_range(const Interval& range, double step) {
  if (!(step > 0.0) || !(range.hi >= range.lo)) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("bad range [{}, {}] with step {}", range.lo, range.hi, step));
  }
  const std::size_t n = grid_axis_count(range.lo, range.hi, step);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = range.lo + static_cast<double>(i) * step;
  return out;
}

void AnalyticFunction::validate() const {
  if (!h || !h_prime || !h_double_prime || !h_inverse) {
    throw Error(ErrorCode::contract_violation, fmt::format("function '{}' is incomplete", name));
  }
  if (!(test_step > 0.0 && test_step < train_step)) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("function '{}': test step {} must be positive and finer than train "
                            "step {}",
                            name, test_step, train_step));
  }
  if (!inverse_domain.contains(train_range.lo) || !inverse_domain.contains(train_range.hi)) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("function '{}': range [{}, {}] leaves the inverse domain [{}, {}]",
                            name, train_range.lo, train_range.hi, inverse_domain.lo,
                            inverse_domain.hi));
  }
  const auto ys = sample_range(train_range, train_step);
  double prev_x = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double x = h_inverse(ys[i]);
    if (std::abs(h(x) - ys[i]) > 1e-10 * std::max(1.0, std::abs(ys[i]))) {
      throw Error(ErrorCode::contract_violation,
                  fmt::format("function '{}': h(h_inverse({})) = {}", name, ys[i], h(x)));
    }
    if (i > 0 && !(x > prev_x)) {
      throw Error(ErrorCode::contract_violation,
                  fmt::format("function '{}' is not strictly increasing near y = {}", name, ys[i]));
    }
    prev_x = x;
  }
}

const std::vector<AnalyticFunction>& registry() {
  static const std::vector<AnalyticFunction> fns = [] {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<AnalyticFunction> v;
    v.push_back({"linear", "2x", [](double x) { return 2.0 * x; }, [](double) { return 2.0; },
                 [](double) { return 0.0; }, [](double y) { return 0.5 * y; }, {-inf, inf},
                 {1.0, 4.0}, 0.1, 0.025, 0.0, true});
    v.push_back({"cube", "x^3", [](double x) { return x * x * x; },
                 [](double x) { return 3.0 * x * x; }, [](double x) { return 6.0 * x; },
                 [](double y) { return std::cbrt(y); }, {-inf, inf}, {0.3, 3.0}, 0.05, 0.0125, 0.0,
                 false});
    v.push_back({"exp", "e^x", [](double x) { return std::exp(x); },
                 [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); },
                 [](double y) { return std::log(y); }, {std::numeric_limits<double>::min(), inf},
                 {1.5, 4.0}, 0.05, 0.0125, -1.0, false});
    v.push_back({"erf", "erf(x)", [](double x) { return std::erf(x); },
                 [](double x) { return kTwoOverSqrtPi * std::exp(-x * x); },
                 [](double x) { return -2.0 * x * kTwoOverSqrtPi * std::exp(-x * x); },
                 [](double y) { return erf_inverse(y); }, {-1.0 + 1e-15, 1.0 - 1e-15}, {0.2, 0.9},
                 0.02, 0.005, 0.0, false});
    return v;
  }();
  return fns;
}

const AnalyticFunction& find_function(const std::string& name) {
  for (const auto& fn : registry()) {
    if (fn.name == name) return fn;
  }
  throw Error(ErrorCode::invalid_argument, fmt::format("unknown analytic function '{}'", name));
}

std::shared_ptr<const SmoothMap> make_map(const AnalyticFunction& fn) {
  auto h = fn.h, dh = fn.h_prime, ddh = fn.h_double_prime;
  return std::make_shared<const SmoothMap>(
      1, 1, [h](const ParamVector& x) { return Vector::Constant(1, h(x[0])); },
      [dh](const ParamVector& x) { return Matrix::Constant(1, 1, dh(x[0])); },
      [ddh](const ParamVector& x) { return std::vector<Matrix>{Matrix::Constant(1, 1, ddh(x[0]))}; });
}

TrainingSet build_training_set(const AnalyticFunction& fn) {
  if (!fn.inverse_domain.contains(fn.train_range.lo) ||
      !fn.inverse_domain.contains(fn.train_range.hi)) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("function '{}': training range outside the inverse domain", fn.name));
  }
  std::vector<ParamVector> x_opts;
  std::vector<FeatureVector> targets;
  for (double y : sample_range(fn.train_range, fn.train_step)) {
    x_opts.push_back(Vector::Constant(1, fn.h_inverse(y)));
    targets.push_back(Vector::Constant(1, y));
  }
  return TrainingSet::reversed(make_map(fn), Vector::Constant(1, fn.x0), std::move(x_opts),
                               std::move(targets));
}

std::vector<double> test_targets(const AnalyticFunction& fn) {
  if (!(fn.test_step < fn.train_step)) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("function '{}': test step must be finer than train step", fn.name));
  }
  return sample_range(fn.train_range, fn.test_step);
}

ComparisonTable run_comparison(const AnalyticFunction& fn, std::size_t stages) {
  fn.validate();
  if (stages == 0) throw Error(ErrorCode::invalid_argument, "stages must be positive");
  TrainerConfig config;
  config.stages = stages;
  config.ridge = 0.0;
  const auto set = build_training_set(fn);
  const DescentSequence seq = train(set, config);
  const auto map = make_map(fn);
  const ParamVector x0 = Vector::Constant(1, fn.x0);

  SolverOptions opts;
  opts.max_iters = stages;

  const auto ys = test_targets(fn);
  std::vector<std::vector<double>> sdm_res(stages + 1), newton_res(stages + 1);
  ComparisonTable table;
  table.function = fn.name;
  table.stages = stages;
  table.num_test_points = ys.size();
  table.training_report = seq.training_report;

  for (double y : ys) {
    const double x_opt = fn.h_inverse(y);
    const double scale = std::abs(x_opt);
    const FeatureVector target = Vector::Constant(1, y);

    const Trajectory traj = apply_sequence(seq, x0, *map, target);
    for (std::size_t k = 0; k <= stages; ++k) {
      sdm_res[k].push_back(std::abs(traj[k][0] - x_opt) / scale);
    }

    const NlsProblem problem{map, target, Vector::Constant(1, x_opt)};
    const DescentRun run = newton_minimize(problem, x0, opts);
    ++table.newton_status[run.status];
    for (std::size_t k = 0; k <= stages; ++k) {
      double r;
      if (k < run.iterates.size()) {
        r = std::min(kResidualCap, std::abs(run.iterates[k][0] - x_opt) / scale);
        if (!std::isfinite(r)) r = kResidualCap;
      } else if (run.status == RunStatus::diverged) {
        r = kResidualCap;
      } else {
        r = std::abs(run.iterates.back()[0] - x_opt) / scale;
      }
      newton_res[k].push_back(r);
    }
  }
  for (std::size_t k = 0; k <= stages; ++k) {
    table.sdm.push_back(stable_mean(sdm_res[k]));
    table.newton.push_back(stable_mean(newton_res[k]));
  }
  return table;
}

namespace {

constexpr double kFloor = 1e-12;

bool newton_all_converged(const ComparisonTable& t) {
  auto it = t.newton_status.find(RunStatus::converged);
  return it != t.newton_status.end() && it->second == t.num_test_points;
}

}  // namespace

std::vector<std::string> failed_invariants(const ComparisonTable& t) {
  std::vector<std::string> failed;
  const double first = t.sdm.at(1), last = t.sdm.back();
  if (!(last <= first + kFloor)) failed.push_back(t.function + ": sdm final above stage 1");
  if (!(last < 1e-2)) failed.push_back(t.function + ": sdm final residual not below 1e-2");
  for (std::size_t k = 1; k < t.sdm.size(); ++k) {
    if (t.sdm[k] > t.sdm[k - 1] + 1e-9 * std::max(1.0, t.sdm[k - 1])) {
      failed.push_back(fmt::format("{}: sdm mean residual increases at stage {}", t.function, k));
      break;
    }
  }
  if (newton_all_converged(t) && last > kFloor && !(t.newton.back() < last)) {
    failed.push_back(t.function + ": converged newton not more accurate than sdm");
  }
  return failed;
}

std::string format_csv(const AnalyticFunction& fn, const ComparisonTable& t) {
  std::string out;
  out += fmt::format("# function = {}\n", fn.name);
  out += fmt::format("# h = {}\n", fn.formula);
  out += fmt::format("# train_range = [{}, {}]\n", fn.train_range.lo, fn.train_range.hi);
  out += fmt::format("# train_step = {}\n", fn.train_step);
  out += fmt::format("# test_step = {}\n", fn.test_step);
  out += fmt::format("# x0 = {}\n", fn.x0);
  out += fmt::format("# stages = {}\n", t.stages);
  out += fmt::format("# registry_substitution = {}\n", fn.substitution);
  std::string status;
  for (const auto& [s, n] : t.newton_status) {
    status += fmt::format("{}{}:{}", status.empty() ? "" : " ", to_string(s), n);
  }
  out += fmt::format("# newton_status = {}\n", status);
  out += "method,iteration,mean_normalized_residual,num_test_points\n";
  for (std::size_t k = 0; k < t.sdm.size(); ++k) {
    out += fmt::format("sdm,{},{},{}\n", k, t.sdm[k], t.num_test_points);
  }
  for (std::size_t k = 0; k < t.newton.size(); ++k) {
    out += fmt::format("newton,{},{},{}\n", k, t.newton[k], t.num_test_points);
  }
  return out;
}

}  // namespace sdm::analytic
