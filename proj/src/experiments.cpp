#include "sdm/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "sdm/online.hpp"
#include "sdm/seeds.hpp"
#include "sdm/serialize.hpp"
#include "sdm/theory.hpp"

namespace sdm::experiments {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::io, fmt::format("output directory '{}' is not usable", dir.string()));
  }
}

fs::path emit(Report& report, const fs::path& dir, const std::string& name,
              const std::string& text) {
  const fs::path path = dir / name;
  write_text_file(path, text);
  report.files.push_back(path);
  return path;
}

// Plain aligned-column table; the first column is left aligned.
std::string format_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) out += "  ";
      out += c == 0 ? fmt::format("{:<{}}", cells[c], width[c])
                    : fmt::format("{:>{}}", cells[c], width[c]);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + '\n';
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
  for (const auto& row : rows) out += line(row);
  return out;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double mean = stable_mean(v);
  if (v.size() < 2) return {mean, 0.0};
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
  const double var = stable_sum(sq) / static_cast<double>(v.size() - 1);
  return {mean, std::sqrt(var)};
}

std::string pm(double mean, double sd) { return fmt::format("{:.3f} +- {:.3f}", mean, sd); }

}  // namespace

// ---------------------------------------------------------------------------
// analytic

Report run_analytic(const AnalyticOptions& options) {
  if (options.stages == 0) throw Error(ErrorCode::invalid_argument, "stages must be positive");
  std::vector<const analytic::AnalyticFunction*> fns;
  if (options.functions.empty()) {
    for (const auto& fn : analytic::registry()) fns.push_back(&fn);
  } else {
    for (const auto& name : options.functions) fns.push_back(&analytic::find_function(name));
  }
  ensure_dir(options.output_dir);

  Report report;
  std::vector<analytic::ComparisonTable> tables;
  for (const auto* fn : fns) {
    auto table = analytic::run_comparison(*fn, options.stages);
    emit(report, options.output_dir, fmt::format("analytic_{}.csv", fn->name),
         analytic::format_csv(*fn, table));
    for (auto& f : analytic::failed_invariants(table)) report.failures.push_back(std::move(f));
    tables.push_back(std::move(table));
  }

  std::vector<std::string> header{"iteration"};
  for (const auto& t : tables) {
    header.push_back(t.function + " sdm");
    header.push_back(t.function + " newton");
  }
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k <= options.stages; ++k) {
    std::vector<std::string> row{fmt::format("{}", k)};
    for (const auto& t : tables) {
      row.push_back(fmt::format("{:.3e}", t.sdm[k]));
      row.push_back(fmt::format("{:.3e}", t.newton[k]));
    }
    rows.push_back(std::move(row));
  }
  report.text = "Mean normalized residual |x_k - x*| / |x*|\n" + format_table(header, rows);
  for (const auto& t : tables) {
    std::string status;
    for (const auto& [s, n] : t.newton_status) {
      status += fmt::format(" {}={}", to_string(s), n);
    }
    report.text += fmt::format("{}: {} test targets, newton status{}\n", t.function,
                               t.num_test_points, status);
  }
  return report;
}

// ---------------------------------------------------------------------------
// pose

ErrorStats summarize_errors(const std::vector<pose::PoseError>& errors) {
  std::vector<double> rot, trans;
  for (const auto& e : errors) {
    rot.push_back(e.rotation_deg);
    trans.push_back(e.translation_mm);
  }
  ErrorStats s;
  std::tie(s.rot_mean, s.rot_std) = mean_std(rot);
  std::tie(s.trans_mean, s.trans_std) = mean_std(trans);
  return s;
}

namespace {

std::vector<pose::ObjectModel> resolve_models(const PoseOptions& options) {
  std::vector<pose::ObjectModel> models;
  const auto names = options.models.empty() && options.model_files.empty()
                         ? pose::builtin_model_names()
                         : options.models;
  for (const auto& n : names) models.push_back(pose::builtin_model(n));
  for (const auto& f : options.model_files) models.push_back(pose::load_model(f));
  return models;
}

pose::ObjectModel resolve_pose_model(const std::string& spec) {
  const auto names = pose::builtin_model_names();
  if (std::find(names.begin(), names.end(), spec) != names.end()) return pose::builtin_model(spec);
  return pose::load_model(spec);
}

std::string train_noise_stream(const std::string& model) { return "pose/train_noise/" + model; }
std::string test_noise_stream(const std::string& model) { return "pose/test_noise/" + model; }

std::vector<ParamVector> test_poses(std::size_t subsample, std::uint64_t seed) {
  auto all = sample_initials(SamplingSpec{pose::test_grid(), seed}, pose::base_pose().to_params());
  if (subsample == 0 || subsample >= all.size()) return all;
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < subsample; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(subsample);
  std::sort(idx.begin(), idx.end());
  std::vector<ParamVector> out;
  out.reserve(subsample);
  for (auto i : idx) out.push_back(std::move(all[i]));
  return out;
}

ParamVector last_finite(const std::vector<ParamVector>& iterates) {
  for (auto it = iterates.rbegin(); it != iterates.rend(); ++it) {
    if (it->allFinite()) return *it;
  }
  return iterates.front();
}

std::string pose_cells(const pose::Pose& p) {
  return fmt::format("{},{},{},{},{},{}", pose::rad_to_deg(p.euler[0]),
                     pose::rad_to_deg(p.euler[1]), pose::rad_to_deg(p.euler[2]),
                     p.translation[0], p.translation[1], p.translation[2]);
}

std::string stats_row(const std::string& model, std::size_t n, const std::string& method,
                      const ErrorStats& s) {
  return fmt::format("{},{},{},{},{},{},{}\n", model, n, method, s.rot_mean, s.rot_std,
                     s.trans_mean, s.trans_std);
}

}  // namespace

PoseRun run_pose(const PoseOptions& options) {
  if (options.stages == 0) throw Error(ErrorCode::invalid_argument, "stages must be positive");
  if (!(options.noise_variance >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "noise variance must be non-negative");
  }
  if (options.ridge && !(*options.ridge >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "ridge must be non-negative");
  }
  const auto models = resolve_models(options);
  ensure_dir(options.output_dir);
  const SeedSplitter seeds(options.seed);
  const pose::CameraIntrinsics cam;
  const pose::Pose base = pose::base_pose();
  const auto truths = test_poses(options.subsample, seeds.seed("pose/test_subset"));

  TrainerConfig config;
  config.stages = options.stages;
  config.ridge = options.ridge;
  SolverOptions gn;
  gn.max_iters = options.gn_max_iters;

  PoseRun run;
  std::string results =
      "model,truth_yaw_deg,truth_pitch_deg,truth_roll_deg,truth_tx_mm,truth_ty_mm,truth_tz_mm,"
      "est_yaw_deg,est_pitch_deg,est_roll_deg,est_tx_mm,est_ty_mm,est_tz_mm,rot_err_deg,"
      "trans_err_mm,gn_true_init_rot_err_deg,gn_true_init_trans_err_mm,gn_base_init_rot_err_deg,"
      "gn_base_init_trans_err_mm\n";
  std::vector<pose::PoseError> pooled_sdm, pooled_gt, pooled_gb;
  std::size_t sdm_diverged = 0;

  for (const auto& model : models) {
    model.validate();
    pose::PoseTrainingOptions topts;
    topts.noise_variance = options.train_noise ? options.noise_variance : 0.0;
    topts.seed = seeds.seed(train_noise_stream(model.name));
    const DescentSequence seq =
        pose::train_pose_sdm(model, cam, pose::training_grid(), base, topts, config);
    const auto map = pose::projection_map(model);
    auto noise_rng = seeds.engine(test_noise_stream(model.name));
    const double test_var = options.test_noise ? options.noise_variance : 0.0;

    std::vector<pose::PoseError> e_sdm, e_gt, e_gb;
    std::chrono::duration<double, std::milli> t_sdm{0}, t_gn{0};
    for (const auto& p : truths) {
      const pose::Pose truth = pose::Pose::from_params(p);
      const auto obs = pose::add_pixel_noise(pose::project(truth, model, cam), test_var,
                                             noise_rng, cam);
      auto t0 = std::chrono::steady_clock::now();
      pose::Pose est;
      try {
        est = pose::estimate_pose(seq, obs, model, cam, base).pose;
      } catch (const DivergedError& e) {
        ++sdm_diverged;
        est = pose::Pose::from_params(last_finite(e.partial_trajectory()));
      }
      auto t1 = std::chrono::steady_clock::now();
      const NlsProblem problem{map, obs.features(), p};
      const auto gt = gauss_newton_minimize(problem, p, gn);
      auto t2 = std::chrono::steady_clock::now();
      const auto gb = gauss_newton_minimize(problem, base.to_params(), gn);
      t_sdm += t1 - t0;
      t_gn += t2 - t1;

      e_sdm.push_back(pose::pose_error(est, truth));
      e_gt.push_back(pose::pose_error(pose::Pose::from_params(last_finite(gt.iterates)), truth));
      e_gb.push_back(pose::pose_error(pose::Pose::from_params(last_finite(gb.iterates)), truth));
      results += fmt::format("{},{},{},{},{},{},{},{},{}\n", model.name, pose_cells(truth),
                             pose_cells(est), e_sdm.back().rotation_deg,
                             e_sdm.back().translation_mm, e_gt.back().rotation_deg,
                             e_gt.back().translation_mm, e_gb.back().rotation_deg,
                             e_gb.back().translation_mm);
    }
    PoseModelResult r;
    r.model = model.name;
    r.test_count = truths.size();
    r.sdm = summarize_errors(e_sdm);
    r.gn_true_init = summarize_errors(e_gt);
    r.gn_base_init = summarize_errors(e_gb);
    r.training_report = seq.training_report;
    const double n = static_cast<double>(std::max<std::size_t>(1, truths.size()));
    r.sdm_ms_per_estimate = t_sdm.count() / n;
    r.gn_ms_per_estimate = t_gn.count() / n;
    run.models.push_back(std::move(r));
    pooled_sdm.insert(pooled_sdm.end(), e_sdm.begin(), e_sdm.end());
    pooled_gt.insert(pooled_gt.end(), e_gt.begin(), e_gt.end());
    pooled_gb.insert(pooled_gb.end(), e_gb.begin(), e_gb.end());
  }
  run.pooled.model = "pooled";
  run.pooled.test_count = pooled_sdm.size();
  run.pooled.sdm = summarize_errors(pooled_sdm);
  run.pooled.gn_true_init = summarize_errors(pooled_gt);
  run.pooled.gn_base_init = summarize_errors(pooled_gb);

  Report& report = run.report;
  std::string summary = "model,test_poses,method,rot_err_mean_deg,rot_err_std_deg,"
                        "trans_err_mean_mm,trans_err_std_mm\n";
  std::string timing = "model,sdm_ms_per_estimate,gn_ms_per_estimate\n";
  std::vector<std::vector<std::string>> rows;
  std::vector<const PoseModelResult*> all;
  for (const auto& r : run.models) all.push_back(&r);
  all.push_back(&run.pooled);
  for (const auto* r : all) {
    summary += stats_row(r->model, r->test_count, "sdm", r->sdm);
    summary += stats_row(r->model, r->test_count, "gn_true_init", r->gn_true_init);
    summary += stats_row(r->model, r->test_count, "gn_base_init", r->gn_base_init);
    const bool pooled = r == &run.pooled;
    if (!pooled) {
      timing += fmt::format("{},{:.4f},{:.4f}\n", r->model, r->sdm_ms_per_estimate,
                            r->gn_ms_per_estimate);
    }
    rows.push_back({r->model, fmt::format("{}", r->test_count), pm(r->sdm.rot_mean, r->sdm.rot_std),
                    pm(r->sdm.trans_mean, r->sdm.trans_std),
                    pm(r->gn_true_init.rot_mean, r->gn_true_init.rot_std),
                    pm(r->gn_true_init.trans_mean, r->gn_true_init.trans_std),
                    pm(r->gn_base_init.rot_mean, r->gn_base_init.rot_std),
                    pm(r->gn_base_init.trans_mean, r->gn_base_init.trans_std),
                    pooled ? "" : fmt::format("{:.4f}", r->sdm_ms_per_estimate),
                    pooled ? "" : fmt::format("{:.4f}", r->gn_ms_per_estimate)});
  }
  emit(report, options.output_dir, "pose_results.csv", results);
  emit(report, options.output_dir, "pose_summary.csv", summary);
  // Wall-clock figures vary run to run, so they live apart from the payloads.
  write_text_file(options.output_dir / "pose_timing.csv", timing);

  report.text = format_table({"model", "n", "sdm rot deg", "sdm trans mm", "gn(true) rot deg",
                              "gn(true) trans mm", "gn(base) rot deg", "gn(base) trans mm",
                              "sdm ms", "gn ms"},
                             rows);
  if (sdm_diverged > 0) {
    report.text += fmt::format("{} sdm estimates left the valid-depth region\n", sdm_diverged);
  }

  for (const auto& r : run.models) {
    if (!report_non_increasing(r.training_report)) {
      report.failures.push_back(r.model + ": training loss increases across stages");
    }
    if (r.model != "cube") continue;
    if (!(r.sdm.rot_mean <= kCubeMaxRotationDeg)) {
      report.failures.push_back(fmt::format("cube: mean rotation error {:.3f} deg exceeds {} deg",
                                            r.sdm.rot_mean, kCubeMaxRotationDeg));
    }
    if (!(r.sdm.trans_mean <= kCubeMaxTranslationMm)) {
      report.failures.push_back(fmt::format("cube: mean translation error {:.3f} mm exceeds {} mm",
                                            r.sdm.trans_mean, kCubeMaxTranslationMm));
    }
    const double limit = kCubeMaxTranslationRatio * r.gn_true_init.trans_mean;
    if (!(r.sdm.trans_mean <= limit)) {
      report.failures.push_back(fmt::format(
          "cube: mean translation error {:.3f} mm exceeds {}x gauss-newton ({:.3f} mm)",
          r.sdm.trans_mean, kCubeMaxTranslationRatio, limit));
    }
  }
  return run;
}

// ---------------------------------------------------------------------------
// verify

namespace {

struct AnchoredFunction {
  std::string name;
  double anchor;
  double radius;
};

std::shared_ptr<const SmoothMap> perturbed_linear_map(const Matrix& a, double amplitude) {
  const Index p = a.cols();
  return std::make_shared<const SmoothMap>(
      p, a.rows(),
      [a, amplitude](const ParamVector& x) -> FeatureVector {
        return a * x + amplitude * x.array().sin().matrix();
      },
      [a, amplitude](const ParamVector& x) -> Matrix {
        Matrix j = a;
        j.diagonal().array() += amplitude * x.array().cos();
        return j;
      });
}

Matrix random_well_conditioned(Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> sv(0.5, 2.0);
  Matrix g1(p, p), g2(p, p);
  for (Index i = 0; i < p * p; ++i) {
    g1.data()[i] = gauss(rng);
    g2.data()[i] = gauss(rng);
  }
  const Matrix u = Eigen::HouseholderQR<Matrix>(g1).householderQ();
  const Matrix v = Eigen::HouseholderQR<Matrix>(g2).householderQ();
  Vector s(p);
  for (Index i = 0; i < p; ++i) s[i] = sv(rng);
  return u * s.asDiagonal() * v.transpose();
}

}  // namespace

VerifyRun run_verify(const VerifyOptions& options) {
  if (options.grid_per_dim < 3) throw Error(ErrorCode::invalid_argument, "grid must be >= 3");
  if (options.radius && !(std::isfinite(*options.radius) && *options.radius >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "radius must be finite and non-negative");
  }
  ensure_dir(options.output_dir);
  const SeedSplitter seeds(options.seed);
  VerifyRun run;

  // One-dimensional generic maps r with |r| < 2/K.
  const std::vector<AnchoredFunction> fns{
      {"linear", 1.0, 1.0}, {"cube", 1.0, 0.5}, {"exp", 0.0, 0.5}, {"erf", 0.0, 2.0}};
  for (const auto& af : fns) {
    const auto& fn = analytic::find_function(af.name);
    const auto map = analytic::make_map(fn);
    Neighborhood nb;
    nb.anchor = Vector::Constant(1, af.anchor);
    nb.radius = options.radius.value_or(af.radius);
    nb.grid_per_dim = options.grid_per_dim;
    nb.seed = seeds.seed("verify/nbhd/" + af.name);
    const double k = lipschitz_anchored(*map, nb);
    const auto sign = monotone_anchored_1d(*map, nb);
    if (sign == MonotoneSign::none) {
      run.report.failures.push_back(af.name + ": not monotone on the neighborhood");
      continue;
    }
    const double s = sign == MonotoneSign::increasing ? 1.0 : -1.0;
    const FeatureVector y = (*map)(nb.anchor);
    auto rng = seeds.engine("verify/scalar/" + af.name);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::pair<std::string, double>> gains;
    for (std::size_t d = 0; d < options.draws_per_function; ++d) {
      double u = 0.0;
      while (u == 0.0) u = unit(rng);
      gains.emplace_back(fmt::format("{}@{} draw {}", af.name, af.anchor, d), s * u * 2.0 / k);
    }
    gains.emplace_back(fmt::format("{}@{} generic", af.name, af.anchor),
                       generic_dm_1d(*map, nb, options.epsilon));
    for (const auto& [name, r] : gains) {
      DescentStep step{Matrix::Constant(1, 1, r), Vector::Zero(1)};
      const auto cert = contraction_certify(*map, step, nb, y);
      CertificateRow row{"scalar", name, std::abs(r), 2.0 / k, k, cert.contraction_factor,
                         cert.samples_checked, std::abs(r) < 2.0 / k, cert.valid()};
      if (!row.valid) run.report.failures.push_back(name + ": contraction certificate invalid");
      run.rows.push_back(std::move(row));
    }
  }

  // Multivariate maps, gains scaled under (2/K) min cos(theta).
  auto rng = seeds.engine("verify/multivariate");
  std::normal_distribution<double> gauss;
  for (std::size_t i = 0; i < options.random_maps; ++i) {
    const Index p = i % 2 == 0 ? 2 : 3;
    const bool nonlinear = (i / 2) % 2 == 1;
    const Matrix a = random_well_conditioned(p, rng);
    const auto map = perturbed_linear_map(a, nonlinear ? 0.15 : 0.0);
    Neighborhood nb;
    nb.anchor.resize(p);
    for (Index j = 0; j < p; ++j) nb.anchor[j] = gauss(rng);
    nb.radius = options.radius.value_or(1.0);
    nb.grid_per_dim = p == 2 ? 101 : 31;
    nb.seed = seeds.seed(fmt::format("verify/nbhd/map{}", i));
    const Matrix r0 = map->jacobian(nb.anchor).inverse();
    const FeatureVector y = (*map)(nb.anchor);
    const std::string base = fmt::format("{}d {} map {}", p, nonlinear ? "nonlinear" : "linear", i);
    const auto probe = frobenius_dm_bound(*map, r0, nb);
    for (double frac : {0.5, 0.9, 0.99}) {
      const Matrix r = r0 * (frac * probe.bound / probe.frobenius);
      const auto fb = frobenius_dm_bound(*map, r, nb);
      const auto cert = contraction_certify(*map, DescentStep{r, Vector::Zero(p)}, nb, y);
      CertificateRow row{"multivariate",        fmt::format("{} at {}x bound", base, frac),
                         fb.frobenius,      fb.bound,
                         fb.lipschitz,      cert.contraction_factor,
                         cert.samples_checked, fb.satisfied,
                         cert.valid()};
      if (!row.below_bound) run.report.failures.push_back(row.name + ": gain not below bound");
      if (row.below_bound && !row.valid) {
        run.report.failures.push_back(row.name + ": contraction certificate invalid");
      }
      run.rows.push_back(std::move(row));
    }
  }

  std::string csv =
      "suite,name,gain_norm,bound,lipschitz,contraction_factor,samples,below_bound,valid\n";
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : run.rows) {
    csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.suite, r.name, r.gain_norm, r.bound,
                       r.lipschitz, r.contraction_factor, r.samples, r.below_bound ? 1 : 0,
                       r.valid ? 1 : 0);
    rows.push_back({r.name, fmt::format("{:.6f}", r.gain_norm), fmt::format("{:.6f}", r.bound),
                    fmt::format("{:.6f}", r.contraction_factor), fmt::format("{}", r.samples),
                    r.valid ? "valid" : "INVALID"});
  }
  emit(run.report, options.output_dir, "verify_certificates.csv", csv);
  run.report.text =
      format_table({"certificate", "|R|", "bound", "contraction", "samples", "status"}, rows);
  return run;
}

// ---------------------------------------------------------------------------
// online

Matrix weighted_batch_coefficients(const Matrix& dx, const Matrix& phi_aug, double ridge,
                                   double forgetting, double weight) {
  const Index n = phi_aug.cols();
  Matrix gram = Matrix::Identity(phi_aug.rows(), phi_aug.rows()) *
                (ridge * std::pow(forgetting, static_cast<double>(n)));
  Matrix cross = Matrix::Zero(dx.rows(), phi_aug.rows());
  for (Index i = 0; i < n; ++i) {
    const double c = weight * std::pow(forgetting, static_cast<double>(n - 1 - i));
    gram.noalias() += c * phi_aug.col(i) * phi_aug.col(i).transpose();
    cross.noalias() += c * dx.col(i) * phi_aug.col(i).transpose();
  }
  // W gram = cross, gram symmetric positive definite.
  return gram.ldlt().solve(cross.transpose()).transpose();
}

OnlineDemoRun run_online_demo(const OnlineDemoOptions& options) {
  OnlineConfig config;
  config.forgetting = options.forgetting;
  config.weight = options.weight;
  config.validate();
  if (!(options.ridge > 0.0)) throw Error(ErrorCode::invalid_argument, "ridge must be positive");
  ensure_dir(options.output_dir);
  const SeedSplitter seeds(options.seed);
  const bool plain = options.forgetting == 1.0 && options.weight == 1.0;
  const std::vector<std::size_t> sizes =
      options.forgetting == 1.0 ? std::vector<std::size_t>{10, 50, 200}
                                : std::vector<std::size_t>{5, 10, 20};
  const double tolerance = options.forgetting == 1.0 ? 1e-6 : 1e-8;
  constexpr Index p = 3;

  OnlineDemoRun run;
  for (Index m : {Index{3}, Index{8}}) {
    for (std::size_t n : sizes) {
      auto rng = seeds.engine(fmt::format("online/m{}/n{}", m, n));
      std::normal_distribution<double> gauss;
      Matrix a(m, p);
      for (Index i = 0; i < a.size(); ++i) a.data()[i] = gauss(rng);
      const SmoothMap map(p, m, [a](const ParamVector& x) -> FeatureVector {
        const Vector z = a * x;
        return z + 0.1 * z.array().sin().matrix();
      });
      DescentSequence seq;
      seq.mode = SequenceMode::reversed;
      seq.steps.push_back(DescentStep::zero(p, m));
      OnlineState state = init_online_ridge(seq, options.ridge, config);
      Matrix phis(m + 1, static_cast<Index>(n)), dxs(p, static_cast<Index>(n));
      Index col = 0;
      for (std::size_t s = 0; s < n; ++s) {
        ParamVector x_opt(p), x0(p);
        for (Index j = 0; j < p; ++j) {
          x_opt[j] = gauss(rng);
          x0[j] = x_opt[j] + 0.5 * gauss(rng);
        }
        rls_ingest(state, x_opt, x0, map, [&](std::size_t, const Vector& phi, const Vector& dx) {
          phis.col(col) = phi;
          dxs.col(col) = dx;
        });
        ++col;
      }
      const Matrix oracle =
          plain ? solve_stage(dxs, phis, false, options.ridge).gain
                : weighted_batch_coefficients(dxs, phis, options.ridge, options.forgetting,
                                              options.weight);
      const double dev = (state.coefficients()[0] - oracle).norm() / oracle.norm();
      run.rows.push_back({n, m, dev, tolerance});
      if (!(dev <= tolerance)) {
        run.report.failures.push_back(
            fmt::format("n={} m={}: relative deviation {:.3e} exceeds {:.0e}", n, m, dev, tolerance));
      }
    }
  }
  std::string csv = "samples,feature_dim,forgetting,weight,max_relative_deviation,tolerance\n";
  std::vector<std::vector<std::string>> rows;
  double worst = 0.0;
  for (const auto& r : run.rows) {
    csv += fmt::format("{},{},{},{},{:.6e},{}\n", r.samples, r.feature_dim, options.forgetting,
                       options.weight, r.max_relative_deviation, r.tolerance);
    rows.push_back({fmt::format("{}", r.samples), fmt::format("{}", r.feature_dim),
                    fmt::format("{:.3e}", r.max_relative_deviation),
                    fmt::format("{:.0e}", r.tolerance)});
    worst = std::max(worst, r.max_relative_deviation);
  }
  emit(run.report, options.output_dir, "online_equivalence.csv", csv);
  run.report.text = fmt::format("RLS vs {} batch solution (forgetting {}, weight {})\n",
                                plain ? "plain" : "weighted", options.forgetting, options.weight) +
                    format_table({"n", "m", "rel. deviation", "tolerance"}, rows) +
                    fmt::format("max relative deviation {:.3e}\n", worst);
  return run;
}

// ---------------------------------------------------------------------------
// train / apply

namespace {

struct ProblemSpec {
  enum class Kind { analytic, pose } kind;
  std::string name;
};

ProblemSpec parse_problem(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string name = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (name.empty()) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("problem '{}' must be analytic:<function> or pose:<model>", text));
  }
  if (kind == "analytic") return {ProblemSpec::Kind::analytic, name};
  if (kind == "pose") return {ProblemSpec::Kind::pose, name};
  throw Error(ErrorCode::invalid_argument, fmt::format("unknown problem kind '{}'", kind));
}

std::string report_text(const DescentSequence& seq) {
  std::string out = "stage  training loss\n";
  for (std::size_t k = 0; k < seq.training_report.size(); ++k) {
    out += fmt::format("{:>5}  {:.6e}\n", k, seq.training_report[k]);
  }
  return out;
}

std::vector<std::vector<double>> read_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot open input '{}'", path.string()));
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<double> row;
    std::string tok;
    while (ss >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) {
        throw Error(ErrorCode::parse,
                    fmt::format("{}:{}: bad number '{}'", path.string(), lineno, tok));
      }
      row.push_back(v);
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Report run_train(const TrainOptions& options) {
  const ProblemSpec spec = parse_problem(options.problem);
  if (options.model_path.empty()) throw Error(ErrorCode::invalid_argument, "model path is required");
  if (options.stages && *options.stages == 0) {
    throw Error(ErrorCode::invalid_argument, "stages must be positive");
  }
  Report report;
  DescentSequence seq;
  if (spec.kind == ProblemSpec::Kind::analytic) {
    const auto& fn = analytic::find_function(spec.name);
    fn.validate();
    TrainerConfig config;
    config.stages = options.stages.value_or(10);
    config.ridge = options.ridge.value_or(0.0);
    seq = train(analytic::build_training_set(fn), config);
  } else {
    if (!(options.noise_variance >= 0.0)) {
      throw Error(ErrorCode::invalid_argument, "noise variance must be non-negative");
    }
    const auto model = resolve_pose_model(spec.name);
    TrainerConfig config;
    config.stages = options.stages.value_or(4);
    config.ridge = options.ridge;
    pose::PoseTrainingOptions topts;
    topts.noise_variance = options.noise_variance;
    topts.seed = SeedSplitter(options.seed).seed(train_noise_stream(model.name));
    seq = pose::train_pose_sdm(model, {}, pose::training_grid(), pose::base_pose(), topts, config);
  }
  if (const auto parent = options.model_path.parent_path(); !parent.empty()) ensure_dir(parent);
  save_sequence(options.model_path, seq, options.problem);
  report.files.push_back(options.model_path);
  if (!report_non_increasing(seq.training_report)) {
    report.failures.push_back("training loss increases across stages");
  }
  report.text = fmt::format("trained {} ({} stages, mode {})\n", options.problem,
                            seq.stage_count(), to_string(seq.mode)) +
                report_text(seq);
  return report;
}

Report run_apply(const ApplyOptions& options) {
  const StoredSequence stored = load_sequence(options.model_path);
  const ProblemSpec spec = parse_problem(stored.problem);
  ensure_dir(options.output_dir);
  Report report;
  const DescentSequence& seq = stored.sequence;

  if (spec.kind == ProblemSpec::Kind::analytic) {
    const auto& fn = analytic::find_function(spec.name);
    const auto map = analytic::make_map(fn);
    if (seq.param_dim() != 1 || seq.feature_dim() != 1) {
      throw Error(ErrorCode::contract_violation, "model dimensions do not match the function");
    }
    std::vector<double> ys;
    if (options.input_path.empty()) {
      ys = analytic::test_targets(fn);
    } else {
      for (const auto& row : read_rows(options.input_path)) {
        ys.insert(ys.end(), row.begin(), row.end());
      }
    }
    std::string csv = "y,x_est,x_true,normalized_residual\n";
    std::vector<double> residuals;
    for (double y : ys) {
      const auto traj = apply_sequence(seq, Vector::Constant(1, fn.x0), *map, Vector::Constant(1, y));
      const double x = traj.back()[0];
      if (fn.inverse_domain.contains(y)) {
        const double truth = fn.h_inverse(y);
        const double res = std::abs(x - truth) / std::abs(truth);
        residuals.push_back(res);
        csv += fmt::format("{},{},{},{}\n", y, x, truth, res);
      } else {
        csv += fmt::format("{},{},,\n", y, x);
      }
    }
    emit(report, options.output_dir, fmt::format("apply_analytic_{}.csv", fn.name), csv);
    report.text = fmt::format("applied {} to {} targets, mean normalized residual {:.3e}\n",
                              stored.problem, ys.size(),
                              residuals.empty() ? 0.0 : stable_mean(residuals));
    return report;
  }

  const auto model = resolve_pose_model(spec.name);
  const pose::CameraIntrinsics cam;
  const pose::Pose base = pose::base_pose();
  if (seq.param_dim() != 6 || seq.feature_dim() != 2 * model.size()) {
    throw Error(ErrorCode::contract_violation, "model file does not match the pose model");
  }
  std::string csv;
  if (!options.input_path.empty()) {
    csv = "observation,est_yaw_deg,est_pitch_deg,est_roll_deg,est_tx_mm,est_ty_mm,est_tz_mm\n";
    const auto rows = read_rows(options.input_path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Index>(rows[i].size()) != 2 * model.size()) {
        throw Error(ErrorCode::parse, fmt::format("observation {} has {} values, expected {}", i,
                                                  rows[i].size(), 2 * model.size()));
      }
      const Eigen::Matrix2Xd px = Eigen::Map<const Eigen::Matrix2Xd>(rows[i].data(), 2, model.size());
      const auto est = pose::estimate_pose(seq, pose::Projection::from_pixels(px, cam), model, cam, base);
      csv += fmt::format("{},{}\n", i, pose_cells(est.pose));
    }
    report.text = fmt::format("estimated {} poses for {}\n", rows.size(), model.name);
  } else {
    if (!(options.noise_variance >= 0.0)) {
      throw Error(ErrorCode::invalid_argument, "noise variance must be non-negative");
    }
    const SeedSplitter seeds(options.seed);
    const auto truths = test_poses(options.subsample, seeds.seed("pose/test_subset"));
    auto rng = seeds.engine(test_noise_stream(model.name));
    csv = "truth_yaw_deg,truth_pitch_deg,truth_roll_deg,truth_tx_mm,truth_ty_mm,truth_tz_mm,"
          "est_yaw_deg,est_pitch_deg,est_roll_deg,est_tx_mm,est_ty_mm,est_tz_mm,rot_err_deg,"
          "trans_err_mm\n";
    std::vector<pose::PoseError> errors;
    for (const auto& p : truths) {
      const auto truth = pose::Pose::from_params(p);
      const auto obs = pose::add_pixel_noise(pose::project(truth, model, cam),
                                             options.noise_variance, rng, cam);
      const auto est = pose::estimate_pose(seq, obs, model, cam, base).pose;
      errors.push_back(pose::pose_error(est, truth));
      csv += fmt::format("{},{},{},{}\n", pose_cells(truth), pose_cells(est),
                         errors.back().rotation_deg, errors.back().translation_mm);
    }
    const auto s = summarize_errors(errors);
    report.text = fmt::format("applied {} to {} test poses: rotation {} deg, translation {} mm\n",
                              stored.problem, truths.size(), pm(s.rot_mean, s.rot_std),
                              pm(s.trans_mean, s.trans_std));
  }
  emit(report, options.output_dir, fmt::format("apply_pose_{}.csv", model.name), csv);
  return report;
}

}  // namespace sdm::experiments
