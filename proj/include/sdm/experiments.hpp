#pragma once

// Experiment drivers behind the command-line tool. Each run writes its CSV
// payloads into output_dir (byte-identical for identical options) and
// returns a printable report.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdm/analytic.hpp"
#include "sdm/pose.hpp"

namespace sdm::experiments {

struct Report {
  std::string text;
  std::vector<std::string> failures;
  std::vector<std::filesystem::path> files;

  bool passed() const noexcept { return failures.empty(); }
};

struct AnalyticOptions {
  /// Empty runs the whole registry.
  std::vector<std::string> functions;
  std::size_t stages = 10;
  std::filesystem::path output_dir = ".";
};

Report run_analytic(const AnalyticOptions& options);

struct PoseOptions {
  /// Built-in names; empty selects every built-in model.
  std::vector<std::string> models;
  /// Extra models loaded from point files.
  std::vector<std::filesystem::path> model_files;
  std::size_t stages = 4;
  std::optional<double> ridge;
  double noise_variance = 4.0;
  bool train_noise = true;
  bool test_noise = true;
  /// Test poses drawn from the test grid; 0 evaluates the full grid.
  std::size_t subsample = 2000;
  std::size_t gn_max_iters = 20;
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = ".";
};

struct ErrorStats {
  double rot_mean = 0.0;
  double rot_std = 0.0;
  double trans_mean = 0.0;
  double trans_std = 0.0;
};

ErrorStats summarize_errors(const std::vector<pose::PoseError>& errors);

struct PoseModelResult {
  std::string model;
  std::size_t test_count = 0;
  ErrorStats sdm;
  ErrorStats gn_true_init;
  ErrorStats gn_base_init;
  std::vector<double> training_report;
  double sdm_ms_per_estimate = 0.0;
  double gn_ms_per_estimate = 0.0;
};

struct PoseRun {
  std::vector<PoseModelResult> models;
  /// Pooled over every model.
  PoseModelResult pooled;
  Report report;
};

PoseRun run_pose(const PoseOptions& options);

/// Cube accuracy targets: rotation, translation, translation relative to
/// Gauss-Newton started at the true pose.
constexpr double kCubeMaxRotationDeg = 2.0;
constexpr double kCubeMaxTranslationMm = 40.0;
constexpr double kCubeMaxTranslationRatio = 1.5;

struct VerifyOptions {
  std::uint64_t seed = 42;
  /// Epsilon of the 1D generic construction; unset uses the default.
  std::optional<double> epsilon;
  /// Overrides every neighborhood radius.
  std::optional<double> radius;
  int grid_per_dim = 1001;
  std::size_t draws_per_function = 20;
  std::size_t random_maps = 10;
  std::filesystem::path output_dir = ".";
};

struct CertificateRow {
  std::string suite;
  std::string name;
  /// ||R||_F (|r| in 1D).
  double gain_norm = 0.0;
  /// 2/K in 1D, (2/K) min cos(theta) otherwise.
  double bound = 0.0;
  double lipschitz = 0.0;
  double contraction_factor = 0.0;
  std::size_t samples = 0;
  bool below_bound = false;
  bool valid = false;
};

struct VerifyRun {
  std::vector<CertificateRow> rows;
  Report report;
};

VerifyRun run_verify(const VerifyOptions& options);

struct OnlineDemoOptions {
  std::uint64_t seed = 42;
  double forgetting = 1.0;
  double weight = 1.0;
  double ridge = 1e-3;
  std::filesystem::path output_dir = ".";
};

struct EquivalenceRow {
  std::size_t samples = 0;
  Index feature_dim = 0;
  double max_relative_deviation = 0.0;
  double tolerance = 0.0;
};

struct OnlineDemoRun {
  std::vector<EquivalenceRow> rows;
  Report report;
};

/// Sequential rls_ingest against the (weighted) batch ridge solution.
OnlineDemoRun run_online_demo(const OnlineDemoOptions& options);

/// argmin_W sum_i w lambda^(n-1-i) ||dx_i - W phi_i||^2 + lambda^n ridge ||W||_F^2,
/// the closed form that RLS from W = 0, P = I / ridge reproduces.
Matrix weighted_batch_coefficients(const Matrix& dx, const Matrix& phi_aug, double ridge,
                                   double forgetting, double weight);

struct TrainOptions {
  /// "analytic:<function>" or "pose:<model name or point file>".
  std::string problem;
  std::optional<std::size_t> stages;
  std::optional<double> ridge;
  double noise_variance = 4.0;
  std::uint64_t seed = 42;
  std::filesystem::path model_path;
};

Report run_train(const TrainOptions& options);

struct ApplyOptions {
  std::filesystem::path model_path;
  /// Analytic: one target y per line. Pose: one line of 2n pixel values
  /// u1 v1 u2 v2 ... per observation. Empty uses the built-in test set.
  std::filesystem::path input_path;
  std::size_t subsample = 2000;
  double noise_variance = 4.0;
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = ".";
};

Report run_apply(const ApplyOptions& options);

}  // namespace sdm::experiments
