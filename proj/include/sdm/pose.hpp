#pragma once

// Rigid pose from 2D projections of a known 3D point model. The pose is
// p = [yaw, pitch, roll, tx, ty, tz] (radians, millimeters) with Q =
// Rz(yaw) Ry(pitch) Rx(roll). Features are normalized image coordinates
// [u1, v1, u2, v2, ...] with u = (px - u0) / fx.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdm/core.hpp"
#include "sdm/trainer.hpp"

namespace sdm::pose {

constexpr double kPi = 3.14159265358979323846;
constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps to (-pi, pi].
double wrap_angle(double rad);

struct CameraIntrinsics {
  double fx = 1000.0;
  double fy = 1000.0;
  double u0 = 500.0;
  double v0 = 500.0;
  double skew = 0.0;

  void validate() const;
};

struct ObjectModel {
  std::string name;
  Eigen::Matrix3Xd points;  // millimeters, object frame

  Index size() const noexcept { return points.cols(); }
  /// True when the points span 3D (not all on one plane).
  bool non_coplanar() const;
  void validate() const;
};

/// "cube", "body" or "face".
ObjectModel builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();
/// One "x y z" triple per line; '#' starts a comment.
ObjectModel load_model(const std::filesystem::path& path);
std::string format_model(const ObjectModel& model);

struct Pose {
  Eigen::Vector3d euler = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  ParamVector to_params() const;
  static Pose from_params(const ParamVector& p);
};

/// theta = 0, t = (0, 0, 2000) mm.
Pose base_pose();

Eigen::Matrix3d euler_to_rotation(const Eigen::Vector3d& euler);
/// Inverse of euler_to_rotation for pitch in (-pi/2, pi/2).
Eigen::Vector3d rotation_to_euler(const Eigen::Matrix3d& rotation);

struct Projection {
  Eigen::Matrix2Xd pixels;
  Eigen::Matrix2Xd normalized;

  /// Column-major flattening of `normalized`.
  FeatureVector features() const;
  static Projection from_pixels(Eigen::Matrix2Xd pixels, const CameraIntrinsics& cam);
};

/// Throws InvalidProjectionError listing points with non-positive depth.
Projection project(const Pose& pose, const ObjectModel& model, const CameraIntrinsics& cam);

/// Adds i.i.d. N(0, variance) pixel noise, then renormalizes.
Projection add_pixel_noise(const Projection& proj, double variance, std::mt19937_64& rng,
                           const CameraIntrinsics& cam);

/// h(p) = flattened normalized projection, with analytic Jacobian. Points
/// with non-positive depth evaluate to NaN.
std::shared_ptr<const SmoothMap> projection_map(const ObjectModel& model);

/// +-30 deg in 10 deg steps per angle and +-400 mm in 200 mm steps per axis.
GridSampling training_grid();
/// +-30 deg in 7 deg steps and +-400 mm in 170 mm steps.
GridSampling test_grid();

struct PoseTrainingOptions {
  double noise_variance = 4.0;  // px^2
  std::uint64_t seed = 42;
};

/// Reversed-mode training from base_pose over every grid pose.
DescentSequence train_pose_sdm(const ObjectModel& model, const CameraIntrinsics& cam,
                               const GridSampling& grid, const Pose& base,
                               const PoseTrainingOptions& options, const TrainerConfig& config,
                               TrainingTrace* trace = nullptr);

struct PoseEstimate {
  Pose pose;
  std::vector<Pose> trajectory;
};

/// Applies seq from base. A trajectory leaving the valid-depth region
/// throws DivergedError carrying the partial trajectory.
PoseEstimate estimate_pose(const DescentSequence& seq, const Projection& observed,
                           const ObjectModel& model, const CameraIntrinsics& cam,
                           const Pose& base);

struct PoseError {
  double rotation_deg = 0.0;
  double translation_mm = 0.0;
};

/// Geodesic angle of Q_est Q_truth^T and Euclidean translation distance.
PoseError pose_error(const Pose& estimated, const Pose& truth);

}  // namespace sdm::pose
