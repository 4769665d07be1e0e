#include "sdm/pose.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

namespace sdm::pose {

double wrap_angle(double rad) {
  double w = std::remainder(rad, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "focal lengths must be positive");
  }
  if (skew != 0.0) throw Error(ErrorCode::invalid_argument, "only zero skew is supported");
}

bool ObjectModel::non_coplanar() const {
  if (points.cols() < 4) return false;
  const Eigen::Vector3d centroid = points.rowwise().mean();
  const Eigen::Matrix3Xd centered = points.colwise() - centroid;
  Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  const auto s = svd.singularValues();
  return s[2] > 1e-9 * s[0];
}

void ObjectModel::validate() const {
  if (points.cols() < 4) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("model '{}' has {} points, need at least 4", name, points.cols()));
  }
  if (!points.allFinite()) {
    throw Error(ErrorCode::invalid_argument, fmt::format("model '{}' has non-finite points", name));
  }
}

namespace {

ObjectModel from_rows(std::string name, const std::vector<Eigen::Vector3d>& rows) {
  ObjectModel m;
  m.name = std::move(name);
  m.points.resize(3, static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) m.points.col(static_cast<Index>(i)) = rows[i];
  return m;
}

}  // namespace

ObjectModel builtin_model(const std::string& name) {
  if (name == "cube") {
    // 200 mm cube centered on the origin.
    std::vector<Eigen::Vector3d> rows;
    for (int sx : {-1, 1})
      for (int sy : {-1, 1})
        for (int sz : {-1, 1}) rows.emplace_back(100.0 * sx, 100.0 * sy, 100.0 * sz);
    return from_rows("cube", rows);
  }
  if (name == "body") {
    // Stick figure about 600 mm tall, limbs bent out of the body plane.
    return from_rows("body", {
                                 {0.0, -300.0, 0.0},     // head
                                 {0.0, -240.0, 0.0},     // neck
                                 {-80.0, -230.0, 10.0},  // left shoulder
                                 {80.0, -230.0, 10.0},   // right shoulder
                                 {-130.0, -140.0, 40.0}, // left elbow
                                 {130.0, -140.0, 40.0},  // right elbow
                                 {-150.0, -50.0, 80.0},  // left hand
                                 {150.0, -50.0, 80.0},   // right hand
                                 {-50.0, 0.0, 0.0},      // left hip
                                 {50.0, 0.0, 0.0},       // right hip
                                 {-60.0, 150.0, 30.0},   // left knee
                                 {60.0, 150.0, 30.0},    // right knee
                                 {-60.0, 300.0, -20.0},  // left foot
                                 {60.0, 300.0, -20.0},   // right foot
                             });
  }
  if (name == "face") {
    return from_rows("face", {
                                 {-70.0, -40.0, -10.0},  // left eye, outer corner
                                 {-25.0, -40.0, 0.0},    // left eye, inner corner
                                 {25.0, -40.0, 0.0},     // right eye, inner corner
                                 {70.0, -40.0, -10.0},   // right eye, outer corner
                                 {0.0, 5.0, 50.0},       // nose tip
                                 {0.0, 25.0, 25.0},      // nose base
                                 {-40.0, 60.0, 0.0},     // mouth, left corner
                                 {40.0, 60.0, 0.0},      // mouth, right corner
                                 {0.0, 110.0, -5.0},     // chin
                                 {0.0, -100.0, -5.0},    // forehead
                                 {-90.0, 0.0, -70.0},    // left ear
                                 {90.0, 0.0, -70.0},     // right ear
                             });
  }
  throw Error(ErrorCode::invalid_argument, fmt::format("unknown built-in model '{}'", name));
}

std::vector<std::string> builtin_model_names() { return {"cube", "body", "face"}; }

ObjectModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot open model file '{}'", path.string()));
  std::vector<Eigen::Vector3d> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x)) continue;
    std::string extra;
    if (!(ss >> y >> z) || (ss >> extra)) {
      throw Error(ErrorCode::parse, fmt::format("{}:{}: expected 'x y z'", path.string(), lineno));
    }
    rows.emplace_back(x, y, z);
  }
  ObjectModel m = from_rows(path.stem().string(), rows);
  m.validate();
  return m;
}

std::string format_model(const ObjectModel& model) {
  std::string out = fmt::format("# {} model, {} points, millimeters\n", model.name, model.size());
  for (Index i = 0; i < model.size(); ++i) {
    out += fmt::format("{} {} {}\n", model.points(0, i), model.points(1, i), model.points(2, i));
  }
  return out;
}

ParamVector Pose::to_params() const {
  ParamVector p(6);
  p << euler, translation;
  return p;
}

Pose Pose::from_params(const ParamVector& p) {
  if (p.size() != 6) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("pose parameters have {} entries, expected 6", p.size()));
  }
  return {p.head<3>(), p.tail<3>()};
}

Pose base_pose() { return {Eigen::Vector3d::Zero(), Eigen::Vector3d(0.0, 0.0, 2000.0)}; }

namespace {

Eigen::Matrix3d rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}
Eigen::Matrix3d rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}
Eigen::Matrix3d rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}
Eigen::Matrix3d d_rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return r;
}
Eigen::Matrix3d d_rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return r;
}
Eigen::Matrix3d d_rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return r;
}

}  // namespace

Eigen::Matrix3d euler_to_rotation(const Eigen::Vector3d& euler) {
  return rot_z(euler[0]) * rot_y(euler[1]) * rot_x(euler[2]);
}

Eigen::Vector3d rotation_to_euler(const Eigen::Matrix3d& q) {
  const double pitch = std::atan2(-q(2, 0), std::hypot(q(0, 0), q(1, 0)));
  const double yaw = std::atan2(q(1, 0), q(0, 0));
  const double roll = std::atan2(q(2, 1), q(2, 2));
  return {yaw, pitch, roll};
}

FeatureVector Projection::features() const {
  return Eigen::Map<const Vector>(normalized.data(), normalized.size());
}

Projection Projection::from_pixels(Eigen::Matrix2Xd pixels, const CameraIntrinsics& cam) {
  Projection out;
  out.normalized.resize(2, pixels.cols());
  out.normalized.row(0) = (pixels.row(0).array() - cam.u0) / cam.fx;
  out.normalized.row(1) = (pixels.row(1).array() - cam.v0) / cam.fy;
  out.pixels = std::move(pixels);
  return out;
}

Projection project(const Pose& pose, const ObjectModel& model, const CameraIntrinsics& cam) {
  cam.validate();
  const Eigen::Matrix3d q = euler_to_rotation(pose.euler);
  const Eigen::Matrix3Xd cam_pts = (q * model.points).colwise() + pose.translation;
  std::vector<Index> bad;
  for (Index i = 0; i < cam_pts.cols(); ++i) {
    if (!(cam_pts(2, i) > 0.0)) bad.push_back(i);
  }
  if (!bad.empty()) {
    std::string list;
    for (auto i : bad) list += fmt::format("{}{}", list.empty() ? "" : ",", i);
    throw InvalidProjectionError(
        fmt::format("non-positive depth for model '{}' points [{}]", model.name, list),
        std::move(bad));
  }
  Eigen::Matrix2Xd px(2, cam_pts.cols());
  // g2(g1(.)): perspective division of K (Q M + t).
  px.row(0) = cam.fx * cam_pts.row(0).array() / cam_pts.row(2).array() + cam.u0;
  px.row(1) = cam.fy * cam_pts.row(1).array() / cam_pts.row(2).array() + cam.v0;
  return Projection::from_pixels(std::move(px), cam);
}

Projection add_pixel_noise(const Projection& proj, double variance, std::mt19937_64& rng,
                           const CameraIntrinsics& cam) {
  if (!(variance >= 0.0)) throw Error(ErrorCode::invalid_argument, "noise variance must be >= 0");
  Eigen::Matrix2Xd px = proj.pixels;
  if (variance > 0.0) {
    std::normal_distribution<double> noise(0.0, std::sqrt(variance));
    for (Index i = 0; i < px.cols(); ++i) {
      px(0, i) += noise(rng);
      px(1, i) += noise(rng);
    }
  }
  return Projection::from_pixels(std::move(px), cam);
}

std::shared_ptr<const SmoothMap> projection_map(const ObjectModel& model) {
  model.validate();
  const Eigen::Matrix3Xd pts = model.points;
  const Index n = pts.cols();
  auto eval = [pts, n](const ParamVector& p) {
    const Eigen::Matrix3d q = euler_to_rotation(p.head<3>());
    const Eigen::Matrix3Xd c = (q * pts).colwise() + Eigen::Vector3d(p.tail<3>());
    FeatureVector out(2 * n);
    for (Index i = 0; i < n; ++i) {
      if (!(c(2, i) > 0.0)) {
        out[2 * i] = out[2 * i + 1] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      out[2 * i] = c(0, i) / c(2, i);
      out[2 * i + 1] = c(1, i) / c(2, i);
    }
    return out;
  };
  auto jac = [pts, n](const ParamVector& p) {
    const Eigen::Vector3d e = p.head<3>();
    const Eigen::Matrix3d rz = rot_z(e[0]), ry = rot_y(e[1]), rx = rot_x(e[2]);
    const Eigen::Matrix3d q = rz * ry * rx;
    const Eigen::Matrix3d dq[3] = {d_rot_z(e[0]) * ry * rx, rz * d_rot_y(e[1]) * rx,
                                   rz * ry * d_rot_x(e[2])};
    Matrix j(2 * n, 6);
    for (Index i = 0; i < n; ++i) {
      const Eigen::Vector3d c = q * pts.col(i) + Eigen::Vector3d(p.tail<3>());
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << 1.0 / c[2], 0.0, -c[0] / (c[2] * c[2]), 0.0, 1.0 / c[2], -c[1] / (c[2] * c[2]);
      for (int a = 0; a < 3; ++a) j.block<2, 1>(2 * i, a) = dproj * (dq[a] * pts.col(i));
      j.block<2, 3>(2 * i, 3) = dproj;
    }
    return j;
  };
  return std::make_shared<const SmoothMap>(6, 2 * n, eval, jac);
}

namespace {

GridSampling pose_grid(double angle_step_deg, double trans_step_mm) {
  GridSampling g;
  g.lo.resize(6);
  g.hi.resize(6);
  g.step.resize(6);
  for (int i = 0; i < 3; ++i) {
    g.lo[i] = deg_to_rad(-30.0);
    g.hi[i] = deg_to_rad(30.0);
    g.step[i] = deg_to_rad(angle_step_deg);
    g.lo[i + 3] = -400.0;
    g.hi[i + 3] = 400.0;
    g.step[i + 3] = trans_step_mm;
  }
  return g;
}

}  // namespace

GridSampling training_grid() { return pose_grid(10.0, 200.0); }
GridSampling test_grid() { return pose_grid(7.0, 170.0); }

DescentSequence train_pose_sdm(const ObjectModel& model, const CameraIntrinsics& cam,
                               const GridSampling& grid, const Pose& base,
                               const PoseTrainingOptions& options, const TrainerConfig& config,
                               TrainingTrace* trace) {
  const ParamVector x0 = base.to_params();
  auto poses = sample_initials(SamplingSpec{grid, options.seed}, x0);
  std::mt19937_64 rng(options.seed);
  std::vector<FeatureVector> targets;
  targets.reserve(poses.size());
  for (const auto& p : poses) {
    const Pose pose = Pose::from_params(p);
    Projection proj;
    try {
      proj = project(pose, model, cam);
    } catch (const InvalidProjectionError& e) {
      throw InvalidProjectionError(
          fmt::format("training pose (euler [{}, {}, {}] rad, t [{}, {}, {}] mm): {}",
                      pose.euler[0], pose.euler[1], pose.euler[2], pose.translation[0],
                      pose.translation[1], pose.translation[2], e.what()),
          e.offending_points());
    }
    targets.push_back(add_pixel_noise(proj, options.noise_variance, rng, cam).features());
  }
  auto set = TrainingSet::reversed(projection_map(model), x0, std::move(poses), std::move(targets));
  return train(set, config, trace);
}

PoseEstimate estimate_pose(const DescentSequence& seq, const Projection& observed,
                           const ObjectModel& model, const CameraIntrinsics& cam,
                           const Pose& base) {
  cam.validate();
  if (observed.normalized.cols() != model.size()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("observation has {} points, model '{}' has {}",
                            observed.normalized.cols(), model.name, model.size()));
  }
  const auto map = projection_map(model);
  const Trajectory traj = apply_sequence(seq, base.to_params(), *map, observed.features());
  PoseEstimate out;
  for (const auto& p : traj) out.trajectory.push_back(Pose::from_params(p));
  out.pose = out.trajectory.back();
  return out;
}

PoseError pose_error(const Pose& estimated, const Pose& truth) {
  const Eigen::Matrix3d rel =
      euler_to_rotation(estimated.euler) * euler_to_rotation(truth.euler).transpose();
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return {rad_to_deg(std::acos(c)), (estimated.translation - truth.translation).norm()};
}

}  // namespace sdm::pose
