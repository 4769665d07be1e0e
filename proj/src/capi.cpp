#include "sdm/sdm.h"

#include <cmath>
#include <limits>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "sdm/analytic.hpp"
#include "sdm/experiments.hpp"
#include "sdm/online.hpp"
#include "sdm/pose.hpp"
#include "sdm/serialize.hpp"

struct sdm_sequence {
  sdm::DescentSequence seq;
  std::string problem;
};

struct sdm_online {
  sdm::OnlineState state;
};

struct sdm_report {
  sdm::experiments::Report report;
  std::vector<std::string> files;
};

namespace {

thread_local std::string g_last_error;

class CallbackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

sdm_status status_of(sdm::ErrorCode code) {
  using sdm::ErrorCode;
  switch (code) {
    case ErrorCode::contract_violation: return SDM_ERR_CONTRACT;
    case ErrorCode::invalid_argument: return SDM_ERR_INVALID_ARGUMENT;
    case ErrorCode::diverged: return SDM_ERR_DIVERGED;
    case ErrorCode::rank_deficient: return SDM_ERR_RANK_DEFICIENT;
    case ErrorCode::degenerate_neighborhood: return SDM_ERR_DEGENERATE_NEIGHBORHOOD;
    case ErrorCode::precondition: return SDM_ERR_PRECONDITION;
    case ErrorCode::invalid_epsilon: return SDM_ERR_INVALID_EPSILON;
    case ErrorCode::invalid_projection: return SDM_ERR_INVALID_PROJECTION;
    case ErrorCode::numerical_breakdown: return SDM_ERR_NUMERICAL;
    case ErrorCode::io: return SDM_ERR_IO;
    case ErrorCode::parse: return SDM_ERR_PARSE;
  }
  return SDM_ERR_INTERNAL;
}

template <class F>
sdm_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return SDM_OK;
  } catch (const CallbackError& e) {
    g_last_error = e.what();
    return SDM_ERR_CALLBACK;
  } catch (const sdm::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SDM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SDM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SDM_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw sdm::Error(sdm::ErrorCode::invalid_argument, what);
}

sdm::SmoothMap wrap_map(sdm_map_fn fn, void* user, sdm::Index p, sdm::Index m) {
  require(fn != nullptr, "map callback is null");
  return sdm::SmoothMap(p, m, [fn, user, p, m](const sdm::ParamVector& x) {
    sdm::FeatureVector out(m);
    if (fn(x.data(), static_cast<size_t>(p), out.data(), static_cast<size_t>(m), user) != 0) {
      throw CallbackError("map callback reported failure");
    }
    return out;
  });
}

std::optional<double> opt_real(double v) {
  return std::isnan(v) ? std::nullopt : std::optional<double>(v);
}

std::string opt_str(const char* s, const char* fallback = "") { return s ? s : fallback; }

sdm_status finish(sdm::experiments::Report&& rep, sdm_report** out) {
  auto r = std::make_unique<sdm_report>();
  for (const auto& f : rep.files) r->files.push_back(f.string());
  r->report = std::move(rep);
  *out = r.release();
  return SDM_OK;
}

sdm::pose::ObjectModel model_by_spec(const std::string& spec) {
  for (const auto& n : sdm::pose::builtin_model_names()) {
    if (n == spec) return sdm::pose::builtin_model(spec);
  }
  return sdm::pose::load_model(spec);
}

}  // namespace

extern "C" {

const char* sdm_version(void) { return "1.0.0"; }

const char* sdm_status_string(sdm_status status) {
  switch (status) {
    case SDM_OK: return "ok";
    case SDM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SDM_ERR_CONTRACT: return "contract violation";
    case SDM_ERR_DIVERGED: return "diverged";
    case SDM_ERR_RANK_DEFICIENT: return "rank deficient";
    case SDM_ERR_DEGENERATE_NEIGHBORHOOD: return "degenerate neighborhood";
    case SDM_ERR_PRECONDITION: return "precondition failed";
    case SDM_ERR_INVALID_EPSILON: return "invalid epsilon";
    case SDM_ERR_INVALID_PROJECTION: return "invalid projection";
    case SDM_ERR_NUMERICAL: return "numerical breakdown";
    case SDM_ERR_IO: return "i/o error";
    case SDM_ERR_PARSE: return "parse error";
    case SDM_ERR_CALLBACK: return "callback failure";
    case SDM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* sdm_last_error(void) { return g_last_error.c_str(); }

sdm_status sdm_sequence_create(sdm_mode mode, size_t p, size_t m, size_t stages,
                               const double* gains, const double* biases, sdm_sequence** out) {
  return guarded([&] {
    require(out != nullptr && gains != nullptr, "null argument");
    require(p > 0 && m > 0 && stages > 0, "dimensions must be positive");
    require(mode >= SDM_MODE_TEMPLATE && mode <= SDM_MODE_GENERALIZED, "unknown mode");
    auto s = std::make_unique<sdm_sequence>();
    s->seq.mode = static_cast<sdm::SequenceMode>(mode);
    const auto P = static_cast<sdm::Index>(p), M = static_cast<sdm::Index>(m);
    for (size_t k = 0; k < stages; ++k) {
      sdm::DescentStep step;
      step.gain = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                 Eigen::RowMajor>>(gains + k * p * m, P, M);
      step.bias = biases ? sdm::Vector(Eigen::Map<const sdm::Vector>(biases + k * p, P))
                         : sdm::Vector::Zero(P);
      s->seq.steps.push_back(std::move(step));
    }
    s->seq.validate();
    *out = s.release();
  });
}

sdm_status sdm_sequence_load(const char* path, sdm_sequence** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    auto stored = sdm::load_sequence(path);
    *out = new sdm_sequence{std::move(stored.sequence), std::move(stored.problem)};
  });
}

sdm_status sdm_sequence_save(const sdm_sequence* seq, const char* path) {
  return guarded([&] {
    require(seq != nullptr && path != nullptr, "null argument");
    sdm::save_sequence(path, seq->seq, seq->problem);
  });
}

void sdm_sequence_free(sdm_sequence* seq) { delete seq; }

sdm_status sdm_sequence_dims(const sdm_sequence* seq, size_t* p, size_t* m, size_t* stages) {
  return guarded([&] {
    require(seq != nullptr, "null sequence");
    if (p) *p = static_cast<size_t>(seq->seq.param_dim());
    if (m) *m = static_cast<size_t>(seq->seq.feature_dim());
    if (stages) *stages = seq->seq.stage_count();
  });
}

sdm_status sdm_sequence_mode(const sdm_sequence* seq, sdm_mode* mode) {
  return guarded([&] {
    require(seq != nullptr && mode != nullptr, "null argument");
    *mode = static_cast<sdm_mode>(seq->seq.mode);
  });
}

sdm_status sdm_sequence_training_report(const sdm_sequence* seq, double* out, size_t capacity,
                                        size_t* count) {
  return guarded([&] {
    require(seq != nullptr, "null sequence");
    const auto& rep = seq->seq.training_report;
    if (count) *count = rep.size();
    for (size_t i = 0; i < rep.size() && i < capacity && out; ++i) out[i] = rep[i];
  });
}

sdm_status sdm_sequence_apply(const sdm_sequence* seq, const double* x0, sdm_map_fn map,
                              void* user, const double* y, double* x_out, double* trajectory) {
  return guarded([&] {
    require(seq != nullptr && x0 != nullptr && x_out != nullptr, "null argument");
    const auto p = seq->seq.param_dim(), m = seq->seq.feature_dim();
    const bool needs_y = seq->seq.mode != sdm::SequenceMode::generalized;
    require(!needs_y || y != nullptr, "target y is required outside generalized mode");
    const auto h = wrap_map(map, user, p, m);
    std::optional<sdm::FeatureVector> target;
    if (y) target = Eigen::Map<const sdm::Vector>(y, m);
    const auto traj = sdm::apply_sequence(seq->seq, Eigen::Map<const sdm::Vector>(x0, p), h, target);
    Eigen::Map<sdm::Vector>(x_out, p) = traj.back();
    if (trajectory) {
      for (size_t k = 0; k < traj.size(); ++k) {
        Eigen::Map<sdm::Vector>(trajectory + k * static_cast<size_t>(p), p) = traj[k];
      }
    }
  });
}

sdm_status sdm_train_analytic(const char* function, size_t stages, sdm_sequence** out) {
  return guarded([&] {
    require(function != nullptr && out != nullptr, "null argument");
    require(stages > 0, "stages must be positive");
    const auto& fn = sdm::analytic::find_function(function);
    fn.validate();
    sdm::TrainerConfig config;
    config.stages = stages;
    config.ridge = 0.0;
    auto s = std::make_unique<sdm_sequence>();
    s->seq = sdm::train(sdm::analytic::build_training_set(fn), config);
    s->problem = std::string("analytic:") + function;
    *out = s.release();
  });
}

sdm_status sdm_train_pose(const char* model, size_t stages, double noise_variance, uint64_t seed,
                          sdm_sequence** out) {
  return guarded([&] {
    require(model != nullptr && out != nullptr, "null argument");
    require(stages > 0, "stages must be positive");
    require(noise_variance >= 0.0, "noise variance must be non-negative");
    const auto obj = model_by_spec(model);
    sdm::TrainerConfig config;
    config.stages = stages;
    sdm::pose::PoseTrainingOptions topts;
    topts.noise_variance = noise_variance;
    topts.seed = seed;
    auto s = std::make_unique<sdm_sequence>();
    s->seq = sdm::pose::train_pose_sdm(obj, {}, sdm::pose::training_grid(), sdm::pose::base_pose(),
                                       topts, config);
    s->problem = std::string("pose:") + model;
    *out = s.release();
  });
}

sdm_status sdm_estimate_pose(const sdm_sequence* seq, const char* model, const double* pixels,
                             size_t points, double* pose_out) {
  return guarded([&] {
    require(seq != nullptr && model != nullptr && pixels != nullptr && pose_out != nullptr,
            "null argument");
    const auto obj = model_by_spec(model);
    require(points == static_cast<size_t>(obj.size()), "point count does not match the model");
    const sdm::pose::CameraIntrinsics cam;
    const Eigen::Matrix2Xd px =
        Eigen::Map<const Eigen::Matrix2Xd>(pixels, 2, static_cast<sdm::Index>(points));
    const auto est = sdm::pose::estimate_pose(seq->seq, sdm::pose::Projection::from_pixels(px, cam),
                                              obj, cam, sdm::pose::base_pose());
    Eigen::Map<sdm::Vector>(pose_out, 6) = est.pose.to_params();
  });
}

sdm_status sdm_online_create(const sdm_sequence* seq, double ridge, double forgetting,
                             double weight, sdm_online** out) {
  return guarded([&] {
    require(seq != nullptr && out != nullptr, "null argument");
    sdm::OnlineConfig config;
    config.forgetting = forgetting;
    config.weight = weight;
    *out = new sdm_online{sdm::init_online_ridge(seq->seq, ridge, config)};
  });
}

sdm_status sdm_online_ingest(sdm_online* state, const double* x_opt, const double* x0,
                             sdm_map_fn map, void* user) {
  return guarded([&] {
    require(state != nullptr && x_opt != nullptr && x0 != nullptr, "null argument");
    const auto p = state->state.param_dim(), m = state->state.feature_dim();
    const auto h = wrap_map(map, user, p, m);
    sdm::rls_ingest(state->state, Eigen::Map<const sdm::Vector>(x_opt, p),
                    Eigen::Map<const sdm::Vector>(x0, p), h);
  });
}

sdm_status sdm_online_to_sequence(const sdm_online* state, sdm_sequence** out) {
  return guarded([&] {
    require(state != nullptr && out != nullptr, "null argument");
    *out = new sdm_sequence{state->state.to_sequence(), ""};
  });
}

sdm_status sdm_online_max_asymmetry(const sdm_online* state, double* out) {
  return guarded([&] {
    require(state != nullptr && out != nullptr, "null argument");
    *out = state->state.max_asymmetry();
  });
}

sdm_status sdm_online_ingested(const sdm_online* state, size_t* out) {
  return guarded([&] {
    require(state != nullptr && out != nullptr, "null argument");
    *out = state->state.ingested();
  });
}

sdm_status sdm_online_save(const sdm_online* state, const char* path) {
  return guarded([&] {
    require(state != nullptr && path != nullptr, "null argument");
    sdm::save_online(path, state->state);
  });
}

sdm_status sdm_online_load(const char* path, sdm_online** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    *out = new sdm_online{sdm::load_online(path)};
  });
}

void sdm_online_free(sdm_online* state) { delete state; }

const char* sdm_report_text(const sdm_report* report) {
  return report ? report->report.text.c_str() : "";
}

int sdm_report_passed(const sdm_report* report) {
  return report && report->report.passed() ? 1 : 0;
}

size_t sdm_report_failure_count(const sdm_report* report) {
  return report ? report->report.failures.size() : 0;
}

const char* sdm_report_failure(const sdm_report* report, size_t index) {
  if (!report || index >= report->report.failures.size()) return nullptr;
  return report->report.failures[index].c_str();
}

size_t sdm_report_file_count(const sdm_report* report) {
  return report ? report->files.size() : 0;
}

const char* sdm_report_file(const sdm_report* report, size_t index) {
  if (!report || index >= report->files.size()) return nullptr;
  return report->files[index].c_str();
}

void sdm_report_free(sdm_report* report) { delete report; }

void sdm_analytic_options_init(sdm_analytic_options* o) {
  if (!o) return;
  o->function = nullptr;
  o->stages = 10;
  o->output_dir = ".";
}

void sdm_pose_options_init(sdm_pose_options* o) {
  if (!o) return;
  o->models = nullptr;
  o->model_file = nullptr;
  o->stages = 4;
  o->ridge = std::numeric_limits<double>::quiet_NaN();
  o->noise_variance = 4.0;
  o->train_noise = 1;
  o->test_noise = 1;
  o->subsample = 2000;
  o->seed = 42;
  o->output_dir = ".";
}

void sdm_verify_options_init(sdm_verify_options* o) {
  if (!o) return;
  o->seed = 42;
  o->epsilon = std::numeric_limits<double>::quiet_NaN();
  o->radius = std::numeric_limits<double>::quiet_NaN();
  o->grid_per_dim = 1001;
  o->output_dir = ".";
}

void sdm_online_demo_options_init(sdm_online_demo_options* o) {
  if (!o) return;
  o->seed = 42;
  o->forgetting = 1.0;
  o->weight = 1.0;
  o->ridge = 1e-3;
  o->output_dir = ".";
}

void sdm_train_options_init(sdm_train_options* o) {
  if (!o) return;
  o->problem = nullptr;
  o->stages = 0;
  o->ridge = std::numeric_limits<double>::quiet_NaN();
  o->noise_variance = 4.0;
  o->seed = 42;
  o->model_path = nullptr;
}

void sdm_apply_options_init(sdm_apply_options* o) {
  if (!o) return;
  o->model_path = nullptr;
  o->input_path = nullptr;
  o->subsample = 2000;
  o->noise_variance = 4.0;
  o->seed = 42;
  o->output_dir = ".";
}

sdm_status sdm_run_analytic(const sdm_analytic_options* o, sdm_report** report) {
  return guarded([&] {
    require(o != nullptr && report != nullptr, "null argument");
    sdm::experiments::AnalyticOptions opts;
    if (o->function) opts.functions.push_back(o->function);
    opts.stages = o->stages;
    opts.output_dir = opt_str(o->output_dir, ".");
    finish(sdm::experiments::run_analytic(opts), report);
  });
}

sdm_status sdm_run_pose(const sdm_pose_options* o, sdm_report** report) {
  return guarded([&] {
    require(o != nullptr && report != nullptr, "null argument");
    sdm::experiments::PoseOptions opts;
    if (o->models) {
      std::stringstream ss(o->models);
      std::string name;
      while (std::getline(ss, name, ',')) {
        if (!name.empty()) opts.models.push_back(name);
      }
    }
    if (o->model_file) opts.model_files.emplace_back(o->model_file);
    opts.stages = o->stages;
    opts.ridge = opt_real(o->ridge);
    opts.noise_variance = o->noise_variance;
    opts.train_noise = o->train_noise != 0;
    opts.test_noise = o->test_noise != 0;
    opts.subsample = o->subsample;
    opts.seed = o->seed;
    opts.output_dir = opt_str(o->output_dir, ".");
    finish(std::move(sdm::experiments::run_pose(opts).report), report);
  });
}

sdm_status sdm_run_verify(const sdm_verify_options* o, sdm_report** report) {
  return guarded([&] {
    require(o != nullptr && report != nullptr, "null argument");
    sdm::experiments::VerifyOptions opts;
    opts.seed = o->seed;
    opts.epsilon = opt_real(o->epsilon);
    opts.radius = opt_real(o->radius);
    opts.grid_per_dim = o->grid_per_dim;
    opts.output_dir = opt_str(o->output_dir, ".");
    finish(std::move(sdm::experiments::run_verify(opts).report), report);
  });
}

sdm_status sdm_run_online_demo(const sdm_online_demo_options* o, sdm_report** report) {
  return guarded([&] {
    require(o != nullptr && report != nullptr, "null argument");
    sdm::experiments::OnlineDemoOptions opts;
    opts.seed = o->seed;
    opts.forgetting = o->forgetting;
    opts.weight = o->weight;
    opts.ridge = o->ridge;
    opts.output_dir = opt_str(o->output_dir, ".");
    finish(std::move(sdm::experiments::run_online_demo(opts).report), report);
  });
}

sdm_status sdm_run_train(const sdm_train_options* o, sdm_report** report) {
  return guarded([&] {
    require(o != nullptr && report != nullptr, "null argument");
    require(o->problem != nullptr, "problem is required");
    require(o->model_path != nullptr, "model path is required");
    sdm::experiments::TrainOptions opts;
    opts.problem = o->problem;
    if (o->stages > 0) opts.stages = o->stages;
    opts.ridge = opt_real(o->ridge);
    opts.noise_variance = o->noise_variance;
    opts.seed = o->seed;
    opts.model_path = o->model_path;
    finish(sdm::experiments::run_train(opts), report);
  });
}

sdm_status sdm_run_apply(const sdm_apply_options* o, sdm_report** report) {
  return guarded([&] {
    require(o != nullptr && report != nullptr, "null argument");
    require(o->model_path != nullptr, "model path is required");
    sdm::experiments::ApplyOptions opts;
    opts.model_path = o->model_path;
    if (o->input_path) opts.input_path = o->input_path;
    opts.subsample = o->subsample;
    opts.noise_variance = o->noise_variance;
    opts.seed = o->seed;
    opts.output_dir = opt_str(o->output_dir, ".");
    finish(sdm::experiments::run_apply(opts), report);
  });
}

}  // extern "C"
