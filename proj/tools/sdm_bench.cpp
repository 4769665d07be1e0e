// sdm_bench: experiment driver over the C API.
//
// Exit codes: 0 success, 1 a run's checks failed, 2 configuration error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdm/sdm.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;

const std::vector<std::string> kCommands{"analytic", "pose",  "verify",
                                         "train",    "apply", "online-demo"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Flat "key = value" lines become "--key value" arguments placed ahead of
// the command-line flags, so explicit flags win.
std::vector<std::string> config_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError("cannot read config file '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CLI::ConversionError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    out.push_back("--" + key);
    out.push_back(trim(line.substr(eq + 1)));
  }
  return out;
}

// Splices config-file arguments in right after the subcommand name.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
      break;
    }
  }
  if (!config) return args;
  auto cmd = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return std::find(kCommands.begin(), kCommands.end(), a) != kCommands.end();
  });
  const auto extra = config_args(*config);
  const auto at = cmd == args.end() ? args.begin() : cmd + 1;
  args.insert(at, extra.begin(), extra.end());
  return args;
}

int exit_code(sdm_status status) {
  switch (status) {
    case SDM_OK: return kExitOk;
    case SDM_ERR_DIVERGED:
    case SDM_ERR_NUMERICAL:
    case SDM_ERR_CALLBACK:
    case SDM_ERR_INTERNAL: return kExitFailed;
    default: return kExitConfig;
  }
}

int finish(sdm_status status, sdm_report* report) {
  if (status != SDM_OK) {
    std::cerr << "error (" << sdm_status_string(status) << "): " << sdm_last_error() << '\n';
    return exit_code(status);
  }
  std::cout << sdm_report_text(report);
  for (size_t i = 0; i < sdm_report_file_count(report); ++i) {
    std::cout << "wrote " << sdm_report_file(report, i) << '\n';
  }
  const bool passed = sdm_report_passed(report) != 0;
  for (size_t i = 0; i < sdm_report_failure_count(report); ++i) {
    std::cerr << "FAIL: " << sdm_report_failure(report, i) << '\n';
  }
  sdm_report_free(report);
  return passed ? kExitOk : kExitFailed;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supervised descent benchmarks: analytic functions, pose estimation, "
               "descent-map certificates and online refresh."};
  app.name("sdm_bench");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", std::string(sdm_version()));

  uint64_t seed = 42;
  std::string output_dir = ".";
  auto add_common = [&](CLI::App* sub) {
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    sub->add_option("--seed", seed, "Root seed")->capture_default_str();
    sub->add_option("-o,--output-dir", output_dir, "Directory for CSV outputs")
        ->capture_default_str();
    sub->add_option("--config", "Flat 'key = value' file; flags override it");
  };

  // analytic
  sdm_analytic_options aopt;
  sdm_analytic_options_init(&aopt);
  std::string a_function;
  auto* analytic = app.add_subcommand("analytic", "SDM vs Newton on the analytic registry");
  add_common(analytic);
  analytic->add_option("--function", a_function, "Registry function (default: all)")
      ->check(CLI::IsMember({"linear", "cube", "exp", "erf"}));
  analytic->add_option("--stages", aopt.stages, "Stages / iterations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  // pose
  sdm_pose_options popt;
  sdm_pose_options_init(&popt);
  std::vector<std::string> p_models;
  std::string p_model_file;
  std::optional<double> p_ridge;
  bool p_train_noise = true, p_test_noise = true;
  auto* pose = app.add_subcommand("pose", "Synthetic pose estimation benchmark");
  add_common(pose);
  pose->add_option("--model", p_models, "Built-in models (default: cube,body,face)")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->check(CLI::IsMember({"cube", "body", "face"}));
  pose->add_option("--model-file", p_model_file, "Extra model point file")
      ->check(CLI::ExistingFile);
  pose->add_option("--stages", popt.stages, "Cascade stages")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  pose->add_option("--ridge", p_ridge, "Ridge (default: scaled automatically)")
      ->check(CLI::NonNegativeNumber);
  pose->add_option("--noise", popt.noise_variance, "Pixel noise variance")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  pose->add_option("--train-noise", p_train_noise, "Add noise to training projections")
      ->capture_default_str();
  pose->add_option("--test-noise", p_test_noise, "Add noise to test projections")
      ->capture_default_str();
  pose->add_option("--subsample", popt.subsample, "Test poses drawn from the grid (0: all)")
      ->capture_default_str();

  // verify
  sdm_verify_options vopt;
  sdm_verify_options_init(&vopt);
  std::optional<double> v_epsilon, v_radius;
  auto* verify = app.add_subcommand("verify", "Descent-map contraction certificates");
  add_common(verify);
  verify->add_option("--epsilon", v_epsilon, "Epsilon of the 1D generic map (default 0.01*2/K)");
  verify->add_option("--radius", v_radius, "Override every neighborhood radius");
  verify->add_option("--grid", vopt.grid_per_dim, "1D grid points")->capture_default_str();

  // online-demo
  sdm_online_demo_options oopt;
  sdm_online_demo_options_init(&oopt);
  auto* online = app.add_subcommand("online-demo", "Recursive vs batch least squares");
  add_common(online);
  online->add_option("--forgetting", oopt.forgetting, "Forgetting factor in (0, 1]")
      ->capture_default_str();
  online->add_option("--weight", oopt.weight, "Sample weight")->capture_default_str();
  online->add_option("--ridge", oopt.ridge, "Prior ridge")->capture_default_str();

  // train
  sdm_train_options topt;
  sdm_train_options_init(&topt);
  std::string t_problem, t_model_out;
  std::optional<double> t_ridge;
  auto* trainc = app.add_subcommand("train", "Train and save a descent sequence");
  add_common(trainc);
  trainc->add_option("--problem", t_problem, "analytic:<function> or pose:<model>")->required();
  trainc->add_option("--stages", topt.stages, "Stages (default per problem)");
  trainc->add_option("--ridge", t_ridge, "Ridge")->check(CLI::NonNegativeNumber);
  trainc->add_option("--noise", topt.noise_variance, "Pixel noise variance (pose)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  trainc->add_option("--model-out", t_model_out, "Model file to write")->required();

  // apply
  sdm_apply_options xopt;
  sdm_apply_options_init(&xopt);
  std::string x_model, x_input;
  auto* apply = app.add_subcommand("apply", "Apply a saved descent sequence");
  add_common(apply);
  apply->add_option("--model", x_model, "Model file")->required()->check(CLI::ExistingFile);
  apply->add_option("--input", x_input, "Targets (analytic) or pixel rows (pose)")
      ->check(CLI::ExistingFile);
  apply->add_option("--subsample", xopt.subsample, "Test poses when no input is given")
      ->capture_default_str();
  apply->add_option("--noise", xopt.noise_variance, "Test pixel noise variance")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return kExitConfig;
  }

  sdm_report* report = nullptr;
  const char* out = output_dir.c_str();
  if (*analytic) {
    aopt.function = a_function.empty() ? nullptr : a_function.c_str();
    aopt.output_dir = out;
    const sdm_status st = sdm_run_analytic(&aopt, &report);
    return finish(st, report);
  }
  if (*pose) {
    std::string models;
    for (const auto& m : p_models) models += (models.empty() ? "" : ",") + m;
    popt.models = models.empty() ? nullptr : models.c_str();
    popt.model_file = p_model_file.empty() ? nullptr : p_model_file.c_str();
    popt.ridge = p_ridge.value_or(nan());
    popt.train_noise = p_train_noise ? 1 : 0;
    popt.test_noise = p_test_noise ? 1 : 0;
    popt.seed = seed;
    popt.output_dir = out;
    const sdm_status st = sdm_run_pose(&popt, &report);
    return finish(st, report);
  }
  if (*verify) {
    vopt.seed = seed;
    vopt.epsilon = v_epsilon.value_or(nan());
    vopt.radius = v_radius.value_or(nan());
    vopt.output_dir = out;
    const sdm_status st = sdm_run_verify(&vopt, &report);
    return finish(st, report);
  }
  if (*online) {
    oopt.seed = seed;
    oopt.output_dir = out;
    const sdm_status st = sdm_run_online_demo(&oopt, &report);
    return finish(st, report);
  }
  if (*trainc) {
    topt.problem = t_problem.c_str();
    topt.ridge = t_ridge.value_or(nan());
    topt.seed = seed;
    topt.model_path = t_model_out.c_str();
    const sdm_status st = sdm_run_train(&topt, &report);
    return finish(st, report);
  }
  xopt.model_path = x_model.c_str();
  xopt.input_path = x_input.empty() ? nullptr : x_input.c_str();
  xopt.seed = seed;
  xopt.output_dir = out;
  const sdm_status st = sdm_run_apply(&xopt, &report);
    return finish(st, report);
}
