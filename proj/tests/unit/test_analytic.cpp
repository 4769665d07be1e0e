#include <doctest.h>

#include <cmath>

#include "sdm/analytic.hpp"

using namespace sdm;
using namespace sdm::analytic;

TEST_CASE("registry entries are consistent") {
  const auto& reg = registry();
  REQUIRE(reg.size() == 4);
  for (const auto& fn : reg) {
    CAPTURE(fn.name);
    CHECK_NOTHROW(fn.validate());
    CHECK(fn.test_step < fn.train_step);
    const auto map = make_map(fn);
    for (double y : sample_range(fn.train_range, fn.train_step)) {
      const double x = fn.h_inverse(y);
      CHECK(std::abs(fn.h(x) - y) <= 1e-10);
      CHECK(max_jacobian_relative_error(*map, Vector::Constant(1, x)) <= 1e-5);
      const double d = 1e-5;
      const double fd2 = (fn.h_prime(x + d) - fn.h_prime(x - d)) / (2 * d);
      CHECK(fd2 == doctest::Approx(fn.h_double_prime(x)).epsilon(1e-6).scale(1.0));
      CHECK(map->hessians(Vector::Constant(1, x))[0](0, 0) == fn.h_double_prime(x));
    }
  }
  CHECK(find_function("linear").substitution);
  CHECK_FALSE(find_function("erf").substitution);
  CHECK_THROWS_AS(find_function("tanh"), Error);
}

TEST_CASE("validation rejects a broken entry") {
  AnalyticFunction fn = find_function("cube");
  fn.test_step = fn.train_step;
  CHECK_THROWS_AS(fn.validate(), Error);
  fn = find_function("cube");
  fn.h_inverse = [](double y) { return y; };
  CHECK_THROWS_AS(fn.validate(), Error);
}

TEST_CASE("erf inverse") {
  for (double y : {-0.99, -0.5, 0.0, 0.2, 0.9, 0.999999}) {
    CHECK(std::erf(erf_inverse(y)) == doctest::Approx(y).epsilon(1e-15));
  }
  CHECK(erf_inverse(0.0) == 0.0);
  CHECK_THROWS_AS(erf_inverse(1.0), Error);
}

TEST_CASE("training set construction") {
  AnalyticFunction lin = find_function("linear");
  lin.train_range = {0.0, 2.0};
  lin.train_step = 1.0;
  lin.test_step = 0.5;
  const auto set = build_training_set(lin);
  CHECK(set.mode == SequenceMode::reversed);
  REQUIRE(set.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(set.problems[i].target[0] == doctest::Approx(static_cast<double>(i)));
    CHECK(set.problems[i].x_opt[0] == doctest::Approx(0.5 * static_cast<double>(i)));
    CHECK(set.initial_states[i][0] == lin.x0);
  }

  AnalyticFunction cube = find_function("cube");
  cube.train_range = {0.5, 1.5};
  cube.train_step = 0.1;
  cube.test_step = 0.05;
  const auto cs = build_training_set(cube);
  CHECK(cs.size() == 11);
  for (const auto& pr : cs.problems) {
    CHECK(pr.x_opt[0] == doctest::Approx(std::cbrt(pr.target[0])).epsilon(1e-14));
  }

  AnalyticFunction bad = find_function("erf");
  bad.train_range = {0.5, 1.5};
  CHECK_THROWS_AS(build_training_set(bad), Error);

  const auto& fn = find_function("exp");
  CHECK(test_targets(fn).size() > sample_range(fn.train_range, fn.train_step).size());
}

TEST_CASE("comparison tables") {
  const auto lin = run_comparison(find_function("linear"));
  CHECK(lin.sdm.size() == 11);
  CHECK(lin.newton.size() == 11);
  CHECK(lin.sdm[0] == doctest::Approx(1.0));
  CHECK(lin.sdm[1] <= 1e-12);

  const auto cube = run_comparison(find_function("cube"));
  for (double v : cube.newton) CHECK(v == doctest::Approx(1.0));
  CHECK(cube.newton_status.at(RunStatus::saddle_stall) == cube.num_test_points);
  CHECK(cube.sdm.back() < 1e-2);
  CHECK(cube.sdm.back() < cube.sdm[1]);

  const auto ex = run_comparison(find_function("exp"));
  CHECK(ex.newton_status.count(RunStatus::diverged) == 1);
  CHECK(ex.newton.back() >= 1.0);
  CHECK(ex.sdm.back() < 1e-2);

  for (const auto& fn : registry()) {
    const auto table = run_comparison(fn);
    CAPTURE(fn.name);
    CHECK(failed_invariants(table).empty());
    CHECK(report_non_increasing(table.training_report));
    const auto again = run_comparison(fn);
    CHECK(format_csv(fn, table) == format_csv(fn, again));
  }
}

TEST_CASE("invariant checks flag a bad table") {
  auto table = run_comparison(find_function("erf"));
  table.sdm.back() = 0.5;
  CHECK_FALSE(failed_invariants(table).empty());
}

TEST_CASE("csv layout") {
  const auto& fn = find_function("cube");
  const auto table = run_comparison(fn, 3);
  const auto csv = format_csv(fn, table);
  CHECK(csv.find("method,iteration,mean_normalized_residual,num_test_points") != std::string::npos);
  CHECK(csv.find("# function = cube") != std::string::npos);
  CHECK(csv.find("\nsdm,3,") != std::string::npos);
  CHECK(csv.find("\nnewton,3,") != std::string::npos);
}
