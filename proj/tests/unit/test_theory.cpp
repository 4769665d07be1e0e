#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "sdm/analytic.hpp"
#include "sdm/theory.hpp"

using namespace sdm;

namespace {

std::shared_ptr<const SmoothMap> scalar(std::function<double(double)> f) {
  return std::make_shared<const SmoothMap>(
      1, 1, [f](const ParamVector& x) { return Vector::Constant(1, f(x[0])); });
}

Neighborhood interval(double anchor, double radius, int grid = 1001) {
  Neighborhood nb;
  nb.anchor = Vector::Constant(1, anchor);
  nb.radius = radius;
  nb.grid_per_dim = grid;
  return nb;
}

std::shared_ptr<const SmoothMap> linear(const Matrix& a) {
  return std::make_shared<const SmoothMap>(a.cols(), a.rows(),
                                           [a](const ParamVector& x) -> FeatureVector { return a * x; });
}

double cube(double x) { return x * x * x; }

}  // namespace

TEST_CASE("neighborhood sampling") {
  const auto pts = sample_neighborhood(interval(1.0, 0.5));
  REQUIRE(pts.size() == 1001);
  CHECK(pts.front()[0] == doctest::Approx(0.5));
  CHECK(pts.back()[0] == doctest::Approx(1.5));
  CHECK(pts[500][0] == 1.0);

  Neighborhood nb;
  nb.anchor = Vector::Zero(3);
  nb.radius = 1.0;
  nb.grid_per_dim = 101;  // 101^3 lattice points exceed the cap
  nb.max_points = 5000;
  const auto capped = sample_neighborhood(nb);
  CHECK(capped.size() == 5000);
  for (const auto& p : capped) CHECK(p.norm() <= 1.0 + 1e-12);
  CHECK(sample_neighborhood(nb) == capped);

  CHECK_THROWS_AS(interval(0.0, 1.0, 2).validate(), Error);
}

TEST_CASE("anchored Lipschitz constants") {
  CHECK(lipschitz_anchored(*scalar([](double x) { return 2 * x; }), interval(0.3, 2.0)) ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(lipschitz_anchored(*scalar(cube), interval(1.0, 0.5)) == doctest::Approx(4.75).epsilon(1e-12));
  CHECK(lipschitz_anchored(*scalar([](double x) { return x; }), interval(-5.0, 0.1)) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Lipschitz constant grows with the radius on nested grids") {
  const auto map = scalar(cube);
  CHECK(lipschitz_anchored(*map, interval(1.0, 0.25, 501)) <=
        lipschitz_anchored(*map, interval(1.0, 0.5, 1001)));
}

TEST_CASE("radius zero is a degenerate neighborhood") {
  try {
    lipschitz_anchored(*scalar(cube), interval(1.0, 0.0));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::degenerate_neighborhood);
  }
}

TEST_CASE("monotonicity in 1D") {
  CHECK(monotone_anchored_1d(*scalar(cube), interval(1.0, 0.5)) == MonotoneSign::increasing);
  CHECK(monotone_anchored_1d(*scalar([](double x) { return std::exp(x); }), interval(-2.0, 3.0)) ==
        MonotoneSign::increasing);
  CHECK(monotone_anchored_1d(*scalar([](double x) { return x * x; }), interval(0.0, 1.0)) ==
        MonotoneSign::none);
  CHECK(monotone_anchored_1d(*scalar([](double x) { return -x; }), interval(0.0, 1.0)) ==
        MonotoneSign::decreasing);
}

TEST_CASE("generic descent map in 1D") {
  CHECK(generic_dm_1d(*scalar([](double x) { return x; }), interval(0.0, 1.0), 0.1) ==
        doctest::Approx(1.9).epsilon(1e-12));
  CHECK(generic_dm_1d(*scalar([](double x) { return 2 * x; }), interval(0.0, 1.0), 0.1) ==
        doctest::Approx(0.9).epsilon(1e-12));
  const double r = generic_dm_1d(*scalar(cube), interval(1.0, 0.5), 0.01);
  CHECK(r == doctest::Approx(2.0 / 4.75 - 0.01).epsilon(1e-12));
  CHECK(r == doctest::Approx(0.41105).epsilon(1e-5));
  // Default epsilon is 1% of 2/K.
  CHECK(generic_dm_1d(*scalar([](double x) { return x; }), interval(0.0, 1.0)) ==
        doctest::Approx(1.98).epsilon(1e-12));
  CHECK(generic_dm_1d(*scalar([](double x) { return -2 * x; }), interval(0.0, 1.0), 0.1) ==
        doctest::Approx(-0.9).epsilon(1e-12));
}

TEST_CASE("generic descent map preconditions") {
  try {
    generic_dm_1d(*scalar([](double x) { return x; }), interval(0.0, 1.0), 2.0);
    FAIL("expected invalid epsilon");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_epsilon);
  }
  try {
    generic_dm_1d(*scalar([](double x) { return x * x; }), interval(0.0, 1.0), 0.1);
    FAIL("expected a precondition error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::precondition);
  }
  CHECK_THROWS_AS(generic_dm_1d(*scalar([](double x) { return x; }), interval(0.0, 1.0), -0.1),
                  Error);
}

TEST_CASE("monotone operator check") {
  Neighborhood nb2;
  nb2.anchor = Vector::Zero(2);
  nb2.radius = 1.0;
  nb2.grid_per_dim = 41;
  CHECK(monotone_operator_check(*linear(Matrix::Identity(2, 2)), Matrix::Identity(2, 2), nb2));
  CHECK_FALSE(monotone_operator_check(*scalar(cube), Matrix::Constant(1, 1, -1.0), interval(1.0, 0.5)));
  Matrix a(2, 2);
  a << 2.0, 0.5, 0.5, 1.0;
  REQUIRE(Eigen::SelfAdjointEigenSolver<Matrix>(a).eigenvalues().minCoeff() > 0.0);
  CHECK(monotone_operator_check(*linear(a), Matrix::Identity(2, 2), nb2));
  // Indefinite A breaks monotonicity.
  Matrix b(2, 2);
  b << 1.0, 0.0, 0.0, -1.0;
  CHECK_FALSE(monotone_operator_check(*linear(b), Matrix::Identity(2, 2), nb2));
}

TEST_CASE("Frobenius bound") {
  Neighborhood nb;
  nb.anchor = Vector::Zero(2);
  nb.radius = 1.0;
  nb.grid_per_dim = 41;
  const auto id = linear(Matrix::Identity(2, 2));
  auto fb = frobenius_dm_bound(*id, 0.5 * Matrix::Identity(2, 2), nb);
  CHECK(fb.satisfied);
  CHECK(fb.bound == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fb.min_cos == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fb.lipschitz == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(frobenius_dm_bound(*id, 3.0 * Matrix::Identity(2, 2), nb).satisfied);

  Matrix a = Matrix::Zero(2, 2);
  a.diagonal() << 1.0, 2.0;
  const auto map = linear(a);
  const auto probe = frobenius_dm_bound(*map, a.transpose(), nb);
  const Matrix r = a.transpose() * (0.9 * probe.bound / probe.frobenius);
  fb = frobenius_dm_bound(*map, r, nb);
  CHECK(fb.satisfied);
  CHECK(fb.lipschitz == doctest::Approx(2.0).epsilon(1e-9));
  const auto cert = contraction_certify(*map, {r, Vector::Zero(2)}, nb, Vector::Zero(2));
  CHECK(cert.valid());

  try {
    frobenius_dm_bound(*map, -Matrix::Identity(2, 2), nb);
    FAIL("expected a precondition error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::precondition);
  }
}

TEST_CASE("contraction certificates on the identity map") {
  const auto id = scalar([](double x) { return x; });
  const auto nb = interval(0.5, 1.0);
  const FeatureVector y = Vector::Constant(1, 0.5);
  auto cert = contraction_certify(*id, {Matrix::Constant(1, 1, 1.0), Vector::Zero(1)}, nb, y);
  CHECK(cert.contraction_factor == doctest::Approx(0.0));
  CHECK(cert.samples_checked == 1000);
  cert = contraction_certify(*id, {Matrix::Constant(1, 1, 1.9), Vector::Zero(1)}, nb, y);
  CHECK(cert.contraction_factor == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(cert.valid());
  cert = contraction_certify(*id, {Matrix::Constant(1, 1, 2.0), Vector::Zero(1)}, nb, y);
  CHECK(cert.contraction_factor == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(cert.valid());
}

TEST_CASE("erf generic map certifies") {
  const auto map = analytic::make_map(analytic::find_function("erf"));
  const auto nb = interval(0.0, 2.0);
  const double r = generic_dm_1d(*map, nb, 0.01);
  const auto cert = contraction_certify(*map, {Matrix::Constant(1, 1, r), Vector::Zero(1)}, nb,
                                        (*map)(nb.anchor));
  CHECK(cert.valid());
}

TEST_CASE("gains below 2/K certify over the registry, and some past it do not") {
  struct Case {
    const char* name;
    double anchor, radius;
  };
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool violated_past_bound = false;
  for (const Case c : {Case{"linear", 1.0, 1.0}, Case{"cube", 1.0, 0.5}, Case{"exp", 0.0, 0.5},
                       Case{"erf", 0.0, 2.0}}) {
    const auto map = analytic::make_map(analytic::find_function(c.name));
    const auto nb = interval(c.anchor, c.radius);
    const double k = lipschitz_anchored(*map, nb);
    const FeatureVector y = (*map)(nb.anchor);
    for (int d = 0; d < 20; ++d) {
      const double r = (2.0 / k) * std::max(u(rng), 1e-9);
      CHECK(contraction_certify(*map, {Matrix::Constant(1, 1, r), Vector::Zero(1)}, nb, y).valid());
    }
    for (int d = 0; d < 20; ++d) {
      const double r = 2.0 / k + 0.1 / k + u(rng) * (2.0 / k - 0.1 / k);
      if (!contraction_certify(*map, {Matrix::Constant(1, 1, r), Vector::Zero(1)}, nb, y).valid()) {
        violated_past_bound = true;
      }
    }
  }
  CHECK(violated_past_bound);
}

TEST_CASE("contraction factor bounds k-step convergence") {
  const auto map = scalar(cube);
  const auto nb = interval(1.0, 0.5);
  const double r = generic_dm_1d(*map, nb);
  const DescentStep step{Matrix::Constant(1, 1, r), Vector::Zero(1)};
  const FeatureVector y = Vector::Constant(1, 1.0);
  const double c = contraction_certify(*map, step, nb, y).contraction_factor;
  REQUIRE(c < 1.0);
  for (const auto& x0 : sample_neighborhood(nb)) {
    ParamVector x = x0;
    const double e0 = std::abs(x0[0] - 1.0);
    for (int k = 1; k <= 8; ++k) {
      x = dm_update(x, step, (*map)(x), y);
      CHECK(std::abs(x[0] - 1.0) <= std::pow(c, k) * e0 + 1e-15);
    }
  }
}
