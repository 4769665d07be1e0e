#include <doctest.h>

#include <cmath>
#include <random>

#include "sdm/experiments.hpp"
#include "sdm/online.hpp"
#include "sdm/trainer.hpp"

using namespace sdm;

namespace {

std::shared_ptr<const SmoothMap> linear(const Matrix& a) {
  return std::make_shared<const SmoothMap>(a.cols(), a.rows(),
                                           [a](const ParamVector& x) -> FeatureVector { return a * x; });
}

DescentSequence zero_sequence(Index p, Index m, std::size_t stages,
                              SequenceMode mode = SequenceMode::reversed) {
  DescentSequence seq;
  seq.mode = mode;
  for (std::size_t k = 0; k < stages; ++k) seq.steps.push_back(DescentStep::zero(p, m));
  return seq;
}

Matrix gaussian(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix out(r, c);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = g(rng);
  return out;
}

struct Stream {
  Matrix phi;  // augmented, one column per ingest
  Matrix dx;
};

// Ingests n random samples through a one-stage state and records the stage data.
Stream ingest_random(OnlineState& state, const SmoothMap& map, std::size_t n, std::mt19937_64& rng) {
  const Index p = state.param_dim();
  Stream s{Matrix(state.feature_dim() + 1, static_cast<Index>(n)), Matrix(p, static_cast<Index>(n))};
  for (std::size_t i = 0; i < n; ++i) {
    const Vector x_opt = gaussian(p, 1, rng);
    const Vector x0 = gaussian(p, 1, rng);
    rls_ingest(state, x_opt, x0, map, [&](std::size_t k, const Vector& phi, const Vector& dx) {
      if (k == 0) {
        s.phi.col(static_cast<Index>(i)) = phi;
        s.dx.col(static_cast<Index>(i)) = dx;
      }
    });
  }
  return s;
}

}  // namespace

TEST_CASE("inverse covariance worked examples") {
  CHECK(inverse_covariance(Matrix::Zero(3, 4), 2.0).isApprox(Matrix::Identity(3, 3) * 0.5));
  Matrix phi(1, 2);
  phi << 1.0, 1.0;
  CHECK(inverse_covariance(phi, 1.0)(0, 0) == doctest::Approx(1.0 / 3.0));
  const Matrix aug = augment_features(Matrix::Constant(2, 3, 4.0));
  CHECK(aug.rows() == 3);
  CHECK(aug.row(2).isOnes());
}

TEST_CASE("sequential ingestion matches the batch ridge solve") {
  std::mt19937_64 rng(5);
  for (Index m : {Index{3}, Index{8}}) {
    const Index p = 3;
    const auto map = linear(gaussian(m, p, rng));
    for (std::size_t n : {10u, 50u, 200u}) {
      const double ridge = 1e-3;
      auto state = init_online_ridge(zero_sequence(p, m, 1), ridge);
      const auto s = ingest_random(state, *map, n, rng);

      // W = [-R, b] over [phi; 1] is the ridge solution with the intercept penalized.
      const Matrix batch = experiments::weighted_batch_coefficients(s.dx, s.phi, ridge, 1.0, 1.0);
      const Matrix& w = state.coefficients()[0];
      CHECK((w - batch).norm() <= 1e-6 * batch.norm());
      CHECK(state.ingested() == n);

      // Without the intercept column the oracle is solve_stage itself.
      const Matrix direct = s.dx * s.phi.transpose() *
                            (s.phi * s.phi.transpose() + ridge * Matrix::Identity(m + 1, m + 1))
                                .inverse();
      CHECK((w - direct).norm() <= 1e-6 * direct.norm());
      // solve_stage over the augmented features is the same problem.
      const auto step = solve_stage(s.dx, s.phi, false, ridge);
      CHECK((w - step.gain).norm() <= 1e-6 * step.gain.norm());
    }
  }
}

TEST_CASE("forgetting matches the exponentially weighted batch problem") {
  std::mt19937_64 rng(9);
  const auto map = linear(gaussian(4, 2, rng));
  for (std::size_t n : {5u, 10u, 20u}) {
    OnlineConfig cfg;
    cfg.forgetting = 0.9;
    cfg.weight = 2.0;
    auto state = init_online_ridge(zero_sequence(2, 4, 1), 1e-2, cfg);
    const auto s = ingest_random(state, *map, n, rng);
    const Matrix batch = experiments::weighted_batch_coefficients(s.dx, s.phi, 1e-2, 0.9, 2.0);
    CHECK((state.coefficients()[0] - batch).norm() <= 1e-8 * batch.norm());
  }
}

TEST_CASE("rank-one update is the Sherman-Morrison inverse") {
  std::mt19937_64 rng(13);
  const Matrix a = gaussian(5, 5, rng);
  const Matrix sigma = a * a.transpose() + Matrix::Identity(5, 5);
  Matrix p = sigma.inverse();
  Matrix w = Matrix::Zero(2, 5);
  const Vector phi = gaussian(5, 1, rng);
  rls_update(w, p, phi, gaussian(2, 1, rng), 1.0, 1.0);
  CHECK((p * (sigma + phi * phi.transpose()) - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("a sample with zero residual leaves the coefficients unchanged") {
  std::mt19937_64 rng(17);
  const auto map = linear(gaussian(3, 2, rng));
  auto state = init_online_ridge(zero_sequence(2, 3, 2), 1e-2);
  ingest_random(state, *map, 10, rng);
  const auto before = state.coefficients();
  // Drive the bias to zero so the state predicts no step at x = x*.
  auto coeffs = before;
  for (auto& c : coeffs) c.col(3).setZero();
  auto zeroed = restore_online_state(state.mode(), coeffs, state.inverse_covariances(),
                                     state.config(), state.ingested());
  const Vector x = gaussian(2, 1, rng);
  rls_ingest(zeroed, x, x, *map);
  for (std::size_t k = 0; k < coeffs.size(); ++k) CHECK(zeroed.coefficients()[k] == coeffs[k]);
}

TEST_CASE("inverse covariances stay symmetric over many ingests") {
  std::mt19937_64 rng(21);
  const auto map = linear(gaussian(6, 3, rng));
  OnlineConfig cfg;
  cfg.forgetting = 0.99;
  auto state = init_online_ridge(zero_sequence(3, 6, 3), 1e-3, cfg);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    rls_ingest(state, gaussian(3, 1, rng), gaussian(3, 1, rng), *map);
    worst = std::max(worst, state.max_asymmetry());
  }
  CHECK(worst <= 1e-9);
  CHECK(state.positive_definite());
}

TEST_CASE("ingest is transactional") {
  const auto map = std::make_shared<const SmoothMap>(1, 1, [](const ParamVector& x) {
    return Vector::Constant(1, x[0] > 5.0 ? std::nan("") : x[0]);
  });
  auto state = init_online_ridge(zero_sequence(1, 1, 2), 1.0);
  rls_ingest(state, Vector::Constant(1, 1.0), Vector::Constant(1, 0.0), *map);
  const auto coeffs = state.coefficients();
  const auto inv = state.inverse_covariances();
  CHECK_THROWS_AS(rls_ingest(state, Vector::Constant(1, 1.0), Vector::Constant(1, 9.0), *map),
                  DivergedError);
  CHECK(state.coefficients() == coeffs);
  CHECK(state.inverse_covariances() == inv);
  CHECK(state.ingested() == 1);
  CHECK_THROWS_AS(rls_ingest(state, Vector::Zero(2), Vector::Zero(2), *map), Error);
}

TEST_CASE("literal sign flag changes where later stages are evaluated") {
  std::mt19937_64 rng(25);
  const auto map = std::make_shared<const SmoothMap>(1, 1, [](const ParamVector& x) {
    return Vector::Constant(1, x[0] * x[0] * x[0] + x[0]);
  });
  OnlineConfig literal;
  literal.literal_step3_sign = true;
  auto a = init_online_ridge(zero_sequence(1, 1, 2), 1.0);
  auto b = init_online_ridge(zero_sequence(1, 1, 2), 1.0, literal);
  std::vector<double> fa, fb;
  rls_ingest(a, Vector::Constant(1, 1.0), Vector::Constant(1, 0.0), *map,
             [&](std::size_t k, const Vector& phi, const Vector&) { if (k == 1) fa.push_back(phi[0]); });
  rls_ingest(b, Vector::Constant(1, 1.0), Vector::Constant(1, 0.0), *map,
             [&](std::size_t k, const Vector& phi, const Vector&) { if (k == 1) fb.push_back(phi[0]); });
  REQUIRE(fa.size() == 1);
  CHECK(fa[0] != fb[0]);
  CHECK(a.coefficients()[0] == b.coefficients()[0]);
}

TEST_CASE("online state conversion and validation") {
  DescentSequence seq = zero_sequence(2, 3, 2, SequenceMode::template_target);
  seq.steps[1].gain(0, 1) = 0.25;
  seq.steps[1].bias[1] = -0.5;
  const auto state = init_online_ridge(seq, 0.1);
  const auto back = state.to_sequence();
  CHECK(back.mode == seq.mode);
  CHECK(back.steps[1].gain == seq.steps[1].gain);
  CHECK(back.steps[1].bias == seq.steps[1].bias);
  CHECK_THROWS_AS(init_online_ridge(seq, 0.0), Error);
  OnlineConfig bad;
  bad.forgetting = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.forgetting = 1.0;
  bad.weight = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("covariance seeding from training features") {
  Matrix a(2, 2);
  a << 1.0, 0.2, 0.0, 1.0;
  const auto map = linear(a);
  std::vector<ParamVector> opts;
  std::vector<FeatureVector> targets;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 30; ++i) {
    opts.push_back(gaussian(2, 1, rng));
    targets.push_back(a * opts.back());
  }
  TrainingTrace trace;
  TrainerConfig cfg;
  cfg.stages = 2;
  const auto seq = train(TrainingSet::reversed(map, Vector::Zero(2), opts, targets), cfg, &trace);
  const auto state = init_online(seq, trace.stage_features, 1e-3);
  CHECK(state.inverse_covariances()[0].isApprox(
      inverse_covariance(augment_features(trace.stage_features[0]), 1e-3)));
  CHECK(state.positive_definite());
}
