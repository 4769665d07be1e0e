#include "sdm/online.hpp"

#include <cmath>

#include <fmt/format.h>

namespace sdm {

void OnlineConfig::validate() const {
  if (!(forgetting > 0.0 && forgetting <= 1.0)) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("forgetting factor must lie in (0, 1], got {}", forgetting));
  }
  if (!(weight > 0.0) || !std::isfinite(weight)) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("sample weight must be finite and > 0, got {}", weight));
  }
}

Matrix augment_features(const Matrix& features) {
  Matrix out(features.rows() + 1, features.cols());
  out.topRows(features.rows()) = features;
  out.row(features.rows()).setOnes();
  return out;
}

Matrix inverse_covariance(const Matrix& augmented, double ridge) {
  if (!(ridge >= 0.0)) throw Error(ErrorCode::invalid_argument, "ridge must be >= 0");
  const Index d = augmented.rows();
  Matrix cov = augmented * augmented.transpose();
  cov.diagonal().array() += ridge;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::rank_deficient,
                "feature covariance is singular; initialize with a nonzero ridge");
  }
  // Reject numerically singular covariance as well.
  const Vector diag = llt.matrixL().toDenseMatrix().diagonal();
  if (diag.minCoeff() <= 1e-12 * std::max(1.0, diag.maxCoeff())) {
    throw Error(ErrorCode::rank_deficient,
                "feature covariance is singular; initialize with a nonzero ridge");
  }
  Matrix inv = llt.solve(Matrix::Identity(d, d));
  return 0.5 * (inv + inv.transpose());
}

void rls_update(Matrix& coeffs, Matrix& inv_cov, const Vector& phi_aug, const Vector& dx,
                double weight, double forgetting) {
  const Vector p_phi = inv_cov * phi_aug;
  const double denom = forgetting / weight + phi_aug.dot(p_phi);
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw Error(ErrorCode::numerical_breakdown,
                fmt::format("RLS denominator is {} (state is not positive definite)", denom));
  }
  inv_cov = (inv_cov - p_phi * (p_phi.transpose() / denom)) / forgetting;
  inv_cov = (0.5 * (inv_cov + inv_cov.transpose())).eval();
  const Vector err = dx - coeffs * phi_aug;
  coeffs += (weight * err) * (inv_cov * phi_aug).transpose();
}

OnlineState::OnlineState(SequenceMode mode, std::vector<Matrix> coeffs,
                         std::vector<Matrix> inv_cov, OnlineConfig config)
    : mode_(mode), coeffs_(std::move(coeffs)), inv_cov_(std::move(inv_cov)), config_(config) {
  config_.validate();
  if (coeffs_.empty() || coeffs_.size() != inv_cov_.size()) {
    throw Error(ErrorCode::contract_violation, "online state needs one covariance per stage");
  }
  const Index p = coeffs_.front().rows();
  const Index d = coeffs_.front().cols();
  for (std::size_t k = 0; k < coeffs_.size(); ++k) {
    if (coeffs_[k].rows() != p || coeffs_[k].cols() != d || inv_cov_[k].rows() != d ||
        inv_cov_[k].cols() != d) {
      throw Error(ErrorCode::contract_violation,
                  fmt::format("online stage {} has inconsistent dimensions", k));
    }
  }
}

DescentStep OnlineState::step(std::size_t k) const {
  const Matrix& w = coeffs_.at(k);
  const Index m = w.cols() - 1;
  return {-w.leftCols(m), w.col(m)};
}

DescentSequence OnlineState::to_sequence() const {
  DescentSequence seq;
  seq.mode = mode_;
  for (std::size_t k = 0; k < coeffs_.size(); ++k) seq.steps.push_back(step(k));
  return seq;
}

double OnlineState::max_asymmetry() const {
  double worst = 0.0;
  for (const auto& p : inv_cov_) worst = std::max(worst, (p - p.transpose()).cwiseAbs().maxCoeff());
  return worst;
}

bool OnlineState::positive_definite() const {
  for (const auto& p : inv_cov_) {
    Eigen::LLT<Matrix> llt(p);
    if (llt.info() != Eigen::Success) return false;
  }
  return true;
}

namespace {

std::vector<Matrix> coeffs_from(const DescentSequence& seq) {
  seq.validate();
  std::vector<Matrix> out;
  const Index p = seq.param_dim();
  const Index m = seq.feature_dim();
  for (const auto& s : seq.steps) {
    Matrix w(p, m + 1);
    w.leftCols(m) = -s.gain;
    w.col(m) = s.bias;
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

OnlineState init_online(const DescentSequence& seq, std::span<const Matrix> stage_features,
                        double ridge, OnlineConfig config) {
  auto coeffs = coeffs_from(seq);
  if (stage_features.size() != coeffs.size()) {
    throw Error(ErrorCode::contract_violation,
                fmt::format("{} feature matrices for {} stages", stage_features.size(),
                            coeffs.size()));
  }
  std::vector<Matrix> inv;
  for (std::size_t k = 0; k < stage_features.size(); ++k) {
    if (stage_features[k].rows() != seq.feature_dim()) {
      throw Error(ErrorCode::contract_violation,
                  fmt::format("stage {} features have {} rows, expected {}", k,
                              stage_features[k].rows(), seq.feature_dim()));
    }
    inv.push_back(inverse_covariance(augment_features(stage_features[k]), ridge));
  }
  return OnlineState(seq.mode, std::move(coeffs), std::move(inv), config);
}

OnlineState init_online_ridge(const DescentSequence& seq, double ridge, OnlineConfig config) {
  if (!(ridge > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "ridge fallback needs ridge > 0");
  }
  auto coeffs = coeffs_from(seq);
  const Index d = seq.feature_dim() + 1;
  std::vector<Matrix> inv(coeffs.size(), Matrix::Identity(d, d) / ridge);
  return OnlineState(seq.mode, std::move(coeffs), std::move(inv), config);
}

OnlineState restore_online_state(SequenceMode mode, std::vector<Matrix> coeffs,
                                 std::vector<Matrix> inv_cov, OnlineConfig config,
                                 std::size_t ingested) {
  OnlineState s(mode, std::move(coeffs), std::move(inv_cov), config);
  s.ingested_ = ingested;
  return s;
}

void rls_ingest(OnlineState& state, const ParamVector& x_opt, const ParamVector& x0,
                const SmoothMap& map,
                const std::function<void(std::size_t, const Vector&, const Vector&)>& tap) {
  const Index p = state.param_dim();
  const Index m = state.feature_dim();
  if (x_opt.size() != p || x0.size() != p) {
    throw Error(ErrorCode::contract_violation, "sample dimensions do not match the online state");
  }
  if (map.param_dim() != p || map.feature_dim() != m) {
    throw Error(ErrorCode::contract_violation, "map dimensions do not match the online state");
  }
  const bool generalized = state.mode_ == SequenceMode::generalized;
  const FeatureVector y = generalized ? FeatureVector::Zero(m) : map(x_opt);

  // Work on copies so a failure leaves the state untouched.
  auto coeffs = state.coeffs_;
  auto inv_cov = state.inv_cov_;
  const auto& cfg = state.config_;

  Vector dx = x_opt - x0;
  ParamVector eval_at = x0;
  Vector phi(m + 1);
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    const FeatureVector h = map(eval_at);
    if (!h.allFinite()) {
      throw DivergedError(fmt::format("online ingest: non-finite features at stage {}", k),
                          {eval_at}, k);
    }
    phi.head(m) = h - y;
    phi[m] = 1.0;
    if (tap) tap(k, phi, dx);
    rls_update(coeffs[k], inv_cov[k], phi, dx, cfg.weight, cfg.forgetting);
    dx -= coeffs[k] * phi;
    eval_at = cfg.literal_step3_sign ? ParamVector(x_opt + dx) : ParamVector(x_opt - dx);
  }

  state.coeffs_ = std::move(coeffs);
  state.inv_cov_ = std::move(inv_cov);
  ++state.ingested_;
}

}  // namespace sdm
