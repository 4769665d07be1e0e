#pragma once

// Online refresh of a trained DescentSequence with recursive least squares.
// Each stage keeps an augmented coefficient matrix W = [-R, b] that maps
// [h(x) - y; 1] (or [h(x); 1] in generalized mode) to the update x_new - x,
// plus the inverse covariance of those augmented features.

#include <functional>
#include <span>
#include <vector>

#include "sdm/core.hpp"

namespace sdm {

struct OnlineConfig {
  /// Exponential forgetting lambda in (0, 1]; 1 disables forgetting.
  double forgetting = 1.0;
  /// Weight w > 0 of each ingested sample.
  double weight = 1.0;
  /// Evaluate the next-stage feature at x* + dx instead of the iterate x* - dx.
  bool literal_step3_sign = false;

  void validate() const;
};

/// Appends a row of ones to an m x n feature matrix.
Matrix augment_features(const Matrix& features);

/// (Phi Phi^T + ridge I)^-1 for an already augmented data matrix.
Matrix inverse_covariance(const Matrix& augmented, double ridge);

/// One rank-one RLS update of a single stage, in place.
/// inv_cov <- lambda^-1 [P - P phi (lambda/w + phi^T P phi)^-1 phi^T P]
/// coeffs  <- coeffs + (dx - coeffs phi) w phi^T inv_cov
void rls_update(Matrix& coeffs, Matrix& inv_cov, const Vector& phi_aug, const Vector& dx,
                double weight, double forgetting);

class OnlineState {
 public:
  OnlineState(SequenceMode mode, std::vector<Matrix> coeffs, std::vector<Matrix> inv_cov,
              OnlineConfig config);

  SequenceMode mode() const noexcept { return mode_; }
  const OnlineConfig& config() const noexcept { return config_; }
  std::size_t stage_count() const noexcept { return coeffs_.size(); }
  Index param_dim() const { return coeffs_.front().rows(); }
  Index feature_dim() const { return coeffs_.front().cols() - 1; }

  const std::vector<Matrix>& coefficients() const noexcept { return coeffs_; }
  const std::vector<Matrix>& inverse_covariances() const noexcept { return inv_cov_; }
  std::size_t ingested() const noexcept { return ingested_; }

  DescentStep step(std::size_t k) const;
  DescentSequence to_sequence() const;

  /// Max |P - P^T| over all stages.
  double max_asymmetry() const;
  /// Every stage's inverse covariance admits a Cholesky factorization.
  bool positive_definite() const;

 private:
  friend void rls_ingest(OnlineState&, const ParamVector&, const ParamVector&, const SmoothMap&,
                         const std::function<void(std::size_t, const Vector&, const Vector&)>&);
  friend OnlineState restore_online_state(SequenceMode, std::vector<Matrix>, std::vector<Matrix>,
                                          OnlineConfig, std::size_t);

  SequenceMode mode_;
  std::vector<Matrix> coeffs_;
  std::vector<Matrix> inv_cov_;
  OnlineConfig config_;
  std::size_t ingested_ = 0;
};

/// Seeds stage k with (Phi_k Phi_k^T + ridge I)^-1 over the augmented raw
/// features recorded during training (see TrainingTrace).
OnlineState init_online(const DescentSequence& seq, std::span<const Matrix> stage_features,
                        double ridge, OnlineConfig config = {});

/// Seeds every stage with (1/ridge) I.
OnlineState init_online_ridge(const DescentSequence& seq, double ridge, OnlineConfig config = {});

/// Rebuilds a state (used by deserialization).
OnlineState restore_online_state(SequenceMode mode, std::vector<Matrix> coeffs,
                                 std::vector<Matrix> inv_cov, OnlineConfig config,
                                 std::size_t ingested);

/// Ingests one labeled sample (x*, x0) through every stage. The target
/// y = h(x*) is used for template/reversed modes. `tap`, when set, sees
/// (stage, augmented feature, dx) of each stage before its update. The
/// state is unchanged if an exception escapes.
void rls_ingest(OnlineState& state, const ParamVector& x_opt, const ParamVector& x0,
                const SmoothMap& map,
                const std::function<void(std::size_t, const Vector&, const Vector&)>& tap = {});

}  // namespace sdm
