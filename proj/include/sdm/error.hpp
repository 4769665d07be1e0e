#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sdm {

enum class ErrorCode {
  contract_violation,
  invalid_argument,
  diverged,
  rank_deficient,
  degenerate_neighborhood,
  precondition,
  invalid_epsilon,
  invalid_projection,
  numerical_breakdown,
  io,
  parse,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised when a map evaluation turns non-finite part-way through an
// iteration. The iterates computed so far are kept.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, std::vector<Eigen::VectorXd> partial,
                std::size_t stage, std::size_t sample = 0)
      : Error(ErrorCode::diverged, what), partial_(std::move(partial)),
        stage_(stage), sample_(sample) {}

  const std::vector<Eigen::VectorXd>& partial_trajectory() const noexcept { return partial_; }
  std::size_t stage() const noexcept { return stage_; }
  std::size_t sample() const noexcept { return sample_; }

 private:
  std::vector<Eigen::VectorXd> partial_;
  std::size_t stage_;
  std::size_t sample_;
};

class InvalidProjectionError : public Error {
 public:
  InvalidProjectionError(const std::string& what, std::vector<Eigen::Index> offending)
      : Error(ErrorCode::invalid_projection, what), offending_(std::move(offending)) {}

  const std::vector<Eigen::Index>& offending_points() const noexcept { return offending_; }

 private:
  std::vector<Eigen::Index> offending_;
};

}  // namespace sdm
