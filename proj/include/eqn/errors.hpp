#pragma once

#include <stdexcept>
#include <string>

namespace eqn {

// Configuration/schema problems.  The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg, std::string key = {}, int line = -1)
      : std::runtime_error(msg), key_(std::move(key)), line_(line) {}
  const std::string& key() const noexcept { return key_; }
  int line() const noexcept { return line_; }

 private:
  std::string key_;
  int line_;
};

// Covariance/operator rank failures (e.g. global preconditioner with K <= N).
class RankError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A stepping kernel failed (implicit solve did not converge, ...).  Carries
// the last residual so callers can decide to retry with a smaller stepsize.
class StepError : public std::runtime_error {
 public:
  StepError(const std::string& msg, double residual)
      : std::runtime_error(msg), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Point outside the target's support where a gradient was requested.
class DomainError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace eqn
