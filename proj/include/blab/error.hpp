#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace blab {

enum class ErrorCode {
  invalid_arity,
  invalid_partition,
  invalid_mass,
  invalid_level,
  invalid_spec,
  unknown_node,
  domain_mismatch,
  invalid_function,
  invalid_exponent,
  invalid_threshold,
  degenerate_input,
  domain_error,
  numeric_failure,
  infeasible_moments,
  singularity_guard,
  cannot_normalize,
  invariant_violation,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_arity: return "invalid-arity";
    case ErrorCode::invalid_partition: return "invalid-partition";
    case ErrorCode::invalid_mass: return "invalid-mass";
    case ErrorCode::invalid_level: return "invalid-level";
    case ErrorCode::invalid_spec: return "invalid-spec";
    case ErrorCode::unknown_node: return "unknown-node";
    case ErrorCode::domain_mismatch: return "domain-mismatch";
    case ErrorCode::invalid_function: return "invalid-function";
    case ErrorCode::invalid_exponent: return "invalid-exponent";
    case ErrorCode::invalid_threshold: return "invalid-threshold";
    case ErrorCode::degenerate_input: return "degenerate-input";
    case ErrorCode::domain_error: return "domain-error";
    case ErrorCode::numeric_failure: return "numeric-failure";
    case ErrorCode::infeasible_moments: return "infeasible-moments";
    case ErrorCode::singularity_guard: return "singularity-guard";
    case ErrorCode::cannot_normalize: return "cannot-normalize";
    case ErrorCode::invariant_violation: return "invariant-violation";
  }
  return "unknown";
}

/// Exception carrying a machine-readable error kind next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace blab
