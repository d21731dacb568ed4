#pragma once

#include <stdexcept>
#include <string>

namespace tcal {

/// Error category, used by the CLI to pick an exit code.
enum class ErrorKind {
  invalid_argument,
  parse,
  config,
  insufficient_data,
  collinearity,
  degenerate_arm,
  numerical,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::parse: return "parse";
    case ErrorKind::config: return "config";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::collinearity: return "collinearity";
    case ErrorKind::degenerate_arm: return "degenerate_arm";
    case ErrorKind::numerical: return "numerical";
  }
  return "unknown";
}

/// Base error for the library. Carries an optional pipeline stage label that
/// is filled in as the error propagates through composed operations.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& stage() const noexcept { return stage_; }

  // First (innermost) label wins.
  void set_stage(std::string stage) {
    if (stage_.empty()) stage_ = std::move(stage);
  }

  std::string describe() const {
    std::string out = stage_.empty() ? std::string{} : "[" + stage_ + "] ";
    out += to_string(kind_);
    out += ": ";
    out += what();
    return out;
  }

 private:
  ErrorKind kind_;
  std::string stage_;
};

inline Error invalid_argument(const std::string& what) {
  return Error(ErrorKind::invalid_argument, what);
}

/// Runs `fn`, labelling any escaping library error with `stage`.
template <class Fn>
decltype(auto) with_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (Error& e) {
    e.set_stage(stage);
    throw;
  } catch (const std::exception& e) {
    Error wrapped(ErrorKind::numerical, e.what());
    wrapped.set_stage(stage);
    throw wrapped;
  }
}

}  // namespace tcal
