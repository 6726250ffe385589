#pragma once

#include <stdexcept>
#include <string>

namespace mitoseg {

/// Process exit codes reported by the command-line tool.
enum class ExitCode : int {
  Success = 0,
  Usage = 1,
  Io = 2,
  Dependency = 3,
  Internal = 4,
};

/// Base of every error raised by the library. Each subclass carries the exit
/// code the CLI maps it to.
class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ExitCode::Usage, what) {}
};

struct RangeError : Error {
  explicit RangeError(const std::string& what) : Error(ExitCode::Usage, what) {}
};

struct PatternError : Error {
  explicit PatternError(const std::string& what) : Error(ExitCode::Usage, what) {}
};

/// Settings file problems: unknown keys, bad types, violated invariants.
struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(ExitCode::Usage, what) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error(ExitCode::Usage, what) {}
};

struct ConfigurationError : Error {
  explicit ConfigurationError(const std::string& what) : Error(ExitCode::Usage, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ExitCode::Io, what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ExitCode::Io, what) {}
};

struct MissingSliceError : Error {
  explicit MissingSliceError(const std::string& what) : Error(ExitCode::Io, what) {}
};

struct DegenerateRoiError : Error {
  explicit DegenerateRoiError(const std::string& what) : Error(ExitCode::Io, what) {}
};

struct ResolutionError : Error {
  explicit ResolutionError(const std::string& what) : Error(ExitCode::Usage, what) {}
};

struct DependencyError : Error {
  explicit DependencyError(const std::string& what) : Error(ExitCode::Dependency, what) {}
};

struct InternalError : Error {
  explicit InternalError(const std::string& what) : Error(ExitCode::Internal, what) {}
};

}  // namespace mitoseg
