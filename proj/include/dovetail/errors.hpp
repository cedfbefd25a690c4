#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dovetail {

enum class ErrorKind {
  InvalidParams,
  MeshFailure,
  MorphDegenerate,
  DomainError,
  MissingTag,
  SingularSystem,
  DegenerateFit,
  NewtonDivergence,
  SingularTangent,
  LineSearchFailure,
  InvalidConfig,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown by build_geometry; carries every violated rule, not just the first.
class InvalidParams : public Error {
 public:
  explicit InvalidParams(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

}  // namespace dovetail
