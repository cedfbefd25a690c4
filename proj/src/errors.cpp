#include "dovetail/errors.hpp"

namespace dovetail {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::MeshFailure: return "MeshFailure";
    case ErrorKind::MorphDegenerate: return "MorphDegenerate";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::MissingTag: return "MissingTag";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::DegenerateFit: return "DegenerateFit";
    case ErrorKind::NewtonDivergence: return "NewtonDivergence";
    case ErrorKind::SingularTangent: return "SingularTangent";
    case ErrorKind::LineSearchFailure: return "LineSearchFailure";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

namespace {
std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += "; ";
    out += s;
  }
  return out;
}
}  // namespace

InvalidParams::InvalidParams(std::vector<std::string> violations)
    : Error(ErrorKind::InvalidParams, join(violations)), violations_(std::move(violations)) {}

}  // namespace dovetail
