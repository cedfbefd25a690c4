#pragma once

#include "dovetail/contact.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dovetail {

enum class AdjointMode {
  FullTape,    // reverse through every alternation
  FixedPoint,  // adjoint fixed point of the last iteration only
};

std::string_view to_string(AdjointMode mode);

/// dL/dX per side, interleaved (x0, y0, x1, ...).
struct MeshGradient {
  Eigen::VectorXd left;
  Eigen::VectorXd right;
};

struct AdjointStep {
  Eigen::VectorXd lambda;                // full-length adjoint field (zero on fixed dofs)
  Eigen::VectorXd coord_bar;             // -lambda^T dR/dX of the elastic side
  std::vector<LineCotangent> line_bar;   // -lambda^T dR/d(lines)
};

/// Adjoint of one one-sided solve. `seed` is dL/du for the record's output.
AdjointStep adjoint_solve_step(const ContactProblem& problem, const SolveRecord& record, const Eigen::VectorXd& seed);

/// Reverse sweep for an objective with seeds on the final left and right
/// fields. Warm-start dependence is dropped.
MeshGradient grad_wrt_mesh_coords(const ContactProblem& problem, const SolveState& state,
                                  const Eigen::VectorXd& seed_left, const Eigen::VectorXd& seed_right,
                                  AdjointMode mode = AdjointMode::FullTape);

/// Same for the displacement metric d.
MeshGradient displacement_metric_gradient(const ContactProblem& problem, const SolveState& state,
                                          AdjointMode mode = AdjointMode::FullTape);

/// Reference meshes of both halves plus their morphs.
struct JointModel {
  ShapeParams reference;
  double mesh_step = 0.5;
  SimDomain domain;
  TriMesh left;
  TriMesh right;
  MorphMap morph_left;
  MorphMap morph_right;
};

JointModel build_model(const ShapeParams& reference, double mesh_step = 0.5, const SimDomain& domain = {});

struct SimSettings {
  Material material;
  double traction = 0.001;
  PenaltyConfig penalty;
  AlternateOptions alternate;
};

struct Evaluation {
  Eigen::VectorXd theta;
  TriMesh left;
  TriMesh right;
  SolveState state;
  double d = 0.0;
};

/// Morphs the model to theta (fixed topology) and runs the alternation.
/// Throws InvalidParams or MorphDegenerate for unusable theta.
Evaluation evaluate(const JointModel& model, const Eigen::VectorXd& theta, const SimSettings& settings);

ContactProblem problem_for(const Evaluation& eval, const SimSettings& settings);

/// (dL/dX)^T dX/dtheta summed over both sides.
Eigen::VectorXd grad_wrt_params(const JointModel& model, const MeshGradient& mesh_grad);

/// dd/dtheta at an evaluation.
Eigen::VectorXd d_gradient(const JointModel& model, const Evaluation& eval, const SimSettings& settings,
                           AdjointMode mode = AdjointMode::FullTape);

struct FDCheckReport {
  std::vector<std::string> labels;
  Eigen::VectorXd adjoint;
  Eigen::VectorXd fd;
  Eigen::VectorXd rel_diff;  // NaN where |fd| is below the floor
  double mean_rel_diff = 0.0;
  double step = 1e-4;
  std::string mode = "central";
  double floor = 1e-12;
};

FDCheckReport make_report(std::vector<std::string> labels, const Eigen::VectorXd& adjoint, const Eigen::VectorXd& fd,
                          double step);
/// CSV: component,adjoint,fd,rel_diff then a `# mean_rel_diff` summary line.
std::string report_csv(const FDCheckReport& report);

/// Central differences of a scalar function, optionally on `jobs` threads.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                            double step = 1e-4, int jobs = 1);

struct CoordinateProbe {
  Side side = Side::Left;
  int node = 0;
  int component = 0;  // 0 = x, 1 = y
};

/// Both coordinates of every node on a contact edge, left side first.
std::vector<CoordinateProbe> contact_coordinate_probes(const TriMesh& left, const TriMesh& right);
std::string probe_label(const CoordinateProbe& probe);

/// FD of d over node coordinates with the alternation fixed at the state's
/// iteration count, against the adjoint mesh gradient.
FDCheckReport check_mesh_gradient(const ContactProblem& problem, const SolveState& state,
                                  const MeshGradient& adjoint, const std::vector<CoordinateProbe>& probes,
                                  double step = 1e-4, int jobs = 1);

/// FD of d over theta (frozen topology, iteration count fixed) against d_gradient.
FDCheckReport check_param_gradient(const JointModel& model, const Eigen::VectorXd& theta,
                                   const SimSettings& settings, double step = 1e-4, int jobs = 1,
                                   AdjointMode mode = AdjointMode::FullTape);

}  // namespace dovetail
