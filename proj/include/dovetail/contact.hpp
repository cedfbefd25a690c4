#pragma once

#include "dovetail/fem.hpp"

#include <Eigen/SparseCholesky>

#include <memory>
#include <vector>

namespace dovetail {

/// Total-least-squares line through the deformed nodes of one rigid contact
/// edge. The normal points out of the rigid body, toward the elastic side.
struct ContactLine {
  Vec2 normal{1.0, 0.0};
  double offset = 0.0;
  int source_edge = -1;
  std::vector<double> fit_weights;
  // Fit state kept for differentiation.
  std::vector<int> nodes;  // rigid mesh nodes used
  Vec2 centroid = Vec2::Zero();
  Vec2 tangent{0.0, 1.0};
  double spread = 0.0;  // largest minus smallest covariance eigenvalue
};

/// Unit-weight TLS fit; `reference_normal` fixes the sign of the normal.
ContactLine fit_line(const std::vector<Vec2>& points, const Vec2& reference_normal, int source_edge = -1);

/// One line per interface edge, indexed by contact index.
std::vector<ContactLine> fit_contact_lines(const TriMesh& rigid, const Eigen::VectorXd& u_rigid);

/// Positive outside the rigid body.
double signed_distance(const Vec2& point, const ContactLine& line);

/// `power` 2 squares the softplus once; 4 is the literal double-square reading.
struct PenaltyConfig {
  double w_pen = 1.0;
  double k = 50.0;  // 1/mm
  int power = 2;
};

struct PenaltyValue {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

/// p(s) = (softplus(-k s) / k)^power and its first two derivatives in s.
PenaltyValue penalty_integrand(double sdf, const PenaltyConfig& cfg);

/// Node-sampled penalty integrated with the trapezoid rule over the elastic
/// side's contact edges; edge k is paired with line k.
double penalty_energy(const TriMesh& mesh, const Eigen::VectorXd& u, const std::vector<ContactLine>& lines,
                      const PenaltyConfig& cfg);
Eigen::VectorXd penalty_gradient(const TriMesh& mesh, const Eigen::VectorXd& u,
                                 const std::vector<ContactLine>& lines, const PenaltyConfig& cfg);
Eigen::SparseMatrix<double> penalty_hessian(const TriMesh& mesh, const Eigen::VectorXd& u,
                                            const std::vector<ContactLine>& lines, const PenaltyConfig& cfg);

double penalized_energy(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat, const LoadCase& load,
                        const std::vector<ContactLine>& lines, const PenaltyConfig& cfg);
Eigen::VectorXd penalized_residual(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat,
                                   const LoadCase& load, const std::vector<ContactLine>& lines,
                                   const PenaltyConfig& cfg);
Eigen::SparseMatrix<double> penalized_tangent(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat,
                                              const std::vector<ContactLine>& lines, const PenaltyConfig& cfg);

/// Cotangents of the line parameters; the normal part is unconstrained
/// (only its component along the tangent matters).
struct LineCotangent {
  Vec2 normal = Vec2::Zero();
  double offset = 0.0;
};

/// d(w . penalty gradient)/d(lines), and d(w . penalty gradient)/d(node
/// coordinates) for fixed u.
std::vector<LineCotangent> penalty_line_vjp(const TriMesh& mesh, const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                                            const std::vector<ContactLine>& lines, const PenaltyConfig& cfg);
Eigen::VectorXd penalty_coord_vjp(const TriMesh& mesh, const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                                  const std::vector<ContactLine>& lines, const PenaltyConfig& cfg);

/// Adds d(line)/d(fitted points)^T * bar to `points_bar` (2 entries per
/// rigid mesh node). Throws DegenerateFit when the fit has no unique normal.
void backprop_line(const ContactLine& line, const LineCotangent& bar, const TriMesh& rigid,
                   const Eigen::VectorXd& u_rigid, Eigen::VectorXd& points_bar);

struct NewtonOptions {
  double tol = 1e-9;  // infinity norm of the constrained residual
  int max_iters = 50;
  int max_backtracks = 20;
};

using Factorization = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>;

struct NewtonResult {
  Eigen::VectorXd u;
  double energy = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Constrained tangent at `u`, when requested.
  std::shared_ptr<Factorization> tangent;
};

/// Minimizes the penalized energy on one side with the symmetry constraint.
/// Throws NewtonDivergence when backtracking cannot decrease the energy.
NewtonResult newton_solve_side(const TriMesh& mesh, const Material& mat, const LoadCase& load,
                               const std::vector<ContactLine>& lines, const PenaltyConfig& cfg,
                               const Eigen::VectorXd& u_init, const NewtonOptions& opts = {},
                               bool keep_tangent = false);

struct ContactProblem {
  const TriMesh* left = nullptr;
  const TriMesh* right = nullptr;
  Material material;
  double traction = 0.001;  // GPa
  PenaltyConfig penalty;
};

struct AlternateOptions {
  int max_iters = 8;
  double tol = 1e-6;  // mm
  /// When positive, run exactly this many iterations regardless of tol.
  int fixed_iterations = 0;
  /// Keep factorized tangents for the adjoint sweep.
  bool record_tape = false;
  NewtonOptions newton;
};

/// One one-sided solve.
struct SolveRecord {
  Side side = Side::Left;
  int iteration = 0;
  Eigen::VectorXd u;
  std::vector<ContactLine> lines;
  /// Record whose field positioned the rigid side, -1 for the undeformed one.
  int rigid_record = -1;
  int newton_iterations = 0;
  double residual = 0.0;
  std::shared_ptr<Factorization> tangent;
};

struct SolveState {
  Eigen::VectorXd u_left;
  Eigen::VectorXd u_right;
  std::vector<SolveRecord> history;  // two per iteration, left first
  std::vector<double> changes;       // max nodal change per iteration
  int iterations = 0;
  bool converged = false;
  /// Load continuation was needed for the first solve.
  bool continuation_used = false;
  double d_value = 0.0;
};

SolveState alternate(const ContactProblem& problem, const AlternateOptions& opts = {});

/// Mean u_x over the right half's loaded edge minus the same over the left's.
double displacement_metric(const TriMesh& left, const Eigen::VectorXd& u_left, const TriMesh& right,
                           const Eigen::VectorXd& u_right);
/// d(metric)/du for one side (sign included).
Eigen::VectorXd displacement_metric_seed(const TriMesh& mesh, Side side);

/// Full-joint force over displacement in N/mm; throws DomainError for d <= 0.
double simulated_stiffness(double d, double traction, const SimDomain& domain = {});

}  // namespace dovetail
