#pragma once

#include "dovetail/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <string_view>
#include <vector>

namespace dovetail {

/// `Paper` uses mu = E / (2 (1 - nu^2)); `Standard` uses E / (2 (1 + nu)).
/// Both share lambda = E nu / (1 - nu^2).
enum class LameConvention { Paper, Standard };

std::string_view to_string(LameConvention convention);
LameConvention lame_convention_from_string(std::string_view name);

struct Lame {
  double lambda = 0.0;
  double mu = 0.0;
};

/// Throws DomainError unless E > 0 and 0 <= nu < 0.5.
Lame lame_parameters(double E, double nu, LameConvention convention = LameConvention::Paper);

struct Material {
  double E = 1.0;  // GPa
  double nu = 0.4;
  LameConvention convention = LameConvention::Paper;

  Lame lame() const { return lame_parameters(E, nu, convention); }
};

/// Uniform traction on every polygon edge carrying `tag`, in GPa.
struct LoadCase {
  double traction = 0.001;
  EdgeTag tag = EdgeTag::Traction;
  Vec2 direction{1.0, 0.0};
};

/// Traction pulling the given side away from the joint.
LoadCase outward_load(Side side, double traction);

// Displacements are interleaved (ux0, uy0, ux1, ...) by node.

double strain_energy(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat);
/// Consistent nodal forces of the traction (edge trapezoid rule).
Eigen::VectorXd traction_load(const TriMesh& mesh, const LoadCase& load);
/// Strain energy minus traction work.
double elastic_energy(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat, const LoadCase& load);
Eigen::VectorXd elastic_residual(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat,
                                 const LoadCase& load);
Eigen::SparseMatrix<double> elastic_tangent(const TriMesh& mesh, const Material& mat);

/// Element stress (sxx, syy, sxy); constant per P1 triangle.
std::vector<std::array<double, 3>> element_stresses(const TriMesh& mesh, const Eigen::VectorXd& u,
                                                     const Material& mat);

/// d(w . residual)/d(node coordinates) for fixed u and w, including the
/// traction term through the edge lengths. Interleaved like u.
Eigen::VectorXd elastic_residual_coord_vjp(const TriMesh& mesh, const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                                           const Material& mat, const LoadCase& load);

/// Eliminated dofs: u_y on symmetry-tagged nodes plus any extra pinned dofs.
class DofMap {
 public:
  DofMap() = default;
  DofMap(const TriMesh& mesh, const std::vector<int>& extra_pins = {});

  int full_size() const { return static_cast<int>(to_free_.size()); }
  int free_size() const { return static_cast<int>(free_.size()); }
  bool is_fixed(int dof) const { return to_free_[dof] < 0; }
  const std::vector<int>& fixed_dofs() const { return fixed_; }

  Eigen::VectorXd restrict(const Eigen::VectorXd& full) const;
  /// Fixed entries are zero.
  Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const;
  Eigen::SparseMatrix<double> restrict(const Eigen::SparseMatrix<double>& full) const;

 private:
  std::vector<int> free_;
  std::vector<int> fixed_;
  std::vector<int> to_free_;
};

/// Throws MissingTag when the mesh has no symmetry edge.
DofMap apply_symmetry(const TriMesh& mesh, const std::vector<int>& extra_pins = {});

/// Contact-free linear solve; throws SingularSystem when the constraints leave
/// rigid modes.
Eigen::VectorXd elastic_solve(const TriMesh& mesh, const Material& mat, const LoadCase& load,
                              const std::vector<int>& extra_pins = {});

namespace detail {

// P1 element residual over coordinates of any scalar type; u is plain data.
template <class T>
std::array<T, 6> element_residual(const std::array<T, 6>& x, const double* ue, const Lame& lame) {
  const T two_area = (x[2] - x[0]) * (x[5] - x[1]) - (x[4] - x[0]) * (x[3] - x[1]);
  const T area = two_area * 0.5;
  // Shape function gradients.
  const std::array<T, 3> gx{(x[3] - x[5]) / two_area, (x[5] - x[1]) / two_area, (x[1] - x[3]) / two_area};
  const std::array<T, 3> gy{(x[4] - x[2]) / two_area, (x[0] - x[4]) / two_area, (x[2] - x[0]) / two_area};
  T exx(0.0), eyy(0.0), gxy(0.0);
  for (int i = 0; i < 3; ++i) {
    exx += gx[i] * ue[2 * i];
    eyy += gy[i] * ue[2 * i + 1];
    gxy += gy[i] * ue[2 * i] + gx[i] * ue[2 * i + 1];
  }
  const T tr = exx + eyy;
  const T sxx = lame.lambda * tr + 2.0 * lame.mu * exx;
  const T syy = lame.lambda * tr + 2.0 * lame.mu * eyy;
  const T sxy = lame.mu * gxy;
  std::array<T, 6> r;
  for (int i = 0; i < 3; ++i) {
    r[2 * i] = area * (sxx * gx[i] + sxy * gy[i]);
    r[2 * i + 1] = area * (sxy * gx[i] + syy * gy[i]);
  }
  return r;
}

}  // namespace detail

}  // namespace dovetail
