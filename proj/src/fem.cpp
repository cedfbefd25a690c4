#include "dovetail/fem.hpp"

#include "dovetail/dual.hpp"
#include "dovetail/errors.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <string>

namespace dovetail {

namespace {

std::array<double, 6> element_coords(const TriMesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  std::array<double, 6> x;
  for (int i = 0; i < 3; ++i) {
    x[2 * i] = mesh.nodes[tri[i]].x();
    x[2 * i + 1] = mesh.nodes[tri[i]].y();
  }
  return x;
}

std::array<double, 6> element_dofs(const TriMesh& mesh, int t, const Eigen::VectorXd& u) {
  const auto& tri = mesh.triangles[t];
  std::array<double, 6> ue;
  for (int i = 0; i < 3; ++i) {
    ue[2 * i] = u[2 * tri[i]];
    ue[2 * i + 1] = u[2 * tri[i] + 1];
  }
  return ue;
}

// Columns of the element stiffness are residuals of unit displacements.
Eigen::Matrix<double, 6, 6> element_stiffness(const std::array<double, 6>& x, const Lame& lame) {
  Eigen::Matrix<double, 6, 6> k;
  for (int j = 0; j < 6; ++j) {
    double e[6] = {0, 0, 0, 0, 0, 0};
    e[j] = 1.0;
    const auto col = detail::element_residual(x, e, lame);
    for (int i = 0; i < 6; ++i) k(i, j) = col[i];
  }
  return k;
}

void check_size(const TriMesh& mesh, const Eigen::VectorXd& u) {
  if (u.size() != mesh.dof_count()) {
    throw Error(ErrorKind::DomainError, "field has " + std::to_string(u.size()) + " entries, mesh needs " +
                                            std::to_string(mesh.dof_count()));
  }
}

}  // namespace

std::string_view to_string(LameConvention convention) {
  return convention == LameConvention::Paper ? "paper" : "standard";
}

LameConvention lame_convention_from_string(std::string_view name) {
  if (name == "paper") return LameConvention::Paper;
  if (name == "standard") return LameConvention::Standard;
  throw Error(ErrorKind::InvalidConfig, "unknown lame convention '" + std::string(name) + "'");
}

Lame lame_parameters(double E, double nu, LameConvention convention) {
  if (!(E > 0.0) || !std::isfinite(E)) throw Error(ErrorKind::DomainError, "Young's modulus must be positive");
  if (!(nu >= 0.0 && nu < 0.5)) throw Error(ErrorKind::DomainError, "Poisson's ratio must lie in [0, 0.5)");
  const double lambda = E * nu / (1.0 - nu * nu);
  const double mu = convention == LameConvention::Paper ? E / (2.0 * (1.0 - nu * nu)) : E / (2.0 * (1.0 + nu));
  return {lambda, mu};
}

LoadCase outward_load(Side side, double traction) {
  LoadCase load;
  load.traction = traction;
  load.direction = side == Side::Left ? Vec2(-1.0, 0.0) : Vec2(1.0, 0.0);
  return load;
}

double strain_energy(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat) {
  check_size(mesh, u);
  const Lame lame = mat.lame();
  double energy = 0.0;
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const auto ue = element_dofs(mesh, t, u);
    const auto r = detail::element_residual(element_coords(mesh, t), ue.data(), lame);
    for (int i = 0; i < 6; ++i) energy += 0.5 * r[i] * ue[i];
  }
  return energy;
}

Eigen::VectorXd traction_load(const TriMesh& mesh, const LoadCase& load) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(mesh.dof_count());
  for (const auto& e : mesh.boundary_edges) {
    if (mesh.polygon.edge_tags[e.segment] != load.tag) continue;
    const double half = 0.5 * (mesh.nodes[e.b] - mesh.nodes[e.a]).norm() * load.traction;
    for (int n : {e.a, e.b}) {
      f[2 * n] += half * load.direction.x();
      f[2 * n + 1] += half * load.direction.y();
    }
  }
  return f;
}

double elastic_energy(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat, const LoadCase& load) {
  return strain_energy(mesh, u, mat) - traction_load(mesh, load).dot(u);
}

Eigen::VectorXd elastic_residual(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat,
                                 const LoadCase& load) {
  check_size(mesh, u);
  const Lame lame = mat.lame();
  Eigen::VectorXd r = -traction_load(mesh, load);
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto ue = element_dofs(mesh, t, u);
    const auto re = detail::element_residual(element_coords(mesh, t), ue.data(), lame);
    for (int i = 0; i < 3; ++i) {
      r[2 * tri[i]] += re[2 * i];
      r[2 * tri[i] + 1] += re[2 * i + 1];
    }
  }
  return r;
}

Eigen::SparseMatrix<double> elastic_tangent(const TriMesh& mesh, const Material& mat) {
  const Lame lame = mat.lame();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(36 * mesh.triangles.size());
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto k = element_stiffness(element_coords(mesh, t), lame);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        trips.emplace_back(2 * tri[i / 2] + i % 2, 2 * tri[j / 2] + j % 2, k(i, j));
      }
    }
  }
  Eigen::SparseMatrix<double> K(mesh.dof_count(), mesh.dof_count());
  K.setFromTriplets(trips.begin(), trips.end());
  // Element matrices are symmetric only up to round-off; make K exactly so.
  Eigen::SparseMatrix<double> Kt = K.transpose();
  return 0.5 * (K + Kt);
}

std::vector<std::array<double, 3>> element_stresses(const TriMesh& mesh, const Eigen::VectorXd& u,
                                                     const Material& mat) {
  check_size(mesh, u);
  const Lame lame = mat.lame();
  std::vector<std::array<double, 3>> out;
  out.reserve(mesh.triangles.size());
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const auto x = element_coords(mesh, t);
    const auto ue = element_dofs(mesh, t, u);
    const double two_area = (x[2] - x[0]) * (x[5] - x[1]) - (x[4] - x[0]) * (x[3] - x[1]);
    const double gx[3] = {(x[3] - x[5]) / two_area, (x[5] - x[1]) / two_area, (x[1] - x[3]) / two_area};
    const double gy[3] = {(x[4] - x[2]) / two_area, (x[0] - x[4]) / two_area, (x[2] - x[0]) / two_area};
    double exx = 0.0, eyy = 0.0, gxy = 0.0;
    for (int i = 0; i < 3; ++i) {
      exx += gx[i] * ue[2 * i];
      eyy += gy[i] * ue[2 * i + 1];
      gxy += gy[i] * ue[2 * i] + gx[i] * ue[2 * i + 1];
    }
    const double tr = exx + eyy;
    out.push_back({lame.lambda * tr + 2.0 * lame.mu * exx, lame.lambda * tr + 2.0 * lame.mu * eyy, lame.mu * gxy});
  }
  return out;
}

Eigen::VectorXd elastic_residual_coord_vjp(const TriMesh& mesh, const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                                           const Material& mat, const LoadCase& load) {
  check_size(mesh, u);
  check_size(mesh, w);
  const Lame lame = mat.lame();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mesh.dof_count());
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto xd = element_coords(mesh, t);
    std::array<Dual<6>, 6> x;
    for (int i = 0; i < 6; ++i) x[i] = Dual<6>::variable(xd[i], i);
    const auto ue = element_dofs(mesh, t, u);
    const auto re = detail::element_residual(x, ue.data(), lame);
    for (int i = 0; i < 6; ++i) {
      const double wi = w[2 * tri[i / 2] + i % 2];
      if (wi == 0.0) continue;
      for (int j = 0; j < 6; ++j) out[2 * tri[j / 2] + j % 2] += wi * re[i].d[j];
    }
  }
  // Traction forces scale with edge length: r -= 0.5 |b - a| T dir at both ends.
  for (const auto& e : mesh.boundary_edges) {
    if (mesh.polygon.edge_tags[e.segment] != load.tag) continue;
    const Vec2 edge = mesh.nodes[e.b] - mesh.nodes[e.a];
    const double len = edge.norm();
    const Vec2 wa(w[2 * e.a], w[2 * e.a + 1]);
    const Vec2 wb(w[2 * e.b], w[2 * e.b + 1]);
    const double s = -0.5 * load.traction * load.direction.dot(wa + wb);
    const Vec2 dlen_db = edge / len;
    out.segment<2>(2 * e.b) += s * dlen_db;
    out.segment<2>(2 * e.a) -= s * dlen_db;
  }
  return out;
}

DofMap::DofMap(const TriMesh& mesh, const std::vector<int>& extra_pins) {
  const int n = mesh.dof_count();
  std::vector<char> fixed(n, 0);
  for (int node : mesh.tagged_nodes(EdgeTag::Symmetry)) fixed[2 * node + 1] = 1;
  for (int dof : extra_pins) {
    if (dof < 0 || dof >= n) throw Error(ErrorKind::DomainError, "pinned dof out of range");
    fixed[dof] = 1;
  }
  to_free_.assign(n, -1);
  for (int d = 0; d < n; ++d) {
    if (fixed[d]) {
      fixed_.push_back(d);
    } else {
      to_free_[d] = static_cast<int>(free_.size());
      free_.push_back(d);
    }
  }
}

Eigen::VectorXd DofMap::restrict(const Eigen::VectorXd& full) const {
  Eigen::VectorXd out(free_size());
  for (int i = 0; i < free_size(); ++i) out[i] = full[free_[i]];
  return out;
}

Eigen::VectorXd DofMap::expand(const Eigen::VectorXd& reduced) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(full_size());
  for (int i = 0; i < free_size(); ++i) out[free_[i]] = reduced[i];
  return out;
}

Eigen::SparseMatrix<double> DofMap::restrict(const Eigen::SparseMatrix<double>& full) const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(full.nonZeros());
  for (int col = 0; col < full.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(full, col); it; ++it) {
      const int r = to_free_[it.row()], c = to_free_[it.col()];
      if (r >= 0 && c >= 0) trips.emplace_back(r, c, it.value());
    }
  }
  Eigen::SparseMatrix<double> out(free_size(), free_size());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

DofMap apply_symmetry(const TriMesh& mesh, const std::vector<int>& extra_pins) {
  if (mesh.tagged_nodes(EdgeTag::Symmetry).empty()) {
    throw Error(ErrorKind::MissingTag, "mesh has no symmetry edge");
  }
  return DofMap(mesh, extra_pins);
}

Eigen::VectorXd elastic_solve(const TriMesh& mesh, const Material& mat, const LoadCase& load,
                              const std::vector<int>& extra_pins) {
  const DofMap dofs = apply_symmetry(mesh, extra_pins);
  const Eigen::SparseMatrix<double> K = dofs.restrict(elastic_tangent(mesh, mat));
  const Eigen::VectorXd f = dofs.restrict(traction_load(mesh, load));
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(K);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, "stiffness factorization failed");
  // LDLT does not fail on a semi-definite matrix; a vanishing pivot exposes a rigid mode.
  const Eigen::VectorXd D = solver.vectorD();
  const double scale = D.cwiseAbs().maxCoeff();
  if (!(D.minCoeff() > 1e-12 * scale)) {
    throw Error(ErrorKind::SingularSystem, "constraints leave a rigid body mode");
  }
  Eigen::VectorXd x = solver.solve(f);
  // One refinement step keeps the residual near round-off on larger meshes.
  x += solver.solve(f - K * x);
  return dofs.expand(x);
}

}  // namespace dovetail
