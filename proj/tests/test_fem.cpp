#include "doctest.h"

#include "dovetail/errors.hpp"
#include "dovetail/fem.hpp"

#include <cmath>
#include <random>

using namespace dovetail;

namespace {

// Right edge loaded, top edge is the symmetry plane, left and bottom free.
Polygon loaded_rectangle(double w, double h) {
  Polygon p;
  p.vertices = {{0, 0}, {w, 0}, {w, h}, {0, h}};
  p.edge_tags = {EdgeTag::Free, EdgeTag::Traction, EdgeTag::Symmetry, EdgeTag::Free};
  p.contact_index = {-1, -1, -1, -1};
  return p;
}

std::vector<int> left_x_pins(const TriMesh& m) {
  std::vector<int> pins;
  for (int i = 0; i < m.node_count(); ++i) {
    if (m.nodes[i].x() == 0.0) pins.push_back(2 * i);
  }
  return pins;
}

Eigen::VectorXd random_field(int n, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u[i] = normal(rng);
  return u;
}

}  // namespace

TEST_SUITE("fem") {

TEST_CASE("lame parameters") {
  // Oracle: the plane-stress formulas evaluated by hand.
  const double nu = 0.4;
  const Lame l = lame_parameters(1.0, nu);
  CHECK(l.lambda == doctest::Approx(0.4 / 0.84).epsilon(1e-12));
  CHECK(l.mu == doctest::Approx(1.0 / 1.68).epsilon(1e-12));
  CHECK(l.lambda == doctest::Approx(0.476190).epsilon(1e-6));
  CHECK(l.mu == doctest::Approx(0.595238).epsilon(1e-6));

  const Lame z = lame_parameters(1.0, 0.0);
  CHECK(z.lambda == 0.0);
  CHECK(z.mu == 0.5);

  const Lame d = lame_parameters(2.0, nu);
  CHECK(d.lambda == 2.0 * l.lambda);
  CHECK(d.mu == 2.0 * l.mu);

  CHECK(lame_parameters(1.0, nu, LameConvention::Standard).mu == doctest::Approx(1.0 / 2.8));
  CHECK_THROWS_AS(lame_parameters(0.0, 0.3), Error);
  CHECK_THROWS_AS(lame_parameters(1.0, 0.5), Error);
  CHECK_THROWS_AS(lame_parameters(1.0, -0.1), Error);
}

TEST_CASE("energy of simple fields") {
  const auto m = triangulate(loaded_rectangle(1, 1), 0.25);
  const Material mat;
  const LoadCase none{0.0};
  CHECK(elastic_energy(m, Eigen::VectorXd::Zero(m.dof_count()), mat, none) == 0.0);

  Eigen::VectorXd shift(m.dof_count());
  for (int i = 0; i < m.node_count(); ++i) shift.segment<2>(2 * i) = Vec2(0.3, 0.0);
  CHECK(std::abs(strain_energy(m, shift, mat)) <= 1e-14);

  const double eps = 1e-3;
  Eigen::VectorXd stretch(m.dof_count());
  for (int i = 0; i < m.node_count(); ++i) stretch.segment<2>(2 * i) = Vec2(eps * m.nodes[i].x(), 0.0);
  const Lame l = mat.lame();
  CHECK(strain_energy(m, stretch, mat) == doctest::Approx(0.5 * (l.lambda + 2 * l.mu) * eps * eps).epsilon(1e-12));
}

TEST_CASE("frame property: translation only changes the load term") {
  const auto m = triangulate(loaded_rectangle(3, 2), 0.5);
  const Material mat;
  const LoadCase load{0.002};
  std::mt19937_64 rng(3);
  const Eigen::VectorXd u = random_field(m.dof_count(), rng, 0.01);
  Eigen::VectorXd shifted = u;
  const double c = 0.05;
  for (int i = 0; i < m.node_count(); ++i) shifted[2 * i] += c;
  const double force = 0.002 * 2.0;  // traction times loaded edge length
  CHECK(elastic_energy(m, shifted, mat, load) - elastic_energy(m, u, mat, load) ==
        doctest::Approx(-force * c).epsilon(1e-9));
}

TEST_CASE("residual at rest is minus the load") {
  const auto m = triangulate(loaded_rectangle(3, 2), 0.5);
  const LoadCase load{0.002};
  const Eigen::VectorXd r = elastic_residual(m, Eigen::VectorXd::Zero(m.dof_count()), Material{}, load);
  CHECK((r + traction_load(m, load)).norm() == 0.0);
  CHECK(traction_load(m, load).sum() == doctest::Approx(0.004));
}

TEST_CASE("energy, residual and tangent agree with finite differences") {
  const auto m = triangulate(loaded_rectangle(3, 2), 0.5);
  const Material mat;
  const LoadCase load{0.002};
  std::mt19937_64 rng(11);
  const Eigen::VectorXd u = random_field(m.dof_count(), rng, 0.01);
  const Eigen::VectorXd r = elastic_residual(m, u, mat, load);
  const auto K = elastic_tangent(m, mat);
  const double h = 1e-7;
  std::uniform_int_distribution<int> pick(0, m.dof_count() - 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int i = pick(rng);
    Eigen::VectorXd up = u, um = u;
    up[i] += h;
    um[i] -= h;
    const double fd = (elastic_energy(m, up, mat, load) - elastic_energy(m, um, mat, load)) / (2 * h);
    CHECK(std::abs(fd - r[i]) <= 1e-6 * std::max(std::abs(r[i]), 1e-3));
  }
  const Eigen::VectorXd v = random_field(m.dof_count(), rng, 1.0);
  const Eigen::VectorXd fd =
      (elastic_residual(m, u + h * v, mat, load) - elastic_residual(m, u - h * v, mat, load)) / (2 * h);
  const Eigen::VectorXd Kv = K * v;
  CHECK((fd - Kv).norm() <= 1e-6 * Kv.norm());
}

TEST_CASE("tangent structure") {
  const auto m = triangulate(loaded_rectangle(3, 2), 0.5);
  const Material mat;
  const auto K = elastic_tangent(m, mat);
  const Eigen::SparseMatrix<double> Kt = K.transpose();
  CHECK((K - Kt).norm() == 0.0);
  for (const Vec2& dir : {Vec2(1, 0), Vec2(0, 1)}) {
    Eigen::VectorXd t(m.dof_count());
    for (int i = 0; i < m.node_count(); ++i) t.segment<2>(2 * i) = dir;
    CHECK((K * t).norm() <= 1e-10);
  }
  std::mt19937_64 rng(5);
  const Eigen::VectorXd u = random_field(m.dof_count(), rng, 0.01);
  const double quad = u.dot(K * u);
  CHECK(quad == doctest::Approx(2.0 * strain_energy(m, u, mat)).epsilon(1e-10));
}

TEST_CASE("patch test reproduces uniform stress") {
  for (double h : {0.5, 0.3}) {
    const auto m = triangulate(loaded_rectangle(4, 2), h);
    const double T = 0.001;
    const LoadCase load{T};
    const Material mat;
    const Eigen::VectorXd u = elastic_solve(m, mat, load, left_x_pins(m));
    for (const auto& s : element_stresses(m, u, mat)) {
      CHECK(std::abs(s[0] - T) <= 1e-10 * T);
      CHECK(std::abs(s[1]) <= 1e-10 * T);
      CHECK(std::abs(s[2]) <= 1e-10 * T);
    }
    const Eigen::VectorXd r = elastic_residual(m, u, mat, load);
    const DofMap dofs(m, left_x_pins(m));
    CHECK(dofs.restrict(r).norm() <= 1e-10 * traction_load(m, load).norm());
  }
}

TEST_CASE("symmetry constraint and linearity") {
  const auto m = triangulate(loaded_rectangle(4, 2), 0.5);
  const Material mat;
  const auto pins = left_x_pins(m);
  const Eigen::VectorXd u1 = elastic_solve(m, mat, LoadCase{0.001}, pins);
  const Eigen::VectorXd u2 = elastic_solve(m, mat, LoadCase{0.002}, pins);
  CHECK((u2 - 2.0 * u1).norm() <= 1e-12 * u2.norm());
  CHECK(elastic_solve(m, mat, LoadCase{0.0}, pins).norm() == 0.0);
  for (int n : m.tagged_nodes(EdgeTag::Symmetry)) CHECK(std::abs(u1[2 * n + 1]) <= 1e-12);

  // Vertical pull on the loaded edge: the symmetry edge still cannot move vertically.
  LoadCase up{0.001};
  up.direction = Vec2(0, -1);
  const Eigen::VectorXd uv = elastic_solve(m, mat, up, pins);
  for (int n : m.tagged_nodes(EdgeTag::Symmetry)) CHECK(uv[2 * n + 1] == 0.0);
  CHECK(uv.norm() > 0);

  const DofMap dofs = apply_symmetry(m, pins);
  const auto Kr = dofs.restrict(elastic_tangent(m, mat));
  const Eigen::SparseMatrix<double> Krt = Kr.transpose();
  CHECK((Kr - Krt).norm() == 0.0);
}

TEST_CASE("missing constraints are reported") {
  const auto m = triangulate(loaded_rectangle(4, 2), 0.5);
  CHECK_THROWS_AS(elastic_solve(m, Material{}, LoadCase{0.001}), Error);
  Polygon free = loaded_rectangle(4, 2);
  free.edge_tags[2] = EdgeTag::Free;
  CHECK_THROWS_AS(apply_symmetry(triangulate(free, 0.5)), Error);
}

TEST_CASE("coordinate derivative of the residual") {
  const auto m = triangulate(loaded_rectangle(3, 2), 0.5);
  const Material mat;
  const LoadCase load{0.002};
  std::mt19937_64 rng(19);
  const Eigen::VectorXd u = random_field(m.dof_count(), rng, 0.01);
  const Eigen::VectorXd w = random_field(m.dof_count(), rng, 1.0);
  const Eigen::VectorXd g = elastic_residual_coord_vjp(m, u, w, mat, load);
  const Eigen::VectorXd dir = random_field(m.dof_count(), rng, 1.0);
  const double h = 1e-6;
  TriMesh mp = m, mm = m;
  for (int i = 0; i < m.node_count(); ++i) {
    mp.nodes[i] += h * Vec2(dir.segment<2>(2 * i));
    mm.nodes[i] -= h * Vec2(dir.segment<2>(2 * i));
  }
  const double fd = (w.dot(elastic_residual(mp, u, mat, load)) - w.dot(elastic_residual(mm, u, mat, load))) / (2 * h);
  CHECK(fd == doctest::Approx(g.dot(dir)).epsilon(1e-6));
}

}  // TEST_SUITE
