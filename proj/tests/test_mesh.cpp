#include "doctest.h"

#include "dovetail/errors.hpp"
#include "dovetail/mesh.hpp"

#include <cmath>
#include <random>

using namespace dovetail;

namespace {

ShapeParams single(double a, double b, double L) {
  return {DesignSpace::SingleDovetail, Eigen::Vector3d(a, b, L)};
}

ShapeParams complex_default() {
  Eigen::VectorXd th(6);
  th << -3, 3, 0, 2, 3, 4;
  return {DesignSpace::ComplexDovetail, th};
}

Polygon rectangle(double w, double h) {
  Polygon p;
  p.vertices = {{0, 0}, {w, 0}, {w, h}, {0, h}};
  p.edge_tags = {EdgeTag::Free, EdgeTag::Traction, EdgeTag::Symmetry, EdgeTag::Traction};
  p.contact_index = {-1, -1, -1, -1};
  return p;
}

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (a + t * d - p).norm();
}

void check_invariants(const TriMesh& m, double poly_area) {
  CHECK(std::abs(m.total_area() - poly_area) <= 1e-9 * poly_area);
  const auto q = mesh_quality(m);
  CHECK(q.min_area > 0);
  CHECK(q.max_edge <= 1.5 * m.target_step);
}

}  // namespace

TEST_SUITE("mesh") {

TEST_CASE("rectangle conserves area") {
  const auto m = triangulate(rectangle(30, 10), 0.5);
  check_invariants(m, 300.0);
  CHECK(mesh_quality(m).min_angle_deg >= 15.0);
}

TEST_CASE("interface corners are mesh nodes, refinement adds nodes") {
  const auto g = build_geometry(single(2, 4, 5));
  for (Side side : {Side::Left, Side::Right}) {
    const auto m = triangulate(g, side, 0.5);
    check_invariants(m, g.polygon(side).area());
    CHECK(mesh_quality(m).min_angle_deg >= 15.0);
    for (const Vec2& v : g.interface_polyline) {
      bool found = false;
      for (const Vec2& n : m.nodes) found = found || n == v;
      CHECK(found);
    }
    const auto fine = triangulate(g, side, 0.25);
    CHECK(fine.node_count() > m.node_count());
  }
}

TEST_CASE("sharp interface corners still mesh") {
  // 16.7 degree corner at (0, 8) and (1.5, 3).
  const auto g = build_geometry(single(2, 7, 1.5));
  for (double h : {1.0, 0.5, 0.25}) {
    for (Side side : {Side::Left, Side::Right}) {
      const auto m = triangulate(g, side, h);
      check_invariants(m, g.polygon(side).area());
    }
  }
}

TEST_CASE("meshing is deterministic") {
  const auto g = build_geometry(complex_default());
  const auto a = triangulate(g, Side::Right, 0.5);
  const auto b = triangulate(g, Side::Right, 0.5);
  CHECK(mesh_text(a) == mesh_text(b));
}

TEST_CASE("boundary edges are ordered along their segment") {
  const auto g = build_geometry(single(2, 4, 5));
  const auto m = triangulate(g, Side::Left, 0.5);
  for (int k = 0; k < m.contact_edge_count(); ++k) {
    const int seg = m.contact_segment(k);
    const auto nodes = m.segment_nodes(seg);
    REQUIRE(nodes.size() >= 2);
    CHECK(m.nodes[nodes.front()] == m.polygon.edge_start(seg));
    CHECK(m.nodes[nodes.back()] == m.polygon.edge_end(seg));
    for (std::size_t i = 1; i + 1 < nodes.size(); ++i) {
      CHECK(m.node_t[nodes[i]] > m.node_t[nodes[i - 1]]);
    }
  }
}

TEST_CASE("morph is the identity at the reference") {
  const auto p = single(2, 4, 5);
  const auto g = build_geometry(p);
  const auto m = triangulate(g, Side::Right, 0.5);
  const auto map = build_morph(g, m, p);
  const auto x = map.morph_nodes(p.theta);
  double worst = 0;
  for (int i = 0; i < m.node_count(); ++i) worst = std::max(worst, (x[i] - m.nodes[i]).norm());
  CHECK(worst == 0.0);
}

TEST_CASE("interface translation moves interface nodes exactly") {
  const auto p = complex_default();
  const auto g = build_geometry(p);
  for (Side side : {Side::Left, Side::Right}) {
    const auto m = triangulate(g, side, 0.5);
    const auto map = build_morph(g, m, p);
    Eigen::VectorXd th = p.theta;
    th[0] += 0.1;  // x0
    th[2] += 0.1;  // x1
    const auto x = map.morph_nodes(th);
    // Oracle for the interior: the extension applied to the boundary motion.
    Eigen::VectorXd boundary = Eigen::VectorXd::Zero(m.dof_count());
    for (int i = 0; i < m.node_count(); ++i) {
      if (m.node_segment[i] < 0) continue;
      boundary.segment<2>(2 * i) = x[i] - m.nodes[i];
    }
    const Eigen::VectorXd ext = map.extend(boundary);
    for (int i = 0; i < m.node_count(); ++i) {
      const int seg = m.node_segment[i];
      if (seg >= 0 && m.polygon.edge_tags[seg] == EdgeTag::Contact && m.node_corner[i] < 0) {
        CHECK((x[i] - m.nodes[i] - Vec2(0.1, 0)).norm() <= 1e-12);
      }
      if (seg < 0) CHECK((x[i] - m.nodes[i] - Vec2(ext.segment<2>(2 * i))).norm() <= 1e-12);
    }
  }
}

TEST_CASE("uniform translation of every segment moves every node") {
  const auto p = single(2, 4, 5);
  const auto g = build_geometry(p);
  const auto m = triangulate(g, Side::Left, 0.5);
  const auto map = build_morph(g, m, p);
  auto poly = g.left.vertices;
  for (auto& v : poly) v += Vec2(1, 0);
  const auto x = map.nodes_for_polygon(poly);
  double worst = 0;
  for (int i = 0; i < m.node_count(); ++i) worst = std::max(worst, (x[i] - m.nodes[i] - Vec2(1, 0)).norm());
  CHECK(worst <= 1e-12);
}

TEST_CASE("morph jacobian: finite differences, linearity, transpose") {
  const auto p = complex_default();
  const auto g = build_geometry(p);
  const auto m = triangulate(g, Side::Left, 0.5);
  const auto map = build_morph(g, m, p);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(6), w(6);
  for (int i = 0; i < 6; ++i) {
    v[i] = normal(rng);
    w[i] = normal(rng);
  }
  CHECK(map.jvp(Eigen::VectorXd::Zero(6)).norm() == 0.0);

  const double h = 1e-6;
  const auto xp = map.morph_nodes(p.theta + h * v);
  const auto xm = map.morph_nodes(p.theta - h * v);
  Eigen::VectorXd fd(m.dof_count());
  for (int i = 0; i < m.node_count(); ++i) fd.segment<2>(2 * i) = (xp[i] - xm[i]) / (2 * h);
  const Eigen::VectorXd jv = map.jvp(v);
  CHECK((fd - jv).norm() <= 1e-8 * jv.norm());

  CHECK((map.jvp(v + w) - jv - map.jvp(w)).norm() <= 1e-12 * jv.norm());

  Eigen::VectorXd u(m.dof_count());
  for (int i = 0; i < u.size(); ++i) u[i] = normal(rng);
  const double lhs = u.dot(jv);
  const double rhs = map.vjp(u).dot(v);
  CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(std::abs(lhs), 1.0) * 10);
}

TEST_CASE("boundary nodes stay on the morphed polygon") {
  const auto p = single(2, 4, 5);
  const auto g = build_geometry(p);
  const auto m = triangulate(g, Side::Right, 0.5);
  const auto map = build_morph(g, m, p);
  const ShapeParams q = single(2.3, 4.4, 5.2);
  const auto x = map.morph_nodes(q.theta);
  const Polygon poly = side_polygon(q, Side::Right);
  for (int i = 0; i < m.node_count(); ++i) {
    const int seg = m.node_segment[i];
    if (seg < 0) continue;
    CHECK(segment_distance(x[i], poly.edge_start(seg), poly.edge_end(seg)) <= 1e-12);
  }
}

TEST_CASE("large morphs report degeneracy") {
  const auto p = single(2, 4, 5);
  const auto g = build_geometry(p);
  const auto m = triangulate(g, Side::Left, 0.5);
  const auto map = build_morph(g, m, p);
  CHECK_THROWS_AS(map.morph_nodes(Eigen::Vector3d(2, 4, -3)), Error);
}

TEST_CASE("mesh text format") {
  const auto m = triangulate(rectangle(2, 1), 0.5);
  const std::string s = mesh_text(m);
  CHECK(s.rfind("v ", 0) == 0);
  CHECK(s.find("\nt ") != std::string::npos);
  CHECK(s.find("\nm ") != std::string::npos);
}

}  // TEST_SUITE
