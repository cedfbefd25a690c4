#pragma once

#include "dovetail/geometry.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/Geometry>

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dovetail {

/// Mesh edge lying on polygon edge `segment`, oriented along it.
struct BoundaryEdge {
  int a = 0;
  int b = 0;
  int segment = 0;
};

struct TriMesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<BoundaryEdge> boundary_edges;   // grouped by segment, ordered along it
  /// Polygon edge that contains the node (-1 for interior nodes). Polygon
  /// corners carry the edge that starts at them, with t = 0.
  std::vector<int> node_segment;
  std::vector<double> node_t;
  /// Polygon vertex index for corner nodes, -1 otherwise.
  std::vector<int> node_corner;
  Polygon polygon;
  std::optional<Side> side;
  double target_step = 0.5;

  int node_count() const { return static_cast<int>(nodes.size()); }
  int dof_count() const { return 2 * node_count(); }
  double triangle_area(int t) const;
  double total_area() const;

  /// Nodes lying on polygon edge `segment`, in order along it (endpoints included).
  std::vector<int> segment_nodes(int segment) const;
  /// Sorted node ids on any polygon edge carrying `tag`.
  std::vector<int> tagged_nodes(EdgeTag tag) const;
  /// Polygon edge index of interface segment k, or -1.
  int contact_segment(int k) const;
  int contact_edge_count() const;
};

/// Constrained Delaunay refinement with target edge length `h`.
/// Guarantees: positive areas, max edge <= 1.5 h, min angle >= 15 degrees away
/// from input corners that are themselves sharper than that.
TriMesh triangulate(const Polygon& polygon, double h = 0.5);
TriMesh triangulate(const JointGeometry& geom, Side side, double h = 0.5);

struct MeshQuality {
  double min_angle_deg = 0.0;
  double max_edge = 0.0;
  double min_area = 0.0;
};
MeshQuality mesh_quality(const TriMesh& mesh);

/// `v x y`, `t i j k`, `m node tag` lines; optional per-node vector field
/// appended as `<prefix> fx fy` lines in node order.
std::string mesh_text(const TriMesh& mesh);
std::string field_text(const Eigen::VectorXd& field, const std::string& prefix);

/// Fixed-topology map from polygon vertex positions (hence theta) to node
/// coordinates. Boundary nodes keep their arclength fraction on their polygon
/// edge; interior nodes follow a discrete harmonic extension.
class MorphMap {
 public:
  MorphMap(const TriMesh& mesh, ShapeParams reference, Side side, SimDomain domain = {});

  const TriMesh& reference_mesh() const { return *mesh_; }
  const ShapeParams& reference_params() const { return reference_; }
  Side side() const { return side_; }

  /// Node coordinates for arbitrary polygon vertex positions (no area check).
  std::vector<Vec2> nodes_for_polygon(const std::vector<Vec2>& polygon_vertices) const;
  /// Node coordinates at theta; throws MorphDegenerate on inverted triangles.
  std::vector<Vec2> morph_nodes(const Eigen::VectorXd& theta) const;
  TriMesh morphed_mesh(const Eigen::VectorXd& theta) const;

  /// d(nodes)/d(theta) * v, interleaved (x0, y0, x1, ...).
  Eigen::VectorXd jvp(const Eigen::VectorXd& v_theta) const;
  /// Transpose product: node cotangent (2N) -> theta cotangent.
  Eigen::VectorXd vjp(const Eigen::VectorXd& node_cotangent) const;

  /// Boundary-node displacement -> all-node displacement (2N each).
  Eigen::VectorXd extend(const Eigen::VectorXd& boundary_displacement) const;

 private:
  Eigen::VectorXd polygon_to_nodes_linear(const Eigen::VectorXd& polygon_delta) const;

  std::shared_ptr<const TriMesh> mesh_;
  ShapeParams reference_;
  Side side_;
  SimDomain domain_;
  Eigen::MatrixXd polygon_jacobian_;  // 2V x dim
  std::vector<Vec2> reference_polygon_;
  std::vector<int> interior_;         // interior node ids
  std::vector<int> interior_slot_;    // node -> row in L_II, -1 for boundary
  Eigen::SparseMatrix<double> coupling_;  // L_IB (interior x all nodes, boundary columns only)
  std::shared_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> interior_solver_;
};

MorphMap build_morph(const JointGeometry& geom, const TriMesh& mesh, const ShapeParams& theta_ref);

}  // namespace dovetail
