#pragma once

#include <Eigen/Core>

#include <string>
#include <string_view>
#include <vector>

namespace dovetail {

using Vec2 = Eigen::Vector2d;

enum class DesignSpace { SingleDovetail, ComplexDovetail, DoubleDovetail };

int parameter_count(DesignSpace space);
std::string_view to_string(DesignSpace space);
/// Accepts "single", "complex", "double" and the enum names.
DesignSpace design_space_from_string(std::string_view name);

struct ShapeParams {
  DesignSpace space = DesignSpace::SingleDovetail;
  Eigen::VectorXd theta;
};

/// Lower half of the joint: x in [-half_width, half_width], y in [0, height].
/// The symmetry plane is y = height; outer (loaded) edges are x = +-half_width.
struct SimDomain {
  double half_width = 15.0;
  double height = 10.0;
  double thickness = 5.0;
};

enum class EdgeTag { Contact, Traction, Symmetry, Free };

std::string_view to_string(EdgeTag tag);

enum class Side { Left, Right };

/// Closed counter-clockwise polygon. Edge i runs from vertex i to vertex i+1.
struct Polygon {
  std::vector<Vec2> vertices;
  std::vector<EdgeTag> edge_tags;
  /// Interface segment index for contact edges, -1 otherwise.
  std::vector<int> contact_index;

  int size() const { return static_cast<int>(vertices.size()); }
  Vec2 edge_start(int e) const { return vertices[e]; }
  Vec2 edge_end(int e) const { return vertices[(e + 1) % size()]; }
  double area() const;
};

struct JointGeometry {
  DesignSpace space = DesignSpace::SingleDovetail;
  SimDomain domain;
  Polygon left;
  Polygon right;
  /// Shared boundary from y = 0 to y = height.
  std::vector<Vec2> interface_polyline;

  const Polygon& polygon(Side side) const { return side == Side::Left ? left : right; }
  int contact_edge_count() const { return static_cast<int>(interface_polyline.size()) - 1; }
};

/// Every violated rule; empty means valid.
std::vector<std::string> validate_params(const ShapeParams& params, const SimDomain& domain = {});

/// Throws InvalidParams when validate_params reports anything.
JointGeometry build_geometry(const ShapeParams& params, const SimDomain& domain = {});

/// Interface vertices without any validation.
std::vector<Vec2> interface_polyline(const ShapeParams& params);

/// d(interface vertex coordinates)/d(theta), rows interleaved (x0, y0, x1, ...).
/// Constant because all three families are affine in theta.
Eigen::MatrixXd interface_jacobian(DesignSpace space);

/// Polygon vertices as a function of theta for one side, and its constant Jacobian.
Polygon side_polygon(const ShapeParams& params, Side side, const SimDomain& domain = {});
Eigen::MatrixXd side_polygon_jacobian(DesignSpace space, Side side);

/// Index of the neck half-height parameter `a`.
int neck_parameter_index(DesignSpace space);

/// Full-joint neck width 2a.
double joint_width(const ShapeParams& params);
Eigen::VectorXd joint_width_gradient(DesignSpace space);

std::vector<double> contact_edge_lengths(const JointGeometry& geom);
/// Rows: contact edges, columns: theta components.
Eigen::MatrixXd contact_edge_length_jacobian(const ShapeParams& params);

/// Plain-text polygon format: `x y` per line, blank line between polygons,
/// then `# contact` followed by `i j` vertex index pairs per polygon.
std::string polygon_text(const JointGeometry& geom);
std::string geometry_svg(const JointGeometry& geom);

}  // namespace dovetail
