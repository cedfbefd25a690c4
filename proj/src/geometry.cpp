#include "dovetail/geometry.hpp"

#include "dovetail/dual.hpp"
#include "dovetail/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace dovetail {

namespace {

constexpr double kDegenerateTol = 1e-9;
// Interface vertices keep this distance from the loaded outer edges.
constexpr double kOuterClearance = 1.0;

template <class T>
using Point = std::array<T, 2>;

// All families are affine in theta; writing them once over a scalar type gives
// both the values and the Jacobian.
template <class T>
std::vector<Point<T>> interface_points(DesignSpace space, const std::vector<T>& th, double height) {
  const T H(height);
  const T zero(0.0);
  switch (space) {
    case DesignSpace::SingleDovetail: {
      const T &a = th[0], &b = th[1], &L = th[2];
      return {{zero, zero}, {zero, H - a}, {L, H - b}, {L, H}};
    }
    case DesignSpace::ComplexDovetail: {
      const T &x0 = th[0], &y1 = th[1], &x1 = th[2], &a = th[3], &b = th[4], &L = th[5];
      return {{x0, zero}, {x0, y1}, {x1, y1}, {x1, H - a}, {x1 + L, H - b}, {x1 + L, H}};
    }
    case DesignSpace::DoubleDovetail: {
      const T &x0 = th[0], &x1 = th[1], &y1 = th[2], &a = th[3], &b = th[4], &L = th[5];
      return {{x0, zero}, {x1, y1}, {x1, H - a}, {x1 + L, H - b}, {x1 + L, H}};
    }
  }
  return {};
}

// Maps polygon vertex slots to interface vertex indices (-1 for fixed corners).
std::vector<int> polygon_interface_map(int interface_count, Side side) {
  std::vector<int> map;
  const int m = interface_count - 1;
  if (side == Side::Left) {
    map.push_back(-1);
    for (int k = 0; k <= m; ++k) map.push_back(k);
    map.push_back(-1);
  } else {
    map.push_back(0);
    map.push_back(-1);
    map.push_back(-1);
    for (int k = m; k >= 1; --k) map.push_back(k);
  }
  return map;
}

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (a + t * ab - p).norm();
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const double d1 = cross(p2 - p1, q1 - p1);
  const double d2 = cross(p2 - p1, q2 - p1);
  const double d3 = cross(q2 - q1, p1 - q1);
  const double d4 = cross(q2 - q1, p2 - q1);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

double segment_distance(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  if (segments_intersect(p1, p2, q1, q2)) return 0.0;
  return std::min({point_segment_distance(p1, q1, q2), point_segment_distance(p2, q1, q2),
                   point_segment_distance(q1, p1, p2), point_segment_distance(q2, p1, p2)});
}

void check_simple(const Polygon& poly, const char* name, std::vector<std::string>& out) {
  const int n = poly.size();
  for (int e = 0; e < n; ++e) {
    if ((poly.edge_end(e) - poly.edge_start(e)).norm() <= kDegenerateTol) {
      out.push_back(std::string(name) + " polygon edge " + std::to_string(e) + " has zero length");
    }
  }
  for (int e = 0; e < n; ++e) {
    for (int f = e + 1; f < n; ++f) {
      const bool adjacent = (f == e + 1) || (e == 0 && f == n - 1);
      double dist;
      if (!adjacent) {
        dist = segment_distance(poly.edge_start(e), poly.edge_end(e), poly.edge_start(f), poly.edge_end(f));
      } else {
        // Shared vertex; the far endpoints must stay off the neighbouring edge.
        const int shared = (f == e + 1) ? f : e;
        const int far_e = (f == e + 1) ? e : (e + 1) % n;
        const int far_f = (f == e + 1) ? (f + 1) % n : f;
        (void)shared;
        dist = std::min(point_segment_distance(poly.vertices[far_e], poly.edge_start(f), poly.edge_end(f)),
                        point_segment_distance(poly.vertices[far_f], poly.edge_start(e), poly.edge_end(e)));
      }
      if (dist <= kDegenerateTol) {
        out.push_back(std::string(name) + " polygon self-intersects (edges " + std::to_string(e) + ", " +
                      std::to_string(f) + ")");
      }
    }
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

int parameter_count(DesignSpace space) { return space == DesignSpace::SingleDovetail ? 3 : 6; }

std::string_view to_string(DesignSpace space) {
  switch (space) {
    case DesignSpace::SingleDovetail: return "single";
    case DesignSpace::ComplexDovetail: return "complex";
    case DesignSpace::DoubleDovetail: return "double";
  }
  return "unknown";
}

DesignSpace design_space_from_string(std::string_view name) {
  if (name == "single" || name == "SingleDovetail") return DesignSpace::SingleDovetail;
  if (name == "complex" || name == "ComplexDovetail") return DesignSpace::ComplexDovetail;
  if (name == "double" || name == "DoubleDovetail") return DesignSpace::DoubleDovetail;
  throw Error(ErrorKind::InvalidConfig, "unknown design space '" + std::string(name) + "'");
}

std::string_view to_string(EdgeTag tag) {
  switch (tag) {
    case EdgeTag::Contact: return "contact";
    case EdgeTag::Traction: return "traction";
    case EdgeTag::Symmetry: return "symmetry";
    case EdgeTag::Free: return "free";
  }
  return "unknown";
}

double Polygon::area() const {
  double a = 0.0;
  for (int i = 0; i < size(); ++i) a += cross(edge_start(i), edge_end(i));
  return 0.5 * a;
}

int neck_parameter_index(DesignSpace space) { return space == DesignSpace::SingleDovetail ? 0 : 3; }

std::vector<Vec2> interface_polyline(const ShapeParams& params) {
  std::vector<double> th(params.theta.data(), params.theta.data() + params.theta.size());
  std::vector<Vec2> out;
  for (const auto& p : interface_points<double>(params.space, th, SimDomain{}.height)) out.emplace_back(p[0], p[1]);
  return out;
}

Eigen::MatrixXd interface_jacobian(DesignSpace space) {
  const int n = parameter_count(space);
  using D = Dual<6>;
  std::vector<D> th;
  for (int i = 0; i < n; ++i) th.push_back(D::variable(1.0, i));
  const auto pts = interface_points<D>(space, th, SimDomain{}.height);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * static_cast<int>(pts.size()), n);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    for (int c = 0; c < 2; ++c) {
      for (int i = 0; i < n; ++i) J(2 * k + c, i) = pts[k][c].d[i];
    }
  }
  return J;
}

Polygon side_polygon(const ShapeParams& params, Side side, const SimDomain& domain) {
  std::vector<double> th(params.theta.data(), params.theta.data() + params.theta.size());
  std::vector<Vec2> iface;
  for (const auto& p : interface_points<double>(params.space, th, domain.height)) iface.emplace_back(p[0], p[1]);
  const int m = static_cast<int>(iface.size()) - 1;
  const double W = domain.half_width;
  const double H = domain.height;

  Polygon poly;
  if (side == Side::Left) {
    poly.vertices.emplace_back(-W, 0.0);
    poly.edge_tags.push_back(EdgeTag::Free);
    poly.contact_index.push_back(-1);
    for (int k = 0; k <= m; ++k) {
      poly.vertices.push_back(iface[k]);
      if (k < m) {
        poly.edge_tags.push_back(EdgeTag::Contact);
        poly.contact_index.push_back(k);
      }
    }
    poly.edge_tags.push_back(EdgeTag::Symmetry);
    poly.contact_index.push_back(-1);
    poly.vertices.emplace_back(-W, H);
    poly.edge_tags.push_back(EdgeTag::Traction);
    poly.contact_index.push_back(-1);
  } else {
    poly.vertices.push_back(iface[0]);
    poly.edge_tags.push_back(EdgeTag::Free);
    poly.contact_index.push_back(-1);
    poly.vertices.emplace_back(W, 0.0);
    poly.edge_tags.push_back(EdgeTag::Traction);
    poly.contact_index.push_back(-1);
    poly.vertices.emplace_back(W, H);
    poly.edge_tags.push_back(EdgeTag::Symmetry);
    poly.contact_index.push_back(-1);
    for (int k = m; k >= 1; --k) {
      poly.vertices.push_back(iface[k]);
      poly.edge_tags.push_back(EdgeTag::Contact);
      poly.contact_index.push_back(k - 1);
    }
  }
  return poly;
}

Eigen::MatrixXd side_polygon_jacobian(DesignSpace space, Side side) {
  const Eigen::MatrixXd Ji = interface_jacobian(space);
  const int count = static_cast<int>(Ji.rows()) / 2;
  const auto map = polygon_interface_map(count, side);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * static_cast<int>(map.size()), Ji.cols());
  for (std::size_t v = 0; v < map.size(); ++v) {
    if (map[v] >= 0) J.middleRows(2 * v, 2) = Ji.middleRows(2 * map[v], 2);
  }
  return J;
}

std::vector<std::string> validate_params(const ShapeParams& params, const SimDomain& domain) {
  std::vector<std::string> out;
  const auto& th = params.theta;
  const int n = parameter_count(params.space);
  if (th.size() != n) {
    out.push_back(std::string(to_string(params.space)) + " expects " + std::to_string(n) + " parameters, got " +
                  std::to_string(th.size()));
    return out;
  }
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(th[i])) out.push_back("theta[" + std::to_string(i) + "] is not finite");
  }
  if (!out.empty()) return out;

  const double H = domain.height;
  const int ia = neck_parameter_index(params.space);
  const double a = th[ia], b = th[ia + 1], L = th[ia + 2];
  if (!(a > 0)) out.push_back("a > 0 violated (a = " + fmt(a) + ")");
  if (!(a <= b)) out.push_back("a <= b violated (a = " + fmt(a) + ", b = " + fmt(b) + ")");
  if (!(b <= H)) out.push_back("b <= " + fmt(H) + " violated (b = " + fmt(b) + ")");
  if (!(L > 0)) out.push_back("L > 0 violated (L = " + fmt(L) + ")");

  if (params.space == DesignSpace::ComplexDovetail) {
    const double x0 = th[0], y1 = th[1], x1 = th[2];
    if (!(y1 > 0)) out.push_back("y1 > 0 violated (y1 = " + fmt(y1) + ")");
    if (!(y1 < H - b)) out.push_back("y1 < height - b violated (y1 = " + fmt(y1) + ")");
    if (!(std::abs(x1 - x0) > kDegenerateTol)) out.push_back("x1 != x0 violated (zero-length shoulder)");
  } else if (params.space == DesignSpace::DoubleDovetail) {
    const double y1 = th[2];
    if (!(y1 > 0)) out.push_back("y1 > 0 violated (y1 = " + fmt(y1) + ")");
    if (!(y1 < H - b)) out.push_back("y1 < height - b violated (y1 = " + fmt(y1) + ")");
  }

  const double xmax = domain.half_width - kOuterClearance;
  std::vector<double> thv(th.data(), th.data() + n);
  const auto pts = interface_points<double>(params.space, thv, H);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double x = pts[k][0], y = pts[k][1];
    if (std::abs(x) > xmax || y < 0.0 || y > H) {
      out.push_back("interface vertex " + std::to_string(k) + " (" + fmt(x) + ", " + fmt(y) +
                    ") outside the half-block");
    }
  }
  if (!out.empty()) return out;

  check_simple(side_polygon(params, Side::Left, domain), "left", out);
  check_simple(side_polygon(params, Side::Right, domain), "right", out);
  return out;
}

JointGeometry build_geometry(const ShapeParams& params, const SimDomain& domain) {
  auto violations = validate_params(params, domain);
  if (!violations.empty()) throw InvalidParams(std::move(violations));
  JointGeometry g;
  g.space = params.space;
  g.domain = domain;
  g.left = side_polygon(params, Side::Left, domain);
  g.right = side_polygon(params, Side::Right, domain);
  std::vector<double> th(params.theta.data(), params.theta.data() + params.theta.size());
  for (const auto& p : interface_points<double>(params.space, th, domain.height)) {
    g.interface_polyline.emplace_back(p[0], p[1]);
  }
  return g;
}

double joint_width(const ShapeParams& params) {
  auto violations = validate_params(params);
  if (!violations.empty()) throw InvalidParams(std::move(violations));
  return 2.0 * params.theta[neck_parameter_index(params.space)];
}

Eigen::VectorXd joint_width_gradient(DesignSpace space) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(parameter_count(space));
  g[neck_parameter_index(space)] = 2.0;
  return g;
}

std::vector<double> contact_edge_lengths(const JointGeometry& geom) {
  std::vector<double> out;
  for (std::size_t k = 0; k + 1 < geom.interface_polyline.size(); ++k) {
    out.push_back((geom.interface_polyline[k + 1] - geom.interface_polyline[k]).norm());
  }
  return out;
}

Eigen::MatrixXd contact_edge_length_jacobian(const ShapeParams& params) {
  const auto pts = interface_polyline(params);
  const Eigen::MatrixXd J = interface_jacobian(params.space);
  const int m = static_cast<int>(pts.size()) - 1;
  Eigen::MatrixXd out(m, params.theta.size());
  for (int k = 0; k < m; ++k) {
    const Vec2 e = pts[k + 1] - pts[k];
    const Vec2 dir = e / e.norm();
    out.row(k) = dir.transpose() * (J.middleRows(2 * (k + 1), 2) - J.middleRows(2 * k, 2));
  }
  return out;
}

std::string polygon_text(const JointGeometry& geom) {
  std::ostringstream os;
  os << std::setprecision(17);
  const Polygon* polys[2] = {&geom.left, &geom.right};
  for (int p = 0; p < 2; ++p) {
    if (p > 0) os << '\n';
    for (const auto& v : polys[p]->vertices) os << v.x() << ' ' << v.y() << '\n';
  }
  os << "\n# contact\n";
  for (int p = 0; p < 2; ++p) {
    if (p > 0) os << '\n';
    const Polygon& poly = *polys[p];
    for (int e = 0; e < poly.size(); ++e) {
      if (poly.edge_tags[e] == EdgeTag::Contact) os << e << ' ' << (e + 1) % poly.size() << '\n';
    }
  }
  return os.str();
}

std::string geometry_svg(const JointGeometry& geom) {
  const double W = geom.domain.half_width, H = geom.domain.height;
  std::ostringstream os;
  os << std::setprecision(10);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * W << "mm\" height=\"" << H << "mm\" viewBox=\""
     << -W << " 0 " << 2 * W << ' ' << H << "\">\n";
  os << "<g transform=\"translate(0 " << H << ") scale(1 -1)\">\n";
  const char* fills[2] = {"#c8d7e6", "#e6d2c8"};
  const Polygon* polys[2] = {&geom.left, &geom.right};
  for (int p = 0; p < 2; ++p) {
    os << "<polygon fill=\"" << fills[p] << "\" stroke=\"#333\" stroke-width=\"0.05\" points=\"";
    for (const auto& v : polys[p]->vertices) os << v.x() << ',' << v.y() << ' ';
    os << "\"/>\n";
  }
  for (std::size_t k = 0; k + 1 < geom.interface_polyline.size(); ++k) {
    const auto& a = geom.interface_polyline[k];
    const auto& b = geom.interface_polyline[k + 1];
    os << "<line class=\"contact\" x1=\"" << a.x() << "\" y1=\"" << a.y() << "\" x2=\"" << b.x() << "\" y2=\""
       << b.y() << "\" stroke=\"#d22\" stroke-width=\"0.15\"/>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

}  // namespace dovetail
