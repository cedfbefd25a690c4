#include "dovetail/mesh.hpp"

#include "dovetail/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace dovetail {

namespace {

constexpr double kRefineAngleDeg = 20.7;  // radius-edge ratio sqrt(2)
constexpr double kRequiredAngleDeg = 15.0;
constexpr double kAcuteCornerDeg = 60.0;
constexpr double kSizeRadiusFactor = 0.6;  // circumradius bound relative to h
constexpr double kMinFeatureFactor = 1.0 / 32.0;  // no angle refinement below this edge length
constexpr double kNarrowFeatureFactor = 0.25;    // angle bound waived near features this small

bool lex_less(const Vec2& p, const Vec2& q) { return p.x() < q.x() || (p.x() == q.x() && p.y() < q.y()); }

// Evaluated on the points in lexicographic order, so that every permutation
// of the same three points gets the same magnitude and a consistent sign.
double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2* p[3] = {&a, &b, &c};
  bool flip = false;
  if (lex_less(*p[1], *p[0])) std::swap(p[0], p[1]), flip = !flip;
  if (lex_less(*p[2], *p[1])) std::swap(p[1], p[2]), flip = !flip;
  if (lex_less(*p[1], *p[0])) std::swap(p[0], p[1]), flip = !flip;
  const Vec2 &u = *p[0], &v = *p[1], &w = *p[2];
  const double o = (v.x() - u.x()) * (w.y() - u.y()) - (v.y() - u.y()) * (w.x() - u.x());
  return flip ? -o : o;
}

// > 0 when d lies strictly inside the circumcircle of counter-clockwise abc.
double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

Vec2 circumcenter(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 ba = b - a, ca = c - a;
  const double d = 2.0 * (ba.x() * ca.y() - ba.y() * ca.x());
  const double b2 = ba.squaredNorm(), c2 = ca.squaredNorm();
  return a + Vec2((ca.y() * b2 - ba.y() * c2) / d, (ba.x() * c2 - ca.x() * b2) / d);
}

bool point_in_polygon(const Polygon& poly, const Vec2& p) {
  bool inside = false;
  const int n = poly.size();
  for (int i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly.vertices[i];
    const Vec2& b = poly.vertices[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

double angle_deg(const Vec2& at, const Vec2& p, const Vec2& q) {
  const Vec2 u = p - at, v = q - at;
  const double c = std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

bool segments_cross(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const double d1 = orient(p1, p2, q1), d2 = orient(p1, p2, q2);
  const double d3 = orient(q1, q2, p1), d4 = orient(q1, q2, p2);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

struct Tri {
  std::array<int, 3> v{};
  std::array<int, 3> nbr{-1, -1, -1};  // nbr[i] is across the edge opposite v[i]
  bool alive = true;
  bool inside = false;
};

struct Subseg {
  int a, b, seg;
  double ta, tb;
  bool alive = true;
};

class Refiner {
 public:
  Refiner(const Polygon& poly, double h) : poly_(poly), h_(h) {}

  TriMesh run();

 private:
  int add_point(const Vec2& p, int seg, double t, int corner) {
    pts_.push_back(p);
    pt_seg_.push_back(seg);
    pt_t_.push_back(t);
    pt_corner_.push_back(corner);
    return static_cast<int>(pts_.size()) - 1;
  }
  Vec2 on_segment(int seg, double t) const {
    const Vec2 a = poly_.edge_start(seg), b = poly_.edge_end(seg);
    return a + t * (b - a);
  }
  bool is_super(int v) const { return v < 3; }
  int locate(const Vec2& p) const;
  void insert(int p);
  bool encroaches(const Vec2& p, const Subseg& s) const {
    const Vec2 a = pts_[s.a], b = pts_[s.b];
    return (p - a).dot(p - b) < -1e-12 * (b - a).squaredNorm();
  }
  void split(int s);
  void queue_encroached_by(int p);
  bool has_edge(int a, int b) const;
  bool needs_split(const Vec2& p, const Subseg& s) const;
  void queue_if_encroached(int s);
  bool bad(const Tri& t) const;
  bool seditious(int p, int q) const;
  void mark_inside(Tri& t) const;
  TriMesh finish() const;

  const Polygon& poly_;
  double h_;
  std::vector<Vec2> pts_;
  std::vector<int> pt_seg_;
  std::vector<double> pt_t_;
  std::vector<int> pt_corner_;
  std::vector<Tri> tris_;
  std::vector<Subseg> subsegs_;
  std::vector<int> queue_;
  std::vector<double> corner_angle_;
  std::vector<bool> narrow_;  // polygon vertex with a feature far below h nearby
  std::vector<int> stamp_;
  int stamp_counter_ = 0;
  int last_tri_ = 0;
};

int Refiner::locate(const Vec2& p) const {
  int t = last_tri_;
  if (t < 0 || t >= static_cast<int>(tris_.size()) || !tris_[t].alive) t = -1;
  for (int step = 0; t >= 0 && step < 4 * static_cast<int>(tris_.size()) + 16; ++step) {
    const Tri& tri = tris_[t];
    int next = -2;
    for (int i = 0; i < 3; ++i) {
      if (orient(pts_[tri.v[(i + 1) % 3]], pts_[tri.v[(i + 2) % 3]], p) < 0) {
        next = tri.nbr[i];
        break;
      }
    }
    if (next == -2) return t;
    t = next;
  }
  for (int k = 0; k < static_cast<int>(tris_.size()); ++k) {
    const Tri& tri = tris_[k];
    if (!tri.alive) continue;
    if (orient(pts_[tri.v[0]], pts_[tri.v[1]], p) >= 0 && orient(pts_[tri.v[1]], pts_[tri.v[2]], p) >= 0 &&
        orient(pts_[tri.v[2]], pts_[tri.v[0]], p) >= 0) {
      return k;
    }
  }
  throw Error(ErrorKind::MeshFailure, "point location failed");
}

void Refiner::insert(int pi) {
  const Vec2 p = pts_[pi];
  const int start = locate(p);
  stamp_.resize(tris_.size(), 0);
  const int stamp = ++stamp_counter_;
  std::vector<int> cavity{start};
  stamp_[start] = stamp;
  for (std::size_t k = 0; k < cavity.size(); ++k) {
    const Tri& t = tris_[cavity[k]];
    for (int i = 0; i < 3; ++i) {
      const int nb = t.nbr[i];
      if (nb < 0 || stamp_[nb] == stamp) continue;
      const Tri& n = tris_[nb];
      if (incircle(pts_[n.v[0]], pts_[n.v[1]], pts_[n.v[2]], p) > 0) {
        stamp_[nb] = stamp;
        cavity.push_back(nb);
      }
    }
  }
  // Round-off can leave a cavity that is not star-shaped from p; absorb the
  // blocking neighbours until every boundary edge sees p on its left.
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t k = 0; k < cavity.size(); ++k) {
      const Tri& t = tris_[cavity[k]];
      for (int i = 0; i < 3; ++i) {
        const int nb = t.nbr[i];
        if (nb >= 0 && stamp_[nb] == stamp) continue;
        if (orient(pts_[t.v[(i + 1) % 3]], pts_[t.v[(i + 2) % 3]], p) <= 0) {
          if (nb < 0) throw Error(ErrorKind::MeshFailure, "point outside the bounding triangle");
          stamp_[nb] = stamp;
          cavity.push_back(nb);
          changed = true;
        }
      }
    }
  }

  struct Rim {
    int a, b, outer;
  };
  std::vector<Rim> rim;
  for (int c : cavity) {
    const Tri& t = tris_[c];
    for (int i = 0; i < 3; ++i) {
      const int nb = t.nbr[i];
      if (nb >= 0 && stamp_[nb] == stamp) continue;
      rim.push_back({t.v[(i + 1) % 3], t.v[(i + 2) % 3], nb});
    }
  }
  for (int c : cavity) tris_[c].alive = false;

  std::unordered_map<int, int> starts_at, ends_at;
  const int first = static_cast<int>(tris_.size());
  for (const Rim& r : rim) {
    Tri t;
    t.v = {r.a, r.b, pi};
    t.nbr[2] = r.outer;
    mark_inside(t);
    const int id = static_cast<int>(tris_.size());
    tris_.push_back(t);
    starts_at[r.a] = id;
    ends_at[r.b] = id;
    if (r.outer >= 0) {
      Tri& o = tris_[r.outer];
      for (int i = 0; i < 3; ++i) {
        if (o.v[(i + 1) % 3] == r.b && o.v[(i + 2) % 3] == r.a) o.nbr[i] = id;
      }
    }
  }
  for (int id = first; id < static_cast<int>(tris_.size()); ++id) {
    Tri& t = tris_[id];
    t.nbr[0] = starts_at.at(t.v[1]);
    t.nbr[1] = ends_at.at(t.v[0]);
  }
  last_tri_ = first;
  stamp_.resize(tris_.size(), 0);
}

void Refiner::mark_inside(Tri& t) const {
  if (is_super(t.v[0]) || is_super(t.v[1]) || is_super(t.v[2])) {
    t.inside = false;
    return;
  }
  const Vec2 c = (pts_[t.v[0]] + pts_[t.v[1]] + pts_[t.v[2]]) / 3.0;
  t.inside = point_in_polygon(poly_, c);
}

bool Refiner::has_edge(int a, int b) const {
  for (const Tri& t : tris_) {
    if (!t.alive) continue;
    for (int i = 0; i < 3; ++i) {
      const int p = t.v[i], q = t.v[(i + 1) % 3];
      if ((p == a && q == b) || (p == b && q == a)) return true;
    }
  }
  return false;
}

// Points behind a subsegment or below the feature size only force a split when
// the subsegment is missing from the triangulation; diametral encroachment
// there would chase sharp corners indefinitely.
bool Refiner::needs_split(const Vec2& p, const Subseg& s) const {
  if (!encroaches(p, s)) return false;
  const bool outside = orient(pts_[s.a], pts_[s.b], p) <= 0.0;
  if (!outside && (pts_[s.b] - pts_[s.a]).norm() >= kMinFeatureFactor * h_) return true;
  return !has_edge(s.a, s.b);
}

void Refiner::queue_if_encroached(int s) {
  for (int p = 3; p < static_cast<int>(pts_.size()); ++p) {
    if (p == subsegs_[s].a || p == subsegs_[s].b) continue;
    if (needs_split(pts_[p], subsegs_[s])) {
      queue_.push_back(s);
      return;
    }
  }
}

void Refiner::queue_encroached_by(int p) {
  for (int s = 0; s < static_cast<int>(subsegs_.size()); ++s) {
    const Subseg& ss = subsegs_[s];
    if (!ss.alive || ss.a == p || ss.b == p) continue;
    if (needs_split(pts_[p], ss)) queue_.push_back(s);
  }
}

void Refiner::split(int s) {
  const Subseg old = subsegs_[s];
  subsegs_[s].alive = false;
  const double len = (pts_[old.b] - pts_[old.a]).norm();
  const bool acute_a = pt_corner_[old.a] >= 0 && corner_angle_[pt_corner_[old.a]] < kAcuteCornerDeg;
  const bool acute_b = pt_corner_[old.b] >= 0 && corner_angle_[pt_corner_[old.b]] < kAcuteCornerDeg;
  double frac = 0.5;
  if (acute_a != acute_b) {
    // Concentric shells around sharp corners keep refinement from cascading.
    const double shell = std::pow(2.0, std::round(std::log2(0.5 * len)));
    const double r = shell / len;
    if (r >= 0.25 && r <= 0.75) frac = acute_a ? r : 1.0 - r;
  }
  const double t = old.ta + frac * (old.tb - old.ta);
  const int m = add_point(on_segment(old.seg, t), old.seg, t, -1);
  insert(m);
  subsegs_.push_back({old.a, m, old.seg, old.ta, t});
  subsegs_.push_back({m, old.b, old.seg, t, old.tb});
  const int n = static_cast<int>(subsegs_.size());
  queue_if_encroached(n - 2);
  queue_if_encroached(n - 1);
  queue_encroached_by(m);
}

bool Refiner::bad(const Tri& t) const {
  const Vec2 &a = pts_[t.v[0]], &b = pts_[t.v[1]], &c = pts_[t.v[2]];
  const double la = (b - c).norm(), lb = (c - a).norm(), lc = (a - b).norm();
  const double area = 0.5 * orient(a, b, c);
  const double R = la * lb * lc / (4.0 * area);
  if (R > kSizeRadiusFactor * h_) return true;
  const double lmin = std::min({la, lb, lc});
  const double min_angle = std::asin(std::clamp(lmin / (2.0 * R), 0.0, 1.0)) * 180.0 / std::numbers::pi;
  if (min_angle >= kRefineAngleDeg) return false;
  if (lmin < kMinFeatureFactor * h_) return false;
  // The smallest angle sits opposite the shortest edge; leave sharp input corners alone.
  const int apex = (lmin == la) ? 0 : (lmin == lb) ? 1 : 2;
  const int corner = pt_corner_[t.v[apex]];
  if (corner >= 0 && corner_angle_[corner] < kAcuteCornerDeg) return false;
  if (seditious(t.v[(apex + 1) % 3], t.v[(apex + 2) % 3])) return false;
  return true;
}

// Edge joining two points on the two segments of a sharp corner, at the same
// shell radius. Splitting triangles across such edges never terminates.
bool Refiner::seditious(int p, int q) const {
  const int sp = pt_seg_[p], sq = pt_seg_[q];
  if (sp < 0 || sq < 0 || sp == sq || pt_corner_[p] >= 0 || pt_corner_[q] >= 0) return false;
  const int nv = poly_.size();
  int corner = -1;
  if ((sp + 1) % nv == sq) corner = sq;
  if ((sq + 1) % nv == sp) corner = sp;
  if (corner < 0 || corner_angle_[corner] >= kAcuteCornerDeg) return false;
  const Vec2& c = poly_.vertices[corner];
  const double rp = (pts_[p] - c).norm(), rq = (pts_[q] - c).norm();
  return std::abs(rp - rq) <= 0.05 * std::max(rp, rq);
}

TriMesh Refiner::run() {
  const int nv = poly_.size();
  if (nv < 3) throw Error(ErrorKind::MeshFailure, "polygon needs at least three vertices");
  for (int i = 0; i < nv; ++i) {
    const Vec2& prev = poly_.vertices[(i + nv - 1) % nv];
    const Vec2& cur = poly_.vertices[i];
    const Vec2& next = poly_.vertices[(i + 1) % nv];
    double ang = angle_deg(cur, prev, next);
    if (orient(prev, cur, next) < 0) ang = 360.0 - ang;  // reflex corner of a CCW polygon
    corner_angle_.push_back(ang);
  }
  // Local feature size at each vertex: shortest incident edge or distance to a
  // non-incident edge.
  for (int i = 0; i < nv; ++i) {
    const Vec2& v = poly_.vertices[i];
    double lfs = std::min((poly_.edge_end(i) - v).norm(), (v - poly_.edge_start((i + nv - 1) % nv)).norm());
    for (int e = 0; e < nv; ++e) {
      if (e == i || (e + 1) % nv == i) continue;
      const Vec2 a = poly_.edge_start(e), d = poly_.edge_end(e) - a;
      const double t = std::clamp((v - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
      lfs = std::min(lfs, (a + t * d - v).norm());
    }
    narrow_.push_back(lfs < kNarrowFeatureFactor * h_);
  }

  Eigen::AlignedBox2d box;
  for (const auto& v : poly_.vertices) box.extend(v);
  const Vec2 center = box.center();
  const double span = 20.0 * std::max(box.sizes().maxCoeff(), h_);
  pts_.clear();
  add_point(center + Vec2(-span, -span), -1, 0.0, -1);
  add_point(center + Vec2(span, -span), -1, 0.0, -1);
  add_point(center + Vec2(0.0, span), -1, 0.0, -1);
  Tri root;
  root.v = {0, 1, 2};
  tris_.push_back(root);

  std::vector<int> corner_pt(nv);
  for (int i = 0; i < nv; ++i) {
    corner_pt[i] = add_point(poly_.vertices[i], i, 0.0, i);
    insert(corner_pt[i]);
  }
  for (int e = 0; e < nv; ++e) {
    const double len = (poly_.edge_end(e) - poly_.edge_start(e)).norm();
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / h_ - 1e-9)));
    int prev = corner_pt[e];
    double prev_t = 0.0;
    for (int k = 1; k <= pieces; ++k) {
      const double t = static_cast<double>(k) / pieces;
      int cur;
      if (k == pieces) {
        cur = corner_pt[(e + 1) % nv];
      } else {
        cur = add_point(on_segment(e, t), e, t, -1);
        insert(cur);
      }
      subsegs_.push_back({prev, cur, e, prev_t, t});
      prev = cur;
      prev_t = t;
    }
  }
  for (int s = 0; s < static_cast<int>(subsegs_.size()); ++s) queue_if_encroached(s);

  const double estimate = std::abs(poly_.area()) / (0.4 * h_ * h_);
  const int max_points = static_cast<int>(20.0 * estimate) + 10000;
  std::vector<char> skip;
  int scan_from = 0;
  while (true) {
    if (static_cast<int>(pts_.size()) > max_points) {
      throw Error(ErrorKind::MeshFailure, "refinement did not terminate (point budget exhausted)");
    }
    if (!queue_.empty()) {
      const int s = queue_.back();
      queue_.pop_back();
      if (subsegs_[s].alive) split(s);
      continue;
    }
    skip.resize(tris_.size(), 0);
    // Triangles never change once created, so earlier ones need no rescan.
    int target = -1;
    for (; scan_from < static_cast<int>(tris_.size()); ++scan_from) {
      const Tri& t = tris_[scan_from];
      if (t.alive && t.inside && !skip[scan_from] && bad(t)) {
        target = scan_from;
        break;
      }
    }
    if (target < 0) {
      for (int s = 0; s < static_cast<int>(subsegs_.size()); ++s) {
        if (subsegs_[s].alive && !has_edge(subsegs_[s].a, subsegs_[s].b)) queue_.push_back(s);
      }
      if (queue_.empty()) break;
      continue;
    }
    const Tri& t = tris_[target];
    const Vec2 c = circumcenter(pts_[t.v[0]], pts_[t.v[1]], pts_[t.v[2]]);
    bool too_small = false;
    for (int s = 0; s < static_cast<int>(subsegs_.size()); ++s) {
      const Subseg& ss = subsegs_[s];
      if (!ss.alive || !encroaches(c, ss)) continue;
      queue_.push_back(s);
      if ((pts_[ss.b] - pts_[ss.a]).norm() < kMinFeatureFactor * h_) too_small = true;
    }
    if (too_small) {
      // Splitting further would only chase a sharp corner down to round-off.
      queue_.clear();
      skip[target] = 1;
      continue;
    }
    if (!queue_.empty()) continue;
    if (point_in_polygon(poly_, c)) {
      last_tri_ = target;
      const int p = add_point(c, -1, 0.0, -1);
      insert(p);
      continue;
    }
    const Vec2 centroid = (pts_[t.v[0]] + pts_[t.v[1]] + pts_[t.v[2]]) / 3.0;
    for (int s = 0; s < static_cast<int>(subsegs_.size()); ++s) {
      const Subseg& ss = subsegs_[s];
      if (ss.alive && segments_cross(centroid, c, pts_[ss.a], pts_[ss.b])) {
        queue_.push_back(s);
        break;
      }
    }
    if (queue_.empty()) skip[target] = 1;
  }
  return finish();
}

TriMesh Refiner::finish() const {
  TriMesh mesh;
  mesh.polygon = poly_;
  mesh.target_step = h_;
  std::vector<int> remap(pts_.size(), -1);
  std::vector<char> used(pts_.size(), 0);
  for (const Tri& t : tris_) {
    if (!t.alive || !t.inside) continue;
    for (int v : t.v) used[v] = 1;
  }
  std::vector<int> original;
  for (int p = 3; p < static_cast<int>(pts_.size()); ++p) {
    if (!used[p]) continue;
    remap[p] = mesh.node_count();
    original.push_back(p);
    mesh.nodes.push_back(pts_[p]);
    mesh.node_segment.push_back(pt_seg_[p]);
    mesh.node_t.push_back(pt_t_[p]);
    mesh.node_corner.push_back(pt_corner_[p]);
  }
  for (const Tri& t : tris_) {
    if (!t.alive || !t.inside) continue;
    mesh.triangles.push_back({remap[t.v[0]], remap[t.v[1]], remap[t.v[2]]});
  }
  std::vector<Subseg> segs;
  for (const Subseg& s : subsegs_) {
    if (s.alive) segs.push_back(s);
  }
  std::sort(segs.begin(), segs.end(), [](const Subseg& x, const Subseg& y) {
    return x.seg != y.seg ? x.seg < y.seg : x.ta < y.ta;
  });
  for (const Subseg& s : segs) {
    if (remap[s.a] < 0 || remap[s.b] < 0) throw Error(ErrorKind::MeshFailure, "boundary vertex lost");
    mesh.boundary_edges.push_back({remap[s.a], remap[s.b], s.seg});
  }

  const double poly_area = std::abs(poly_.area());
  if (std::abs(mesh.total_area() - poly_area) > 1e-9 * poly_area) {
    throw Error(ErrorKind::MeshFailure, "triangulation does not conform to the polygon boundary");
  }
  for (int k = 0; k < static_cast<int>(mesh.triangles.size()); ++k) {
    const auto& tri = mesh.triangles[k];
    const Vec2 &a = mesh.nodes[tri[0]], &b = mesh.nodes[tri[1]], &c = mesh.nodes[tri[2]];
    const Vec2 centroid = (a + b + c) / 3.0;
    std::ostringstream where;
    where << " near (" << centroid.x() << ", " << centroid.y() << ")";
    if (mesh.triangle_area(k) <= 0.0) throw Error(ErrorKind::MeshFailure, "inverted triangle" + where.str());
    const double angles[3] = {angle_deg(a, b, c), angle_deg(b, c, a), angle_deg(c, a, b)};
    for (int i = 0; i < 3; ++i) {
      const int corner = mesh.node_corner[tri[i]];
      const bool sharp_corner = corner >= 0 && corner_angle_[corner] < kAcuteCornerDeg;
      if (angles[i] < kRequiredAngleDeg && !sharp_corner) {
        bool at_sharp_neighbour = false;
        for (int j = 0; j < 3; ++j) {
          const int cj = mesh.node_corner[tri[j]];
          if (cj >= 0 && corner_angle_[cj] < kAcuteCornerDeg) at_sharp_neighbour = true;
          if (seditious(original[tri[j]], original[tri[(j + 1) % 3]])) at_sharp_neighbour = true;
        }
        for (int c = 0; c < poly_.size(); ++c) {
          if ((corner_angle_[c] < kAcuteCornerDeg || narrow_[c]) && (centroid - poly_.vertices[c]).norm() < h_) {
            at_sharp_neighbour = true;
          }
        }
        if (!at_sharp_neighbour) {
          throw Error(ErrorKind::MeshFailure, "minimum angle bound violated" + where.str());
        }
      }
    }
    const double longest = std::max({(a - b).norm(), (b - c).norm(), (c - a).norm()});
    if (longest > 1.5 * h_) throw Error(ErrorKind::MeshFailure, "edge length bound violated" + where.str());
  }
  return mesh;
}

}  // namespace

double TriMesh::triangle_area(int t) const {
  const auto& tri = triangles[t];
  return 0.5 * orient(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
}

double TriMesh::total_area() const {
  double a = 0.0;
  for (int t = 0; t < static_cast<int>(triangles.size()); ++t) a += triangle_area(t);
  return a;
}

std::vector<int> TriMesh::segment_nodes(int segment) const {
  std::vector<int> out;
  for (const auto& e : boundary_edges) {
    if (e.segment != segment) continue;
    if (out.empty()) out.push_back(e.a);
    out.push_back(e.b);
  }
  return out;
}

std::vector<int> TriMesh::tagged_nodes(EdgeTag tag) const {
  std::vector<int> out;
  for (const auto& e : boundary_edges) {
    if (polygon.edge_tags[e.segment] != tag) continue;
    out.push_back(e.a);
    out.push_back(e.b);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int TriMesh::contact_segment(int k) const {
  for (int e = 0; e < polygon.size(); ++e) {
    if (polygon.contact_index[e] == k) return e;
  }
  return -1;
}

int TriMesh::contact_edge_count() const {
  int n = 0;
  for (int idx : polygon.contact_index) n = std::max(n, idx + 1);
  return n;
}

TriMesh triangulate(const Polygon& polygon, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::DomainError, "mesh step must be positive");
  if (polygon.area() <= 0.0) throw Error(ErrorKind::MeshFailure, "polygon must be counter-clockwise");
  Refiner refiner(polygon, h);
  return refiner.run();
}

TriMesh triangulate(const JointGeometry& geom, Side side, double h) {
  TriMesh mesh = triangulate(geom.polygon(side), h);
  mesh.side = side;
  return mesh;
}

MeshQuality mesh_quality(const TriMesh& mesh) {
  MeshQuality q;
  q.min_angle_deg = 180.0;
  q.min_area = std::numeric_limits<double>::infinity();
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 &a = mesh.nodes[tri[0]], &b = mesh.nodes[tri[1]], &c = mesh.nodes[tri[2]];
    q.min_angle_deg = std::min({q.min_angle_deg, angle_deg(a, b, c), angle_deg(b, c, a), angle_deg(c, a, b)});
    q.max_edge = std::max({q.max_edge, (a - b).norm(), (b - c).norm(), (c - a).norm()});
    q.min_area = std::min(q.min_area, mesh.triangle_area(t));
  }
  return q;
}

std::string mesh_text(const TriMesh& mesh) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& v : mesh.nodes) os << "v " << v.x() << ' ' << v.y() << '\n';
  for (const auto& t : mesh.triangles) os << "t " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  std::vector<std::pair<int, std::string>> markers;
  for (const auto& e : mesh.boundary_edges) {
    const int k = mesh.polygon.contact_index[e.segment];
    const std::string tag = k >= 0 ? "interface-edge-" + std::to_string(k)
                                   : std::string(to_string(mesh.polygon.edge_tags[e.segment]));
    markers.emplace_back(e.a, tag);
    markers.emplace_back(e.b, tag);
  }
  std::sort(markers.begin(), markers.end());
  markers.erase(std::unique(markers.begin(), markers.end()), markers.end());
  for (const auto& [node, tag] : markers) os << "m " << node << ' ' << tag << '\n';
  return os.str();
}

std::string field_text(const Eigen::VectorXd& field, const std::string& prefix) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i + 1 < field.size(); i += 2) os << prefix << ' ' << field[i] << ' ' << field[i + 1] << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

MorphMap::MorphMap(const TriMesh& mesh, ShapeParams reference, Side side, SimDomain domain)
    : mesh_(std::make_shared<const TriMesh>(mesh)),
      reference_(std::move(reference)),
      side_(side),
      domain_(domain),
      polygon_jacobian_(side_polygon_jacobian(reference_.space, side)),
      reference_polygon_(mesh.polygon.vertices) {
  const int n = mesh.node_count();
  interior_slot_.assign(n, -1);
  for (int i = 0; i < n; ++i) {
    if (mesh.node_segment[i] < 0) {
      interior_slot_[i] = static_cast<int>(interior_.size());
      interior_.push_back(i);
    }
  }
  // Uniform graph Laplacian; rows sum to zero so constants are reproduced.
  std::vector<std::vector<int>> adj(n);
  for (const auto& t : mesh.triangles) {
    for (int i = 0; i < 3; ++i) {
      adj[t[i]].push_back(t[(i + 1) % 3]);
      adj[t[(i + 1) % 3]].push_back(t[i]);
    }
  }
  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> ii, ib;
  for (int node : interior_) {
    auto& nb = adj[node];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    const int row = interior_slot_[node];
    ii.emplace_back(row, row, static_cast<double>(nb.size()));
    for (int j : nb) {
      if (interior_slot_[j] >= 0) {
        ii.emplace_back(row, interior_slot_[j], -1.0);
      } else {
        ib.emplace_back(row, j, -1.0);
      }
    }
  }
  const int ni = static_cast<int>(interior_.size());
  Eigen::SparseMatrix<double> Lii(ni, ni);
  Lii.setFromTriplets(ii.begin(), ii.end());
  coupling_.resize(ni, n);
  coupling_.setFromTriplets(ib.begin(), ib.end());
  interior_solver_ = std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
  if (ni > 0) {
    interior_solver_->compute(Lii);
    if (interior_solver_->info() != Eigen::Success) {
      throw Error(ErrorKind::MeshFailure, "interior extension operator is singular");
    }
  }
}

Eigen::VectorXd MorphMap::extend(const Eigen::VectorXd& boundary_displacement) const {
  const TriMesh& mesh = *mesh_;
  const int n = mesh.node_count();
  Eigen::VectorXd out = boundary_displacement;
  if (interior_.empty()) return out;
  Eigen::MatrixXd db(n, 2);
  for (int i = 0; i < n; ++i) {
    const bool boundary = interior_slot_[i] < 0;
    db(i, 0) = boundary ? boundary_displacement[2 * i] : 0.0;
    db(i, 1) = boundary ? boundary_displacement[2 * i + 1] : 0.0;
  }
  const Eigen::MatrixXd rhs = -(coupling_ * db);
  const Eigen::MatrixXd di = interior_solver_->solve(rhs);
  for (std::size_t k = 0; k < interior_.size(); ++k) {
    out[2 * interior_[k]] = di(k, 0);
    out[2 * interior_[k] + 1] = di(k, 1);
  }
  return out;
}

Eigen::VectorXd MorphMap::polygon_to_nodes_linear(const Eigen::VectorXd& polygon_delta) const {
  const TriMesh& mesh = *mesh_;
  const int nv = static_cast<int>(reference_polygon_.size());
  Eigen::VectorXd boundary = Eigen::VectorXd::Zero(mesh.dof_count());
  for (int i = 0; i < mesh.node_count(); ++i) {
    const int s = mesh.node_segment[i];
    if (s < 0) continue;
    const double t = mesh.node_t[i];
    const int e = (s + 1) % nv;
    boundary.segment<2>(2 * i) = (1.0 - t) * polygon_delta.segment<2>(2 * s) + t * polygon_delta.segment<2>(2 * e);
  }
  return extend(boundary);
}

std::vector<Vec2> MorphMap::nodes_for_polygon(const std::vector<Vec2>& polygon_vertices) const {
  const TriMesh& mesh = *mesh_;
  const int nv = static_cast<int>(reference_polygon_.size());
  Eigen::VectorXd delta(2 * nv);
  for (int v = 0; v < nv; ++v) delta.segment<2>(2 * v) = polygon_vertices[v] - reference_polygon_[v];
  const Eigen::VectorXd dx = polygon_to_nodes_linear(delta);
  std::vector<Vec2> out(mesh.node_count());
  for (int i = 0; i < mesh.node_count(); ++i) {
    const int s = mesh.node_segment[i];
    if (s >= 0) {
      // Evaluate boundary nodes directly on the new segment so they stay exactly on it.
      const Vec2 a = polygon_vertices[s], b = polygon_vertices[(s + 1) % nv];
      out[i] = a + mesh.node_t[i] * (b - a);
    } else {
      out[i] = mesh.nodes[i] + dx.segment<2>(2 * i);
    }
  }
  return out;
}

std::vector<Vec2> MorphMap::morph_nodes(const Eigen::VectorXd& theta) const {
  const Polygon poly = side_polygon({reference_.space, theta}, side_, domain_);
  auto nodes = nodes_for_polygon(poly.vertices);
  const TriMesh& mesh = *mesh_;
  for (const auto& t : mesh.triangles) {
    if (orient(nodes[t[0]], nodes[t[1]], nodes[t[2]]) <= 0.0) {
      throw Error(ErrorKind::MorphDegenerate, "morphed triangle has non-positive area; remesh required");
    }
  }
  return nodes;
}

TriMesh MorphMap::morphed_mesh(const Eigen::VectorXd& theta) const {
  TriMesh out = *mesh_;
  out.nodes = morph_nodes(theta);
  out.polygon = side_polygon({reference_.space, theta}, side_, domain_);
  return out;
}

Eigen::VectorXd MorphMap::jvp(const Eigen::VectorXd& v_theta) const {
  return polygon_to_nodes_linear(polygon_jacobian_ * v_theta);
}

Eigen::VectorXd MorphMap::vjp(const Eigen::VectorXd& node_cotangent) const {
  const TriMesh& mesh = *mesh_;
  const int n = mesh.node_count();
  const int nv = static_cast<int>(reference_polygon_.size());
  // Transpose of the harmonic extension: interior cotangent flows to boundary nodes.
  Eigen::VectorXd boundary_bar = node_cotangent;
  if (!interior_.empty()) {
    Eigen::MatrixXd gi(interior_.size(), 2);
    for (std::size_t k = 0; k < interior_.size(); ++k) {
      gi(k, 0) = node_cotangent[2 * interior_[k]];
      gi(k, 1) = node_cotangent[2 * interior_[k] + 1];
    }
    const Eigen::MatrixXd y = interior_solver_->solve(gi);
    const Eigen::MatrixXd add = -(Eigen::SparseMatrix<double>(coupling_.transpose()) * y);
    for (int i = 0; i < n; ++i) {
      if (interior_slot_[i] >= 0) continue;
      boundary_bar[2 * i] += add(i, 0);
      boundary_bar[2 * i + 1] += add(i, 1);
    }
  }
  Eigen::VectorXd poly_bar = Eigen::VectorXd::Zero(2 * nv);
  for (int i = 0; i < n; ++i) {
    const int s = mesh.node_segment[i];
    if (s < 0) continue;
    const double t = mesh.node_t[i];
    poly_bar.segment<2>(2 * s) += (1.0 - t) * boundary_bar.segment<2>(2 * i);
    poly_bar.segment<2>(2 * ((s + 1) % nv)) += t * boundary_bar.segment<2>(2 * i);
  }
  return polygon_jacobian_.transpose() * poly_bar;
}

MorphMap build_morph(const JointGeometry& geom, const TriMesh& mesh, const ShapeParams& theta_ref) {
  if (!mesh.side) throw Error(ErrorKind::DomainError, "mesh was not generated from a joint side");
  return MorphMap(mesh, theta_ref, *mesh.side, geom.domain);
}

}  // namespace dovetail
