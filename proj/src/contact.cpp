#include "dovetail/contact.hpp"

#include "dovetail/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace dovetail {

namespace {

Vec2 deformed(const TriMesh& mesh, const Eigen::VectorXd& u, int node) {
  return mesh.nodes[node] + Vec2(u[2 * node], u[2 * node + 1]);
}

// Calls f(edge, line, node, weight) for both ends of every contact edge, where
// weight = w_pen * |edge| / 2 is the trapezoid weight.
template <class F>
void for_each_contact_sample(const TriMesh& mesh, const std::vector<ContactLine>& lines, const PenaltyConfig& cfg,
                             F&& f) {
  for (const auto& e : mesh.boundary_edges) {
    const int k = mesh.polygon.contact_index[e.segment];
    if (k < 0) continue;
    if (k >= static_cast<int>(lines.size())) throw Error(ErrorKind::DomainError, "no contact line for interface edge");
    const double weight = 0.5 * cfg.w_pen * (mesh.nodes[e.b] - mesh.nodes[e.a]).norm();
    f(e, lines[k], e.a, weight);
    f(e, lines[k], e.b, weight);
  }
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Elastic side with its constant stiffness and load, shared by all solves.
struct SideSystem {
  const TriMesh& mesh;
  DofMap dofs;
  Eigen::SparseMatrix<double> K;
  Eigen::VectorXd f;

  SideSystem(const TriMesh& m, const Material& mat, const LoadCase& load)
      : mesh(m), dofs(apply_symmetry(m)), K(elastic_tangent(m, mat)), f(traction_load(m, load)) {}

  double energy(const Eigen::VectorXd& u, const std::vector<ContactLine>& lines, const PenaltyConfig& cfg) const {
    return 0.5 * u.dot(K * u) - f.dot(u) + penalty_energy(mesh, u, lines, cfg);
  }
  // E(u + du) - E(u) without the cancellation of two large quadratic forms.
  double energy_change(const Eigen::VectorXd& u, const Eigen::VectorXd& du, const std::vector<ContactLine>& lines,
                       const PenaltyConfig& cfg) const {
    const Eigen::VectorXd Kdu = K * du;
    return du.dot(K * u - f) + 0.5 * du.dot(Kdu) + penalty_energy(mesh, u + du, lines, cfg) -
           penalty_energy(mesh, u, lines, cfg);
  }
  // Magnitude of the terms summed in energy(), for round-off estimates.
  double energy_scale(const Eigen::VectorXd& u, const std::vector<ContactLine>& lines,
                      const PenaltyConfig& cfg) const {
    return 0.5 * std::abs(u.dot(K * u)) + std::abs(f.dot(u)) + penalty_energy(mesh, u, lines, cfg);
  }
  // K u - f is accumulated in long double: rigid drift makes its row terms
  // cancel, and the double round-off floor limited the solution accuracy.
  Eigen::VectorXd residual(const Eigen::VectorXd& u, const std::vector<ContactLine>& lines,
                           const PenaltyConfig& cfg) const {
    std::vector<long double> acc(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) acc[i] = -static_cast<long double>(f[i]);
    for (int j = 0; j < K.outerSize(); ++j) {
      const long double uj = u[j];
      for (Eigen::SparseMatrix<double>::InnerIterator it(K, j); it; ++it) {
        acc[it.row()] += static_cast<long double>(it.value()) * uj;
      }
    }
    const Eigen::VectorXd pen = penalty_gradient(mesh, u, lines, cfg);
    Eigen::VectorXd r(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) r[i] = static_cast<double>(acc[i] + pen[i]);
    return r;
  }
  Eigen::SparseMatrix<double> hessian(const Eigen::VectorXd& u, const std::vector<ContactLine>& lines,
                                      const PenaltyConfig& cfg) const {
    return dofs.restrict(Eigen::SparseMatrix<double>(K + penalty_hessian(mesh, u, lines, cfg)));
  }
  std::shared_ptr<Factorization> factorize(const Eigen::SparseMatrix<double>& H) const {
    auto solver = std::make_shared<Factorization>(H);
    if (solver->info() != Eigen::Success) throw Error(ErrorKind::SingularTangent, "tangent factorization failed");
    const Eigen::VectorXd D = solver->vectorD();
    if (!(D.minCoeff() > 1e-14 * D.cwiseAbs().maxCoeff())) {
      throw Error(ErrorKind::SingularTangent, "tangent is singular (no contact holds the side in place)");
    }
    return solver;
  }
};

NewtonResult newton(const SideSystem& sys, const std::vector<ContactLine>& lines, const PenaltyConfig& cfg,
                    const Eigen::VectorXd& u_init, const NewtonOptions& opts, bool keep_tangent) {
  NewtonResult res;
  Eigen::VectorXd u = sys.dofs.expand(sys.dofs.restrict(u_init));
  double E = sys.energy(u, lines, cfg);
  Eigen::VectorXd r = sys.dofs.restrict(sys.residual(u, lines, cfg));
  double rn = inf_norm(r);
  for (int it = 0; it < opts.max_iters; ++it) {
    const bool polish = rn <= opts.tol;
    const Eigen::SparseMatrix<double> H = sys.hessian(u, lines, cfg);
    const auto solver = sys.factorize(H);
    Eigen::VectorXd delta = solver->solve(-r);
    // Sliding modes held only by the penalty tail make H ill-conditioned.
    delta += solver->solve(-r - H * delta);
    ++res.iterations;
    if (polish) {
      // Converged: one more full step takes the residual to round-off.
      const Eigen::VectorXd u_try = u + sys.dofs.expand(delta);
      const Eigen::VectorXd r_try = sys.dofs.restrict(sys.residual(u_try, lines, cfg));
      if (inf_norm(r_try) <= rn) {
        u = u_try;
        r = r_try;
        rn = inf_norm(r);
        E = sys.energy(u, lines, cfg);
      }
      res.converged = true;
      break;
    }
    const double slope = r.dot(delta);
    const double noise = 1e-12 * sys.energy_scale(u, lines, cfg);
    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
      const Eigen::VectorXd step = alpha * sys.dofs.expand(delta);
      const Eigen::VectorXd u_try = u + step;
      const double dE = sys.energy_change(u, step, lines, cfg);
      bool ok = dE <= 1e-4 * alpha * slope;
      Eigen::VectorXd r_try;
      if (!ok && dE <= noise) {
        // Energy differences at round-off level: fall back on the residual.
        r_try = sys.dofs.restrict(sys.residual(u_try, lines, cfg));
        ok = inf_norm(r_try) < rn;
      }
      if (ok) {
        u = u_try;
        E += dE;
        r = r_try.size() ? r_try : sys.dofs.restrict(sys.residual(u, lines, cfg));
        rn = inf_norm(r);
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      throw Error(ErrorKind::NewtonDivergence,
                  "energy did not decrease after " + std::to_string(opts.max_backtracks) + " backtracks");
    }
  }
  if (!res.converged && rn <= opts.tol) res.converged = true;
  res.u = u;
  res.energy = sys.energy(u, lines, cfg);
  res.residual = rn;
  if (keep_tangent) res.tangent = sys.factorize(sys.hessian(u, lines, cfg));
  return res;
}

// Both halves sliding together in x leaves every equation unchanged, so the
// alternation may carry a steady common drift. Convergence is judged on the
// change with that drift removed.
double common_free_change(const Eigen::VectorXd& du_left, const Eigen::VectorXd& du_right) {
  const Eigen::Index nl = du_left.size() / 2, nr = du_right.size() / 2;
  double drift = 0.0;
  for (Eigen::Index i = 0; i < nl; ++i) drift += du_left[2 * i];
  for (Eigen::Index i = 0; i < nr; ++i) drift += du_right[2 * i];
  drift /= static_cast<double>(nl + nr);
  double change = 0.0;
  for (const Eigen::VectorXd* du : {&du_left, &du_right}) {
    for (Eigen::Index i = 0; i < du->size() / 2; ++i) {
      change = std::max({change, std::abs((*du)[2 * i] - drift), std::abs((*du)[2 * i + 1])});
    }
  }
  return change;
}

}  // namespace

ContactLine fit_line(const std::vector<Vec2>& points, const Vec2& reference_normal, int source_edge) {
  const int m = static_cast<int>(points.size());
  if (m < 2) throw Error(ErrorKind::DegenerateFit, "a line fit needs at least two points");
  Vec2 centroid = Vec2::Zero();
  for (const Vec2& p : points) centroid += p;
  centroid /= m;
  Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
  double extent = 0.0;
  for (const Vec2& p : points) {
    const Vec2 r = p - centroid;
    C += r * r.transpose();
    extent = std::max(extent, r.norm());
  }
  if (extent <= 1e-12) throw Error(ErrorKind::DegenerateFit, "fitted points coincide");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(C);
  ContactLine line;
  line.normal = eig.eigenvectors().col(0);
  if (line.normal.dot(reference_normal) < 0) line.normal = -line.normal;
  line.tangent = Vec2(-line.normal.y(), line.normal.x());
  line.spread = eig.eigenvalues()[1] - eig.eigenvalues()[0];
  line.centroid = centroid;
  line.offset = line.normal.dot(centroid);
  line.source_edge = source_edge;
  line.fit_weights.assign(m, 1.0);
  return line;
}

std::vector<ContactLine> fit_contact_lines(const TriMesh& rigid, const Eigen::VectorXd& u_rigid) {
  std::vector<ContactLine> lines;
  for (int k = 0; k < rigid.contact_edge_count(); ++k) {
    const int seg = rigid.contact_segment(k);
    const Vec2 t = rigid.polygon.edge_end(seg) - rigid.polygon.edge_start(seg);
    // Outward normal of a counter-clockwise polygon edge.
    const Vec2 ref = Vec2(t.y(), -t.x()).normalized();
    const auto nodes = rigid.segment_nodes(seg);
    std::vector<Vec2> pts;
    for (int n : nodes) pts.push_back(deformed(rigid, u_rigid, n));
    ContactLine line = fit_line(pts, ref, k);
    line.nodes = nodes;
    lines.push_back(std::move(line));
  }
  return lines;
}

double signed_distance(const Vec2& point, const ContactLine& line) { return line.normal.dot(point) - line.offset; }

PenaltyValue penalty_integrand(double sdf, const PenaltyConfig& cfg) {
  const double z = -cfg.k * sdf;
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  const double sigma = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  const double f = softplus / cfg.k;
  const double f1 = -sigma;
  const double f2 = cfg.k * sigma * (1.0 - sigma);
  const int P = cfg.power;
  PenaltyValue out;
  out.value = std::pow(f, P);
  out.d1 = P * std::pow(f, P - 1) * f1;
  out.d2 = P * (P - 1) * std::pow(f, P - 2) * f1 * f1 + P * std::pow(f, P - 1) * f2;
  return out;
}

double penalty_energy(const TriMesh& mesh, const Eigen::VectorXd& u, const std::vector<ContactLine>& lines,
                      const PenaltyConfig& cfg) {
  double energy = 0.0;
  for_each_contact_sample(mesh, lines, cfg, [&](const BoundaryEdge&, const ContactLine& line, int n, double wt) {
    energy += wt * penalty_integrand(signed_distance(deformed(mesh, u, n), line), cfg).value;
  });
  return energy;
}

Eigen::VectorXd penalty_gradient(const TriMesh& mesh, const Eigen::VectorXd& u,
                                 const std::vector<ContactLine>& lines, const PenaltyConfig& cfg) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(mesh.dof_count());
  for_each_contact_sample(mesh, lines, cfg, [&](const BoundaryEdge&, const ContactLine& line, int n, double wt) {
    const double d1 = penalty_integrand(signed_distance(deformed(mesh, u, n), line), cfg).d1;
    g.segment<2>(2 * n) += wt * d1 * line.normal;
  });
  return g;
}

Eigen::SparseMatrix<double> penalty_hessian(const TriMesh& mesh, const Eigen::VectorXd& u,
                                            const std::vector<ContactLine>& lines, const PenaltyConfig& cfg) {
  std::vector<Eigen::Triplet<double>> trips;
  for_each_contact_sample(mesh, lines, cfg, [&](const BoundaryEdge&, const ContactLine& line, int n, double wt) {
    const double d2 = penalty_integrand(signed_distance(deformed(mesh, u, n), line), cfg).d2;
    const Eigen::Matrix2d block = wt * d2 * line.normal * line.normal.transpose();
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) trips.emplace_back(2 * n + i, 2 * n + j, block(i, j));
    }
  });
  Eigen::SparseMatrix<double> H(mesh.dof_count(), mesh.dof_count());
  H.setFromTriplets(trips.begin(), trips.end());
  return H;
}

double penalized_energy(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat, const LoadCase& load,
                        const std::vector<ContactLine>& lines, const PenaltyConfig& cfg) {
  return elastic_energy(mesh, u, mat, load) + penalty_energy(mesh, u, lines, cfg);
}

Eigen::VectorXd penalized_residual(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat,
                                   const LoadCase& load, const std::vector<ContactLine>& lines,
                                   const PenaltyConfig& cfg) {
  return elastic_residual(mesh, u, mat, load) + penalty_gradient(mesh, u, lines, cfg);
}

Eigen::SparseMatrix<double> penalized_tangent(const TriMesh& mesh, const Eigen::VectorXd& u, const Material& mat,
                                              const std::vector<ContactLine>& lines, const PenaltyConfig& cfg) {
  return elastic_tangent(mesh, mat) + penalty_hessian(mesh, u, lines, cfg);
}

std::vector<LineCotangent> penalty_line_vjp(const TriMesh& mesh, const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                                            const std::vector<ContactLine>& lines, const PenaltyConfig& cfg) {
  std::vector<LineCotangent> bar(lines.size());
  for_each_contact_sample(mesh, lines, cfg, [&](const BoundaryEdge& e, const ContactLine& line, int n, double wt) {
    const Vec2 x = deformed(mesh, u, n);
    const PenaltyValue p = penalty_integrand(signed_distance(x, line), cfg);
    const Vec2 wn = w.segment<2>(2 * n);
    const double wdotn = wn.dot(line.normal);
    LineCotangent& b = bar[mesh.polygon.contact_index[e.segment]];
    b.normal += wt * (p.d2 * wdotn * x + p.d1 * wn);
    b.offset -= wt * p.d2 * wdotn;
  });
  return bar;
}

Eigen::VectorXd penalty_coord_vjp(const TriMesh& mesh, const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                                  const std::vector<ContactLine>& lines, const PenaltyConfig& cfg) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mesh.dof_count());
  for (const auto& e : mesh.boundary_edges) {
    const int k = mesh.polygon.contact_index[e.segment];
    if (k < 0) continue;
    const ContactLine& line = lines[k];
    const Vec2 edge = mesh.nodes[e.b] - mesh.nodes[e.a];
    const double len = edge.norm();
    const double wt = 0.5 * cfg.w_pen * len;
    double through_len = 0.0;
    for (int n : {e.a, e.b}) {
      const PenaltyValue p = penalty_integrand(signed_distance(deformed(mesh, u, n), line), cfg);
      const double wdotn = Vec2(w.segment<2>(2 * n)).dot(line.normal);
      out.segment<2>(2 * n) += wt * p.d2 * wdotn * line.normal;
      through_len += 0.5 * cfg.w_pen * p.d1 * wdotn;
    }
    out.segment<2>(2 * e.b) += through_len * edge / len;
    out.segment<2>(2 * e.a) -= through_len * edge / len;
  }
  return out;
}

void backprop_line(const ContactLine& line, const LineCotangent& bar, const TriMesh& rigid,
                   const Eigen::VectorXd& u_rigid, Eigen::VectorXd& points_bar) {
  const int m = static_cast<int>(line.nodes.size());
  double scale = 0.0;
  for (int n : line.nodes) scale = std::max(scale, (deformed(rigid, u_rigid, n) - line.centroid).squaredNorm());
  if (!(line.spread > 1e-12 * scale)) {
    throw Error(ErrorKind::DegenerateFit, "line fit has no unique direction to differentiate");
  }
  // offset = n . centroid
  const Vec2 nbar = bar.normal + bar.offset * line.centroid;
  const double coef = -nbar.dot(line.tangent) / line.spread;
  for (int n : line.nodes) {
    const Vec2 r = deformed(rigid, u_rigid, n) - line.centroid;
    points_bar.segment<2>(2 * n) +=
        coef * (r.dot(line.normal) * line.tangent + r.dot(line.tangent) * line.normal) + bar.offset * line.normal / m;
  }
}

NewtonResult newton_solve_side(const TriMesh& mesh, const Material& mat, const LoadCase& load,
                               const std::vector<ContactLine>& lines, const PenaltyConfig& cfg,
                               const Eigen::VectorXd& u_init, const NewtonOptions& opts, bool keep_tangent) {
  const SideSystem sys(mesh, mat, load);
  return newton(sys, lines, cfg, u_init, opts, keep_tangent);
}

SolveState alternate(const ContactProblem& problem, const AlternateOptions& opts) {
  if (!problem.left || !problem.right) throw Error(ErrorKind::DomainError, "contact problem needs both meshes");
  const TriMesh& left = *problem.left;
  const TriMesh& right = *problem.right;
  const SideSystem sys_left(left, problem.material, outward_load(Side::Left, problem.traction));
  const SideSystem sys_right(right, problem.material, outward_load(Side::Right, problem.traction));

  SolveState state;
  state.u_left = Eigen::VectorXd::Zero(left.dof_count());
  state.u_right = Eigen::VectorXd::Zero(right.dof_count());
  const int iters = opts.fixed_iterations > 0 ? opts.fixed_iterations : opts.max_iters;
  int right_record = -1;

  for (int t = 1; t <= iters; ++t) {
    // Left side against the right side's lines.
    SolveRecord rec_l;
    rec_l.side = Side::Left;
    rec_l.iteration = t;
    rec_l.rigid_record = right_record;
    rec_l.lines = fit_contact_lines(right, state.u_right);
    NewtonResult nl;
    try {
      nl = newton(sys_left, rec_l.lines, problem.penalty, state.u_left, opts.newton, opts.record_tape);
      if (!nl.converged) throw Error(ErrorKind::NewtonDivergence, "Newton iteration limit reached");
    } catch (const Error&) {
      if (t != 1) throw;
      // Load continuation from the undeformed state.
      Eigen::VectorXd u = state.u_left;
      for (double frac : {0.25, 0.5}) {
        const SideSystem part(left, problem.material, outward_load(Side::Left, frac * problem.traction));
        u = newton(part, rec_l.lines, problem.penalty, u, opts.newton, false).u;
      }
      nl = newton(sys_left, rec_l.lines, problem.penalty, u, opts.newton, opts.record_tape);
      if (!nl.converged) throw Error(ErrorKind::NewtonDivergence, "Newton iteration limit reached");
      state.continuation_used = true;
    }
    rec_l.u = nl.u;
    rec_l.newton_iterations = nl.iterations;
    rec_l.residual = nl.residual;
    rec_l.tangent = nl.tangent;
    const int left_record = static_cast<int>(state.history.size());
    state.history.push_back(rec_l);

    // Right side against the freshly deformed left side.
    SolveRecord rec_r;
    rec_r.side = Side::Right;
    rec_r.iteration = t;
    rec_r.rigid_record = left_record;
    rec_r.lines = fit_contact_lines(left, nl.u);
    const NewtonResult nr = newton(sys_right, rec_r.lines, problem.penalty, state.u_right, opts.newton,
                                   opts.record_tape);
    if (!nr.converged) throw Error(ErrorKind::NewtonDivergence, "Newton iteration limit reached");
    rec_r.u = nr.u;
    rec_r.newton_iterations = nr.iterations;
    rec_r.residual = nr.residual;
    rec_r.tangent = nr.tangent;
    right_record = static_cast<int>(state.history.size());
    state.history.push_back(rec_r);

    const double change = common_free_change(nl.u - state.u_left, nr.u - state.u_right);
    state.changes.push_back(change);
    state.u_left = nl.u;
    state.u_right = nr.u;
    state.iterations = t;
    // The first iteration is measured against the zero start, so it cannot
    // certify convergence on its own.
    if (t >= 2 && change <= opts.tol) {
      state.converged = true;
      if (opts.fixed_iterations <= 0) break;
    }
  }
  state.d_value = displacement_metric(left, state.u_left, right, state.u_right);
  return state;
}

Eigen::VectorXd displacement_metric_seed(const TriMesh& mesh, Side side) {
  Eigen::VectorXd seed = Eigen::VectorXd::Zero(mesh.dof_count());
  const auto nodes = mesh.tagged_nodes(EdgeTag::Traction);
  if (nodes.empty()) throw Error(ErrorKind::MissingTag, "mesh has no loaded edge");
  const double w = (side == Side::Right ? 1.0 : -1.0) / static_cast<double>(nodes.size());
  for (int n : nodes) seed[2 * n] = w;
  return seed;
}

double displacement_metric(const TriMesh& left, const Eigen::VectorXd& u_left, const TriMesh& right,
                           const Eigen::VectorXd& u_right) {
  return displacement_metric_seed(right, Side::Right).dot(u_right) +
         displacement_metric_seed(left, Side::Left).dot(u_left);
}

double simulated_stiffness(double d, double traction, const SimDomain& domain) {
  if (!(d > 0.0)) throw Error(ErrorKind::DomainError, "stiffness needs a positive displacement");
  const double force = traction * 2.0 * domain.height * domain.thickness * 1000.0;  // N
  return force / d;
}

}  // namespace dovetail
