#include "dovetail/adjoint.hpp"

#include "dovetail/errors.hpp"
#include "dovetail/parallel.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace dovetail {

namespace {

const TriMesh& elastic_mesh(const ContactProblem& p, Side side) { return side == Side::Left ? *p.left : *p.right; }
const TriMesh& rigid_mesh(const ContactProblem& p, Side side) { return side == Side::Left ? *p.right : *p.left; }

Eigen::VectorXd& side_of(MeshGradient& g, Side side) { return side == Side::Left ? g.left : g.right; }

// Adds the cotangents of one solve's lines into the rigid side: coordinates
// always, and the rigid field's seed when that field came from a solve.
void push_lines(const ContactProblem& problem, const SolveState& state, const SolveRecord& rec,
                const std::vector<LineCotangent>& line_bar, MeshGradient& grad, Eigen::VectorXd* rigid_seed) {
  const Side rigid_side = rec.side == Side::Left ? Side::Right : Side::Left;
  const TriMesh& rigid = rigid_mesh(problem, rec.side);
  const Eigen::VectorXd u_rigid =
      rec.rigid_record >= 0 ? state.history[rec.rigid_record].u : Eigen::VectorXd::Zero(rigid.dof_count());
  Eigen::VectorXd points_bar = Eigen::VectorXd::Zero(rigid.dof_count());
  for (std::size_t k = 0; k < rec.lines.size(); ++k) backprop_line(rec.lines[k], line_bar[k], rigid, u_rigid, points_bar);
  side_of(grad, rigid_side) += points_bar;
  if (rigid_seed) *rigid_seed += points_bar;
}

std::shared_ptr<Factorization> factorize_tangent(const ContactProblem& problem, const SolveRecord& record) {
  const TriMesh& mesh = elastic_mesh(problem, record.side);
  const DofMap dofs = apply_symmetry(mesh);
  auto f = std::make_shared<Factorization>(
      dofs.restrict(penalized_tangent(mesh, record.u, problem.material, record.lines, problem.penalty)));
  if (f->info() != Eigen::Success) throw Error(ErrorKind::SingularTangent, "adjoint tangent factorization failed");
  return f;
}

}  // namespace

std::string_view to_string(AdjointMode mode) {
  return mode == AdjointMode::FullTape ? "full-tape" : "fixed-point";
}

AdjointStep adjoint_solve_step(const ContactProblem& problem, const SolveRecord& record, const Eigen::VectorXd& seed) {
  const TriMesh& mesh = elastic_mesh(problem, record.side);
  const LoadCase load = outward_load(record.side, problem.traction);
  const DofMap dofs = apply_symmetry(mesh);
  AdjointStep out;
  out.lambda = Eigen::VectorXd::Zero(mesh.dof_count());
  out.coord_bar = Eigen::VectorXd::Zero(mesh.dof_count());
  out.line_bar.assign(record.lines.size(), LineCotangent{});
  const Eigen::VectorXd rhs = dofs.restrict(seed);
  if (rhs.squaredNorm() == 0.0) return out;

  const std::shared_ptr<Factorization> tangent = record.tangent ? record.tangent : factorize_tangent(problem, record);
  // Symmetric tangent: K^T lambda = seed is K lambda = seed.
  Eigen::VectorXd lam = tangent->solve(rhs);
  if (!lam.allFinite()) throw Error(ErrorKind::SingularTangent, "adjoint solve produced non-finite values");
  out.lambda = dofs.expand(lam);

  out.coord_bar = -(elastic_residual_coord_vjp(mesh, record.u, out.lambda, problem.material, load) +
                    penalty_coord_vjp(mesh, record.u, out.lambda, record.lines, problem.penalty));
  out.line_bar = penalty_line_vjp(mesh, record.u, out.lambda, record.lines, problem.penalty);
  for (auto& b : out.line_bar) {
    b.normal = -b.normal;
    b.offset = -b.offset;
  }
  return out;
}

MeshGradient grad_wrt_mesh_coords(const ContactProblem& problem, const SolveState& state,
                                  const Eigen::VectorXd& seed_left, const Eigen::VectorXd& seed_right,
                                  AdjointMode mode) {
  const int n = static_cast<int>(state.history.size());
  if (n < 2) throw Error(ErrorKind::DomainError, "solve history is empty");
  MeshGradient grad{Eigen::VectorXd::Zero(problem.left->dof_count()), Eigen::VectorXd::Zero(problem.right->dof_count())};

  if (mode == AdjointMode::FullTape) {
    std::vector<Eigen::VectorXd> seeds(n);
    for (int r = 0; r < n; ++r) seeds[r] = Eigen::VectorXd::Zero(elastic_mesh(problem, state.history[r].side).dof_count());
    seeds[n - 2] += seed_left;
    seeds[n - 1] += seed_right;
    for (int r = n - 1; r >= 0; --r) {
      const SolveRecord& rec = state.history[r];
      const AdjointStep step = adjoint_solve_step(problem, rec, seeds[r]);
      side_of(grad, rec.side) += step.coord_bar;
      push_lines(problem, state, rec, step.line_bar, grad,
                 rec.rigid_record >= 0 ? &seeds[rec.rigid_record] : nullptr);
    }
    return grad;
  }

  // Fixed point of the last iteration's reverse map: the right field's
  // cotangent g solves g = seed_right + B(g), with B one reverse pass.
  // Copies with factorized tangents, reused by every pass.
  SolveRecord rec_l = state.history[n - 2];
  SolveRecord rec_r = state.history[n - 1];
  for (SolveRecord* rec : {&rec_l, &rec_r}) {
    if (!rec->tangent) rec->tangent = factorize_tangent(problem, *rec);
  }
  auto pass = [&](const Eigen::VectorXd& g_right, MeshGradient& out) {
    Eigen::VectorXd g_left = seed_left;
    const AdjointStep sr = adjoint_solve_step(problem, rec_r, g_right);
    side_of(out, Side::Right) += sr.coord_bar;
    push_lines(problem, state, rec_r, sr.line_bar, out, &g_left);
    const AdjointStep sl = adjoint_solve_step(problem, rec_l, g_left);
    side_of(out, Side::Left) += sl.coord_bar;
    Eigen::VectorXd back = Eigen::VectorXd::Zero(problem.right->dof_count());
    push_lines(problem, state, rec_l, sl.line_bar, out, rec_l.rigid_record >= 0 ? &back : nullptr);
    return back;
  };
  Eigen::VectorXd g = seed_right;
  for (int it = 0; it < 200; ++it) {
    MeshGradient scratch{Eigen::VectorXd::Zero(grad.left.size()), Eigen::VectorXd::Zero(grad.right.size())};
    const Eigen::VectorXd next = seed_right + pass(g, scratch);
    const double delta = (next - g).norm();
    g = next;
    if (delta <= 1e-13 * std::max(g.norm(), 1e-300)) break;
  }
  pass(g, grad);
  return grad;
}

MeshGradient displacement_metric_gradient(const ContactProblem& problem, const SolveState& state, AdjointMode mode) {
  return grad_wrt_mesh_coords(problem, state, displacement_metric_seed(*problem.left, Side::Left),
                              displacement_metric_seed(*problem.right, Side::Right), mode);
}

JointModel build_model(const ShapeParams& reference, double mesh_step, const SimDomain& domain) {
  const JointGeometry g = build_geometry(reference, domain);
  TriMesh left = triangulate(g, Side::Left, mesh_step);
  TriMesh right = triangulate(g, Side::Right, mesh_step);
  MorphMap ml = build_morph(g, left, reference);
  MorphMap mr = build_morph(g, right, reference);
  return JointModel{reference, mesh_step, domain, std::move(left), std::move(right), std::move(ml), std::move(mr)};
}

Evaluation evaluate(const JointModel& model, const Eigen::VectorXd& theta, const SimSettings& settings) {
  const ShapeParams p{model.reference.space, theta};
  const auto violations = validate_params(p, model.domain);
  if (!violations.empty()) throw InvalidParams(violations);
  Evaluation e;
  e.theta = theta;
  e.left = model.morph_left.morphed_mesh(theta);
  e.right = model.morph_right.morphed_mesh(theta);
  e.state = alternate(problem_for(e, settings), settings.alternate);
  e.d = e.state.d_value;
  return e;
}

ContactProblem problem_for(const Evaluation& eval, const SimSettings& settings) {
  return ContactProblem{&eval.left, &eval.right, settings.material, settings.traction, settings.penalty};
}

Eigen::VectorXd grad_wrt_params(const JointModel& model, const MeshGradient& mesh_grad) {
  return model.morph_left.vjp(mesh_grad.left) + model.morph_right.vjp(mesh_grad.right);
}

Eigen::VectorXd d_gradient(const JointModel& model, const Evaluation& eval, const SimSettings& settings,
                           AdjointMode mode) {
  return grad_wrt_params(model, displacement_metric_gradient(problem_for(eval, settings), eval.state, mode));
}

FDCheckReport make_report(std::vector<std::string> labels, const Eigen::VectorXd& adjoint, const Eigen::VectorXd& fd,
                          double step) {
  FDCheckReport r;
  r.labels = std::move(labels);
  r.adjoint = adjoint;
  r.fd = fd;
  r.step = step;
  r.rel_diff = Eigen::VectorXd::Constant(fd.size(), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < fd.size(); ++i) {
    if (std::abs(fd[i]) <= r.floor) continue;
    r.rel_diff[i] = std::abs(adjoint[i] - fd[i]) / std::abs(fd[i]);
    sum += r.rel_diff[i];
    ++count;
  }
  r.mean_rel_diff = count ? sum / count : 0.0;
  return r;
}

std::string report_csv(const FDCheckReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "component,adjoint,fd,rel_diff\n";
  for (Eigen::Index i = 0; i < report.fd.size(); ++i) {
    os << report.labels[i] << ',' << report.adjoint[i] << ',' << report.fd[i] << ',';
    if (std::isnan(report.rel_diff[i])) {
      os << "nan";
    } else {
      os << report.rel_diff[i];
    }
    os << '\n';
  }
  os << "# mean_rel_diff " << report.mean_rel_diff << " step " << report.step << " mode " << report.mode << '\n';
  return os.str();
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                            double step, int jobs) {
  Eigen::VectorXd g(x.size());
  parallel_for(static_cast<int>(x.size()), jobs, [&](int i) {
    Eigen::VectorXd hi = x, lo = x;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (f(hi) - f(lo)) / (2.0 * step);
  });
  return g;
}

std::vector<CoordinateProbe> contact_coordinate_probes(const TriMesh& left, const TriMesh& right) {
  std::vector<CoordinateProbe> probes;
  for (Side side : {Side::Left, Side::Right}) {
    const TriMesh& m = side == Side::Left ? left : right;
    for (int n : m.tagged_nodes(EdgeTag::Contact)) {
      for (int c = 0; c < 2; ++c) probes.push_back({side, n, c});
    }
  }
  return probes;
}

std::string probe_label(const CoordinateProbe& probe) {
  return std::string(probe.side == Side::Left ? "L" : "R") + ":" + std::to_string(probe.node) +
         (probe.component == 0 ? ":x" : ":y");
}

FDCheckReport check_mesh_gradient(const ContactProblem& problem, const SolveState& state,
                                  const MeshGradient& adjoint, const std::vector<CoordinateProbe>& probes,
                                  double step, int jobs) {
  AlternateOptions opts;
  opts.fixed_iterations = state.iterations;
  const int n = static_cast<int>(probes.size());
  Eigen::VectorXd fd(n), adj(n);
  std::vector<std::string> labels;
  for (const auto& p : probes) labels.push_back(probe_label(p));
  parallel_for(n, jobs, [&](int i) {
    const CoordinateProbe& p = probes[i];
    auto shifted_d = [&](double delta) {
      TriMesh left = *problem.left, right = *problem.right;
      TriMesh& m = p.side == Side::Left ? left : right;
      m.nodes[p.node][p.component] += delta;
      ContactProblem q = problem;
      q.left = &left;
      q.right = &right;
      return alternate(q, opts).d_value;
    };
    fd[i] = (shifted_d(step) - shifted_d(-step)) / (2.0 * step);
    const Eigen::VectorXd& g = p.side == Side::Left ? adjoint.left : adjoint.right;
    adj[i] = g[2 * p.node + p.component];
  });
  return make_report(std::move(labels), adj, fd, step);
}

FDCheckReport check_param_gradient(const JointModel& model, const Eigen::VectorXd& theta,
                                   const SimSettings& settings, double step, int jobs, AdjointMode mode) {
  const Evaluation base = evaluate(model, theta, settings);
  const Eigen::VectorXd adj = d_gradient(model, base, settings, mode);
  SimSettings fixed = settings;
  fixed.alternate.fixed_iterations = base.state.iterations;
  const Eigen::VectorXd fd =
      fd_gradient([&](const Eigen::VectorXd& th) { return evaluate(model, th, fixed).d; }, theta, step, jobs);
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < theta.size(); ++i) labels.push_back("theta" + std::to_string(i));
  return make_report(std::move(labels), adj, fd, step);
}

}  // namespace dovetail
