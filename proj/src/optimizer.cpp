#include "dovetail/optimizer.hpp"

#include "dovetail/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace dovetail {

namespace {

constexpr int kNoiseRedraws = 5;
constexpr std::uint32_t kFallbackStream = 0xFA11u;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::seed_seq make_seq(std::uint64_t seed, std::uint32_t a, std::uint32_t b, std::uint32_t c) {
  return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), a, b, c};
}

double hinge2(double gap) { return gap > 0 ? gap * gap : 0.0; }

bool feasible(const ShapeParams& p) { return validate_params(p).empty(); }

}  // namespace

double regularizer_min_len(const std::vector<double>& lengths, double min_len) {
  double r = 0.0;
  for (double l : lengths) r += hinge2(min_len - l);
  return r;
}

double regularizer_min_len(const ShapeParams& params, double min_len) {
  const auto pts = interface_polyline(params);
  double r = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) r += hinge2(min_len - (pts[k + 1] - pts[k]).norm());
  return r;
}

Eigen::VectorXd regularizer_min_len_gradient(const ShapeParams& params, double min_len) {
  const auto pts = interface_polyline(params);
  const Eigen::MatrixXd J = contact_edge_length_jacobian(params);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(params.theta.size());
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double gap = min_len - (pts[k + 1] - pts[k]).norm();
    if (gap > 0) g -= 2.0 * gap * J.row(static_cast<Eigen::Index>(k)).transpose();
  }
  return g;
}

double regularizer_min_width(double width, double min_width) { return hinge2(min_width - width); }

double regularizer_min_width(const ShapeParams& params, double min_width) {
  return regularizer_min_width(joint_width(params), min_width);
}

Eigen::VectorXd regularizer_min_width_gradient(const ShapeParams& params, double min_width) {
  const double gap = min_width - joint_width(params);
  if (!(gap > 0)) return Eigen::VectorXd::Zero(params.theta.size());
  return -2.0 * gap * joint_width_gradient(params.space);
}

double regularizer(const ShapeParams& params, const ObjectiveConfig& cfg) {
  return cfg.w_min_l * regularizer_min_len(params, cfg.min_len) +
         cfg.w_min_w * regularizer_min_width(params, cfg.min_width);
}

Eigen::VectorXd regularizer_gradient(const ShapeParams& params, const ObjectiveConfig& cfg) {
  return cfg.w_min_l * regularizer_min_len_gradient(params, cfg.min_len) +
         cfg.w_min_w * regularizer_min_width_gradient(params, cfg.min_width);
}

std::vector<std::optional<Eigen::VectorXd>> noisy_samples(const ShapeParams& params, const ObjectiveConfig& cfg,
                                                          int step) {
  std::vector<std::optional<Eigen::VectorXd>> out;
  if (cfg.noise_sigma == 0.0) {
    out.emplace_back(params.theta);
    if (!feasible(params)) out.back().reset();
    return out;
  }
  for (int s = 0; s < cfg.noise_samples; ++s) {
    std::optional<Eigen::VectorXd> chosen;
    for (int attempt = 0; attempt <= kNoiseRedraws && !chosen; ++attempt) {
      auto seq = make_seq(cfg.rng_seed, static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(s),
                          static_cast<std::uint32_t>(attempt));
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> normal(0.0, cfg.noise_sigma);
      Eigen::VectorXd t = params.theta;
      for (Eigen::Index i = 0; i < t.size(); ++i) t[i] += normal(rng);
      if (feasible({params.space, t})) chosen = t;
    }
    out.push_back(std::move(chosen));
  }
  return out;
}

Objective::Objective(const JointModel& model, SimSettings sim, ObjectiveConfig cfg)
    : model_(model), sim_(std::move(sim)), cfg_(cfg) {}

ObjectiveValue Objective::operator()(const Eigen::VectorXd& theta, int step, bool with_grad) const {
  ObjectiveValue v;
  const DesignSpace space = model_.reference.space;
  const auto samples = noisy_samples({space, theta}, cfg_, step);
  SimSettings sim = sim_;
  sim.alternate.record_tape = with_grad;

  double L = 0.0, d = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
  for (const auto& sample : samples) {
    if (!sample) {
      ++v.failed_samples;
      if (v.failure.empty()) v.failure = "no feasible noise draw";
      continue;
    }
    try {
      const Evaluation e = evaluate(model_, *sample, sim);
      const ShapeParams sp{space, *sample};
      d += e.d;
      L += e.d + regularizer(sp, cfg_);
      v.converged = v.converged && e.state.converged;
      if (with_grad) grad += d_gradient(model_, e, sim) + regularizer_gradient(sp, cfg_);
    } catch (const Error& err) {
      ++v.failed_samples;
      if (v.failure.empty()) v.failure = err.what();
    }
  }
  if (v.failed_samples > 0 || samples.empty()) return v;
  const double n = static_cast<double>(samples.size());
  v.L = L / n;
  v.d = d / n;
  if (with_grad) v.grad = grad / n;
  return v;
}

LineSearchResult wolfe_line_search(const std::function<LinePoint(double)>& phi, LinePoint at_zero, double alpha0,
                                   const WolfeOptions& opts) {
  if (!(at_zero.dphi < 0) || !std::isfinite(at_zero.phi)) {
    throw Error(ErrorKind::DomainError, "line search needs a finite start and a descent direction");
  }
  if (!(alpha0 > 0)) throw Error(ErrorKind::DomainError, "initial step must be positive");

  LineSearchResult res;
  const double phi0 = at_zero.phi, dphi0 = at_zero.dphi;
  auto eval = [&](double a) {
    if (res.evaluations >= opts.max_evaluations) {
      throw Error(ErrorKind::LineSearchFailure,
                  "no strong-Wolfe step within " + std::to_string(opts.max_evaluations) + " evaluations");
    }
    ++res.evaluations;
    return phi(a);
  };
  auto armijo_fails = [&](double a, const LinePoint& p) { return !std::isfinite(p.phi) || p.phi > phi0 + opts.c1 * a * dphi0; };
  auto curvature_holds = [&](const LinePoint& p) { return std::isfinite(p.dphi) && std::abs(p.dphi) <= -opts.c2 * dphi0; };

  auto zoom = [&](double lo, LinePoint plo, double hi, LinePoint phi_hi) {
    for (;;) {
      const double width = hi - lo;
      double a = 0.5 * (lo + hi);
      if (std::isfinite(phi_hi.phi)) {
        const double denom = 2.0 * (phi_hi.phi - plo.phi - plo.dphi * width);
        if (denom > 0) a = lo - plo.dphi * width * width / denom;
      }
      const double lo_guard = std::min(lo, hi) + 0.1 * std::abs(width);
      const double hi_guard = std::max(lo, hi) - 0.1 * std::abs(width);
      if (!(a >= lo_guard && a <= hi_guard)) a = 0.5 * (lo + hi);
      const LinePoint p = eval(a);
      if (armijo_fails(a, p) || p.phi >= plo.phi) {
        hi = a;
        phi_hi = p;
      } else {
        if (curvature_holds(p)) return std::pair{a, p};
        if (p.dphi * (hi - lo) >= 0) {
          hi = lo;
          phi_hi = plo;
        }
        lo = a;
        plo = p;
      }
    }
  };

  double prev = 0.0;
  LinePoint pprev = at_zero;
  double a = alpha0;
  const double amax = alpha0 * opts.max_growth;
  for (int i = 0;; ++i) {
    const LinePoint p = eval(a);
    std::pair<double, LinePoint> found;
    if (armijo_fails(a, p) || (i > 0 && p.phi >= pprev.phi)) {
      found = zoom(prev, pprev, a, p);
    } else if (curvature_holds(p)) {
      found = {a, p};
    } else if (p.dphi >= 0) {
      found = zoom(a, p, prev, pprev);
    } else {
      if (a >= amax) {
        throw Error(ErrorKind::LineSearchFailure, "step grew to the bracketing limit without a Wolfe point");
      }
      prev = a;
      pprev = p;
      a = std::min(2.0 * a, amax);
      continue;
    }
    res.alpha = found.first;
    res.point = found.second;
    return res;
  }
}

std::string_view to_string(StepKind kind) {
  switch (kind) {
    case StepKind::Initial: return "initial";
    case StepKind::Wolfe: return "wolfe";
    case StepKind::RandomFallback: return "random_fallback";
    case StepKind::NoMove: return "no_move";
  }
  return "?";
}

OptTrace optimize(const ShapeParams& theta0, const SimSettings& sim, const ObjectiveConfig& obj,
                  const OptimizerConfig& opt, const std::function<void(const TraceEntry&)>& on_step) {
  OptTrace trace;
  trace.space = theta0.space;
  Eigen::VectorXd theta = theta0.theta;
  Eigen::VectorXd last_good = theta;
  TraceEntry pending;
  JointModel model = build_model(theta0, opt.mesh_step);

  for (int k = 0; k <= opt.steps; ++k) {
    if (k > 0) {
      try {
        model = build_model({trace.space, theta}, opt.mesh_step);
        last_good = theta;
      } catch (const Error& err) {
        pending.note = std::string("remesh failed, move dropped: ") + err.what();
        pending.kind = StepKind::NoMove;
        pending.step_size = 0.0;
        theta = last_good;
        model = build_model({trace.space, theta}, opt.mesh_step);
      }
    }
    const Objective objective(model, sim, obj);
    const ObjectiveValue v = objective(theta, k, true);

    TraceEntry entry = pending;
    entry.step = k;
    entry.theta = theta;
    entry.L = v.L;
    entry.d = v.d;
    entry.converged = v.converged;
    if (!v.failure.empty()) entry.note += (entry.note.empty() ? "" : "; ") + v.failure;
    trace.entries.push_back(entry);
    if (on_step) on_step(trace.entries.back());
    if (k == opt.steps) break;

    pending = TraceEntry{};
    const double gnorm = v.grad.size() ? v.grad.norm() : 0.0;
    if (!std::isfinite(v.L) || !(gnorm > 0) || !std::isfinite(gnorm)) {
      pending.kind = StepKind::NoMove;
      pending.note = "no usable gradient";
      continue;
    }

    const Eigen::VectorXd p = -v.grad;
    auto line = [&](double alpha) {
      const ObjectiveValue w = objective(theta + alpha * p, k, true);
      return LinePoint{w.L, std::isfinite(w.L) ? w.grad.dot(p) : kInf};
    };
    try {
      const LineSearchResult ls = wolfe_line_search(line, {v.L, -gnorm * gnorm}, opt.initial_step / gnorm, opt.wolfe);
      theta += ls.alpha * p;
      pending.kind = StepKind::Wolfe;
      pending.step_size = ls.alpha * gnorm;
      pending.evaluations = ls.evaluations;
      continue;
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::LineSearchFailure) throw;
      pending.evaluations = opt.wolfe.max_evaluations;
      pending.note = err.what();
    }

    const Eigen::VectorXd dir = p / gnorm;
    pending.kind = StepKind::NoMove;
    for (int r = 0; r < opt.fallback_retries; ++r) {
      auto seq = make_seq(obj.rng_seed, static_cast<std::uint32_t>(k), kFallbackStream, static_cast<std::uint32_t>(r));
      std::mt19937_64 rng(seq);
      const double alpha = std::normal_distribution<double>(0.0, opt.fallback_sigma)(rng);
      const Eigen::VectorXd cand = theta + alpha * dir;
      if (!feasible({trace.space, cand})) continue;
      ++pending.evaluations;
      if (!std::isfinite(objective(cand, k, false).L)) continue;
      theta = cand;
      pending.kind = StepKind::RandomFallback;
      pending.step_size = std::abs(alpha);
      break;
    }
  }

  trace.best_index = 0;
  for (std::size_t i = 1; i < trace.entries.size(); ++i) {
    const double di = trace.entries[i].d;
    if (std::isfinite(di) && !(di >= trace.entries[trace.best_index].d)) trace.best_index = static_cast<int>(i);
  }
  return trace;
}

std::string trace_csv(const OptTrace& trace) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "step";
  const Eigen::Index n = trace.entries.empty() ? parameter_count(trace.space) : trace.entries.front().theta.size();
  for (Eigen::Index i = 0; i < n; ++i) os << ",theta" << i;
  os << ",L,d,step_size,step_kind\n";
  for (const auto& e : trace.entries) {
    os << e.step;
    for (Eigen::Index i = 0; i < e.theta.size(); ++i) os << ',' << e.theta[i];
    os << ',' << e.L << ',' << e.d << ',' << e.step_size << ',' << to_string(e.kind) << '\n';
  }
  return os.str();
}

double normalized_distance(const Eigen::VectorXd& t1, const Eigen::VectorXd& t2) {
  return (t1 - t2).norm() / (0.5 * (t1.norm() + t2.norm()));
}

Eigen::VectorXd random_feasible_theta(DesignSpace space, std::uint64_t seed, const SimDomain& domain) {
  struct Range {
    double lo, hi;
  };
  std::vector<Range> box;
  switch (space) {
    case DesignSpace::SingleDovetail: box = {{1, 4}, {2, 9}, {2, 10}}; break;
    case DesignSpace::ComplexDovetail: box = {{-6, 0}, {0.5, 4}, {-2, 4}, {1, 3}, {2, 6}, {2, 6}}; break;
    case DesignSpace::DoubleDovetail: box = {{-6, 0}, {-2, 4}, {0.5, 4}, {1, 3}, {2, 6}, {2, 6}}; break;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x7E7Au};
  std::mt19937_64 rng(seq);
  for (int tries = 0; tries < 100000; ++tries) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(box.size()));
    for (std::size_t i = 0; i < box.size(); ++i) {
      t[static_cast<Eigen::Index>(i)] = std::uniform_real_distribution<double>(box[i].lo, box[i].hi)(rng);
    }
    const ShapeParams p{space, t};
    if (!validate_params(p, domain).empty()) continue;
    const auto pts = interface_polyline(p);
    bool ok = true;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) ok = ok && (pts[k + 1] - pts[k]).norm() >= 1.0;
    if (ok) return t;
  }
  throw Error(ErrorKind::DomainError, "no feasible theta found in the sampling box");
}

}  // namespace dovetail
