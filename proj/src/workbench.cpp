#include "dovetail/workbench.hpp"

#include "dovetail/errors.hpp"
#include "dovetail/parallel.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace dovetail {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad_config(const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) bad_config(where + " must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) bad_config("unknown key '" + where + (where.empty() ? "" : ".") + item.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    bad_config("key '" + where + (where.empty() ? "" : ".") + key + "' has the wrong type");
  }
}

Eigen::VectorXd to_vector(const json& j, const std::string& where) {
  if (!j.is_array()) bad_config(where + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) bad_config(where + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

json from_vector(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

AdjointMode adjoint_mode_from_string(const std::string& s) {
  if (s == "full-tape") return AdjointMode::FullTape;
  if (s == "fixed-point") return AdjointMode::FixedPoint;
  bad_config("unknown adjoint mode '" + s + "'");
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Shortest text that reads back as v, for directory names.
std::string short_num(double v) {
  for (int p = 1; p <= 17; ++p) {
    std::ostringstream os;
    os << std::setprecision(p) << v;
    if (std::stod(os.str()) == v) return os.str();
  }
  return num(v);
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Collects artifacts of one command and writes its manifest.
class Run {
 public:
  Run(std::string command, const RunConfig& cfg) : command_(std::move(command)), cfg_(cfg), started_(utc_now()) {
    fs::create_directories(cfg.out);
  }

  void write(const std::string& rel, const std::string& text) {
    const fs::path p = fs::path(cfg_.out) / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error(ErrorKind::DomainError, "cannot write " + p.string());
    f << text;
    artifacts_.push_back(rel);
  }

  json& convergence() { return convergence_; }

  int finish(int code) {
    json m;
    m["tool"] = kToolName;
    m["version"] = kToolVersion;
    m["command"] = command_;
    m["config"] = json::parse(run_config_json(cfg_));
    m["started_utc"] = started_;
    m["finished_utc"] = utc_now();
    m["exit_code"] = code;
    m["artifacts"] = artifacts_;
    m["convergence"] = convergence_;
    std::ofstream f(fs::path(cfg_.out) / "manifest.json", std::ios::binary);
    f << m.dump(2) << '\n';
    return code;
  }

 private:
  std::string command_;
  const RunConfig& cfg_;
  std::string started_;
  std::vector<std::string> artifacts_;
  json convergence_ = json::object();
};

std::string side_text(const TriMesh& mesh, const Eigen::VectorXd& field) {
  return mesh_text(mesh) + field_text(field, "d");
}

std::string pad2(int k) {
  std::ostringstream os;
  os << std::setw(2) << std::setfill('0') << k;
  return os.str();
}

void write_trace(Run& run, const std::string& dir, const OptTrace& trace) {
  run.write(dir + "/trace.csv", trace_csv(trace));
  for (const auto& e : trace.entries) {
    run.write(dir + "/step_" + pad2(e.step) + ".svg", geometry_svg(build_geometry({trace.space, e.theta})));
  }
  const JointGeometry best = build_geometry({trace.space, trace.best().theta});
  run.write(dir + "/best.svg", geometry_svg(best));
  run.write(dir + "/best.txt", polygon_text(best));
}

json trace_summary(const Eigen::VectorXd& theta0, const OptTrace& trace) {
  json j;
  j["theta0"] = from_vector(theta0);
  j["initial_d"] = finite_or_null(trace.entries.front().d);
  j["best_index"] = trace.best_index;
  j["best_theta"] = from_vector(trace.best().theta);
  j["best_d"] = finite_or_null(trace.best().d);
  j["best_L"] = finite_or_null(trace.best().L);
  json kinds = json::array();
  for (const auto& e : trace.entries) kinds.push_back(std::string(to_string(e.kind)));
  j["step_kinds"] = kinds;
  return j;
}

json trace_convergence(const OptTrace& trace) {
  json flags = json::array();
  for (const auto& e : trace.entries) flags.push_back(e.converged);
  return flags;
}

json pairwise_distances(const std::vector<Eigen::VectorXd>& thetas) {
  json out = json::array();
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    for (std::size_t j = i + 1; j < thetas.size(); ++j) {
      out.push_back({{"a", i}, {"b", j}, {"normalized_distance", normalized_distance(thetas[i], thetas[j])}});
    }
  }
  return out;
}

}  // namespace

Eigen::VectorXd default_theta(DesignSpace space) {
  switch (space) {
    case DesignSpace::SingleDovetail: return Eigen::Vector3d(2, 3, 4);
    case DesignSpace::ComplexDovetail: return (Eigen::VectorXd(6) << -3, 3, 0, 2, 5, 4).finished();
    case DesignSpace::DoubleDovetail: return (Eigen::VectorXd(6) << -2, 0, 3, 2, 5, 4).finished();
  }
  return {};
}

double default_traction(DesignSpace space) { return space == DesignSpace::SingleDovetail ? 0.001 : 0.003; }

double RunConfig::resolved_traction() const { return traction ? *traction : default_traction(space); }

std::vector<Eigen::VectorXd> RunConfig::resolved_theta0() const {
  return theta0.empty() ? std::vector<Eigen::VectorXd>{default_theta(space)} : theta0;
}

SimSettings RunConfig::sim_settings() const {
  SimSettings s;
  s.material = material;
  s.traction = resolved_traction();
  s.penalty = penalty;
  s.alternate = solver;
  s.alternate.record_tape = false;
  return s;
}

ObjectiveConfig RunConfig::objective_config() const {
  ObjectiveConfig o = objective;
  o.rng_seed = seed;
  return o;
}

OptimizerConfig RunConfig::optimizer_config() const {
  OptimizerConfig o = optimizer;
  o.mesh_step = mesh_step;
  return o;
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    bad_config(std::string("malformed JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("tool") && doc.contains("config")) doc = doc["config"];

  check_keys(doc,
             {"space", "theta0", "material", "traction", "mesh_step", "penalty", "objective", "solver", "optimizer",
              "grad_check", "nu_list", "seed", "out", "dump_iterations", "jobs"},
             "");
  RunConfig c;
  if (doc.contains("space")) {
    if (!doc["space"].is_string()) bad_config("key 'space' has the wrong type");
    try {
      c.space = design_space_from_string(doc["space"].get<std::string>());
    } catch (const Error& e) {
      bad_config(e.what());
    }
  }
  if (doc.contains("theta0")) {
    const json& t = doc["theta0"];
    if (!t.is_array() || t.empty()) bad_config("theta0 must be a non-empty array");
    if (t[0].is_array()) {
      for (std::size_t i = 0; i < t.size(); ++i) c.theta0.push_back(to_vector(t[i], "theta0[" + std::to_string(i) + "]"));
    } else {
      c.theta0.push_back(to_vector(t, "theta0"));
    }
  }
  if (doc.contains("material")) {
    const json& m = doc["material"];
    check_keys(m, {"E", "nu", "lame_convention"}, "material");
    read(m, "E", c.material.E, "material");
    read(m, "nu", c.material.nu, "material");
    std::string conv(to_string(c.material.convention));
    read(m, "lame_convention", conv, "material");
    try {
      c.material.convention = lame_convention_from_string(conv);
    } catch (const Error& e) {
      bad_config(e.what());
    }
  }
  if (doc.contains("traction")) {
    double t = 0.0;
    read(doc, "traction", t, "");
    c.traction = t;
  }
  read(doc, "mesh_step", c.mesh_step, "");
  if (doc.contains("penalty")) {
    const json& p = doc["penalty"];
    check_keys(p, {"w_pen", "k", "power"}, "penalty");
    read(p, "w_pen", c.penalty.w_pen, "penalty");
    read(p, "k", c.penalty.k, "penalty");
    read(p, "power", c.penalty.power, "penalty");
  }
  if (doc.contains("objective")) {
    const json& o = doc["objective"];
    check_keys(o, {"w_min_l", "w_min_w", "min_len", "min_width", "noise_sigma", "noise_samples"}, "objective");
    read(o, "w_min_l", c.objective.w_min_l, "objective");
    read(o, "w_min_w", c.objective.w_min_w, "objective");
    read(o, "min_len", c.objective.min_len, "objective");
    read(o, "min_width", c.objective.min_width, "objective");
    read(o, "noise_sigma", c.objective.noise_sigma, "objective");
    read(o, "noise_samples", c.objective.noise_samples, "objective");
  }
  if (doc.contains("solver")) {
    const json& s = doc["solver"];
    check_keys(s, {"max_iters", "tol", "fixed_iterations", "newton_tol", "newton_max_iters", "newton_max_backtracks"},
               "solver");
    read(s, "max_iters", c.solver.max_iters, "solver");
    read(s, "tol", c.solver.tol, "solver");
    read(s, "fixed_iterations", c.solver.fixed_iterations, "solver");
    read(s, "newton_tol", c.solver.newton.tol, "solver");
    read(s, "newton_max_iters", c.solver.newton.max_iters, "solver");
    read(s, "newton_max_backtracks", c.solver.newton.max_backtracks, "solver");
  }
  if (doc.contains("optimizer")) {
    const json& o = doc["optimizer"];
    check_keys(o, {"steps", "initial_step", "fallback_sigma", "fallback_retries", "c1", "c2", "max_evaluations"},
               "optimizer");
    read(o, "steps", c.optimizer.steps, "optimizer");
    read(o, "initial_step", c.optimizer.initial_step, "optimizer");
    read(o, "fallback_sigma", c.optimizer.fallback_sigma, "optimizer");
    read(o, "fallback_retries", c.optimizer.fallback_retries, "optimizer");
    read(o, "c1", c.optimizer.wolfe.c1, "optimizer");
    read(o, "c2", c.optimizer.wolfe.c2, "optimizer");
    read(o, "max_evaluations", c.optimizer.wolfe.max_evaluations, "optimizer");
  }
  if (doc.contains("grad_check")) {
    const json& g = doc["grad_check"];
    check_keys(g, {"fd_step", "threshold", "adjoint_mode"}, "grad_check");
    read(g, "fd_step", c.grad_check.fd_step, "grad_check");
    read(g, "threshold", c.grad_check.threshold, "grad_check");
    std::string mode(to_string(c.grad_check.mode));
    read(g, "adjoint_mode", mode, "grad_check");
    c.grad_check.mode = adjoint_mode_from_string(mode);
  }
  read(doc, "nu_list", c.nu_list, "");
  read(doc, "seed", c.seed, "");
  read(doc, "out", c.out, "");
  read(doc, "dump_iterations", c.dump_iterations, "");
  read(doc, "jobs", c.jobs, "");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) bad_config("cannot read config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_json(const RunConfig& c) {
  json j;
  j["space"] = std::string(to_string(c.space));
  json thetas = json::array();
  for (const auto& t : c.resolved_theta0()) thetas.push_back(from_vector(t));
  j["theta0"] = thetas;
  j["material"] = {{"E", c.material.E},
                   {"nu", c.material.nu},
                   {"lame_convention", std::string(to_string(c.material.convention))}};
  j["traction"] = c.resolved_traction();
  j["mesh_step"] = c.mesh_step;
  j["penalty"] = {{"w_pen", c.penalty.w_pen}, {"k", c.penalty.k}, {"power", c.penalty.power}};
  j["objective"] = {{"w_min_l", c.objective.w_min_l},         {"w_min_w", c.objective.w_min_w},
                    {"min_len", c.objective.min_len},         {"min_width", c.objective.min_width},
                    {"noise_sigma", c.objective.noise_sigma}, {"noise_samples", c.objective.noise_samples}};
  j["solver"] = {{"max_iters", c.solver.max_iters},
                 {"tol", c.solver.tol},
                 {"fixed_iterations", c.solver.fixed_iterations},
                 {"newton_tol", c.solver.newton.tol},
                 {"newton_max_iters", c.solver.newton.max_iters},
                 {"newton_max_backtracks", c.solver.newton.max_backtracks}};
  j["optimizer"] = {{"steps", c.optimizer.steps},
                    {"initial_step", c.optimizer.initial_step},
                    {"fallback_sigma", c.optimizer.fallback_sigma},
                    {"fallback_retries", c.optimizer.fallback_retries},
                    {"c1", c.optimizer.wolfe.c1},
                    {"c2", c.optimizer.wolfe.c2},
                    {"max_evaluations", c.optimizer.wolfe.max_evaluations}};
  j["grad_check"] = {{"fd_step", c.grad_check.fd_step},
                     {"threshold", c.grad_check.threshold},
                     {"adjoint_mode", std::string(to_string(c.grad_check.mode))}};
  j["nu_list"] = c.nu_list;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["dump_iterations"] = c.dump_iterations;
  j["jobs"] = c.jobs;
  return j.dump(2);
}

void validate_run_config(const RunConfig& c) {
  auto positive = [](double v) { return std::isfinite(v) && v > 0; };
  auto nonneg = [](double v) { return std::isfinite(v) && v >= 0; };
  std::vector<std::string> bad;
  if (!positive(c.material.E)) bad.push_back("material.E must be positive");
  if (!(c.material.nu >= 0.0 && c.material.nu < 0.5)) bad.push_back("material.nu must lie in [0, 0.5)");
  for (double nu : c.nu_list) {
    if (!(nu >= 0.0 && nu < 0.5)) bad.push_back("nu_list entry " + num(nu) + " outside [0, 0.5)");
  }
  if (c.nu_list.empty()) bad.push_back("nu_list is empty");
  if (!nonneg(c.resolved_traction())) bad.push_back("traction must be non-negative");
  if (!positive(c.mesh_step)) bad.push_back("mesh_step must be positive");
  if (!positive(c.penalty.w_pen) || !positive(c.penalty.k)) bad.push_back("penalty w_pen and k must be positive");
  if (c.penalty.power < 1) bad.push_back("penalty.power must be >= 1");
  const ObjectiveConfig& o = c.objective;
  if (!nonneg(o.w_min_l) || !nonneg(o.w_min_w) || !nonneg(o.min_len) || !nonneg(o.min_width)) {
    bad.push_back("objective weights and bounds must be non-negative");
  }
  if (!nonneg(o.noise_sigma)) bad.push_back("objective.noise_sigma must be non-negative");
  if (o.noise_samples < 1) bad.push_back("objective.noise_samples must be >= 1");
  if (c.solver.max_iters < 1 || c.solver.fixed_iterations < 0) bad.push_back("solver iteration counts invalid");
  if (!positive(c.solver.tol) || !positive(c.solver.newton.tol)) bad.push_back("solver tolerances must be positive");
  if (c.solver.newton.max_iters < 1 || c.solver.newton.max_backtracks < 0) bad.push_back("newton limits invalid");
  const OptimizerConfig& p = c.optimizer;
  if (p.steps < 0 || p.fallback_retries < 0) bad.push_back("optimizer counts must be non-negative");
  if (!positive(p.initial_step) || !nonneg(p.fallback_sigma)) bad.push_back("optimizer step sizes invalid");
  if (!(p.wolfe.c1 > 0 && p.wolfe.c1 < p.wolfe.c2 && p.wolfe.c2 < 1)) bad.push_back("need 0 < c1 < c2 < 1");
  if (p.wolfe.max_evaluations < 1) bad.push_back("optimizer.max_evaluations must be >= 1");
  if (!positive(c.grad_check.fd_step) || !nonneg(c.grad_check.threshold)) bad.push_back("grad_check values invalid");
  if (c.jobs < 1) bad.push_back("jobs must be >= 1");
  if (c.out.empty()) bad.push_back("out must not be empty");
  if (!bad.empty()) {
    std::string msg;
    for (const auto& b : bad) msg += (msg.empty() ? "" : "; ") + b;
    bad_config(msg);
  }
  for (const auto& t : c.resolved_theta0()) {
    const auto v = validate_params({c.space, t});
    if (!v.empty()) throw InvalidParams(v);
  }
}

int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  validate_run_config(cfg);
  Run run("simulate", cfg);
  const SimSettings sim = cfg.sim_settings();
  const auto thetas = cfg.resolved_theta0();
  json results = json::array();
  bool all_converged = true;
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const std::string pre = thetas.size() == 1 ? "" : "run_" + std::to_string(i) + "/";
    const ShapeParams params{cfg.space, thetas[i]};
    const JointGeometry geom = build_geometry(params);
    run.write(pre + "geometry.svg", geometry_svg(geom));
    run.write(pre + "geometry.txt", polygon_text(geom));
    const JointModel model = build_model(params, cfg.mesh_step);
    const Evaluation e = evaluate(model, thetas[i], sim);
    run.write(pre + "side_L.txt", side_text(e.left, e.state.u_left));
    run.write(pre + "side_R.txt", side_text(e.right, e.state.u_right));
    if (cfg.dump_iterations) {
      for (const auto& rec : e.state.history) {
        const bool left = rec.side == Side::Left;
        run.write(pre + "side_" + (left ? "L" : "R") + "_iter_" + std::to_string(rec.iteration) + ".txt",
                  side_text(left ? e.left : e.right, rec.u));
      }
    }
    json r;
    r["theta"] = from_vector(thetas[i]);
    r["d"] = e.d;
    r["stiffness_n_per_mm"] = e.d > 0 ? json(simulated_stiffness(e.d, sim.traction)) : json(nullptr);
    r["iterations"] = e.state.iterations;
    r["converged"] = e.state.converged;
    r["changes"] = e.state.changes;
    r["continuation_used"] = e.state.continuation_used;
    r["nodes"] = {{"left", e.left.node_count()}, {"right", e.right.node_count()}};
    results.push_back(r);
    run.convergence()["run_" + std::to_string(i)] = e.state.converged;
    all_converged = all_converged && e.state.converged;
    log << "theta " << thetas[i].transpose() << ": d = " << num(e.d) << " mm, " << e.state.iterations
        << " iterations, " << (e.state.converged ? "converged" : "NOT converged") << '\n';
  }
  run.write("result.json", json({{"runs", results}}).dump(2) + "\n");
  return run.finish(all_converged ? kExitOk : kExitSolverFailure);
}

int cmd_grad_check(const RunConfig& cfg, std::ostream& log) {
  validate_run_config(cfg);
  Run run("grad-check", cfg);
  SimSettings sim = cfg.sim_settings();
  sim.alternate.record_tape = true;
  const auto thetas = cfg.resolved_theta0();
  bool pass = true;
  json results = json::array();
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const std::string pre = thetas.size() == 1 ? "" : "run_" + std::to_string(i) + "/";
    const ShapeParams params{cfg.space, thetas[i]};
    const JointModel model = build_model(params, cfg.mesh_step);
    const Evaluation e = evaluate(model, thetas[i], sim);
    const ContactProblem problem = problem_for(e, sim);
    const MeshGradient g = displacement_metric_gradient(problem, e.state, cfg.grad_check.mode);
    run.write(pre + "grad_L.txt", mesh_text(e.left) + field_text(g.left, "d"));
    run.write(pre + "grad_R.txt", mesh_text(e.right) + field_text(g.right, "d"));

    FDCheckReport coords = check_mesh_gradient(problem, e.state, g, contact_coordinate_probes(e.left, e.right),
                                               cfg.grad_check.fd_step, cfg.jobs);
    coords.mode = "central";
    run.write(pre + "grad_check.csv", report_csv(coords));
    const FDCheckReport params_report =
        check_param_gradient(model, thetas[i], sim, cfg.grad_check.fd_step, cfg.jobs, cfg.grad_check.mode);
    run.write(pre + "grad_check_theta.csv", report_csv(params_report));

    const bool ok = coords.mean_rel_diff <= cfg.grad_check.threshold &&
                    params_report.mean_rel_diff <= cfg.grad_check.threshold;
    pass = pass && ok;
    results.push_back({{"theta", from_vector(thetas[i])},
                       {"d", e.d},
                       {"coordinate_mean_rel_diff", coords.mean_rel_diff},
                       {"coordinate_components", coords.fd.size()},
                       {"theta_mean_rel_diff", params_report.mean_rel_diff},
                       {"threshold", cfg.grad_check.threshold},
                       {"passed", ok}});
    run.convergence()["run_" + std::to_string(i)] = e.state.converged;
    log << "theta " << thetas[i].transpose() << ": coordinate mean rel diff " << num(coords.mean_rel_diff)
        << " over " << coords.fd.size() << " components, theta mean rel diff " << num(params_report.mean_rel_diff)
        << (ok ? " (pass)" : " (FAIL)") << '\n';
  }
  run.write("result.json", json({{"runs", results}}).dump(2) + "\n");
  return run.finish(pass ? kExitOk : kExitThreshold);
}

std::vector<OptTrace> optimize_all(const RunConfig& cfg) {
  const auto thetas = cfg.resolved_theta0();
  const SimSettings sim = cfg.sim_settings();
  std::vector<OptTrace> traces(thetas.size());
  parallel_for(static_cast<int>(thetas.size()), cfg.jobs, [&](int i) {
    traces[i] = optimize({cfg.space, thetas[i]}, sim, cfg.objective_config(), cfg.optimizer_config());
  });
  return traces;
}

namespace {

json write_optimizations(Run& run, const RunConfig& cfg, const std::vector<OptTrace>& traces,
                         const std::string& prefix, const std::string& conv_key, std::ostream& log) {
  const auto thetas = cfg.resolved_theta0();
  json runs = json::array();
  std::vector<Eigen::VectorXd> bests;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    write_trace(run, prefix + "run_" + std::to_string(i), traces[i]);
    runs.push_back(trace_summary(thetas[i], traces[i]));
    run.convergence()[conv_key + "run_" + std::to_string(i)] = trace_convergence(traces[i]);
    bests.push_back(traces[i].best().theta);
    log << prefix << "run " << i << ": d " << num(traces[i].entries.front().d) << " -> best " << num(traces[i].best().d)
        << " at step " << traces[i].best_index << ", theta " << traces[i].best().theta.transpose() << '\n';
  }
  json summary;
  summary["runs"] = runs;
  summary["initial_distances"] = pairwise_distances(thetas);
  summary["best_distances"] = pairwise_distances(bests);
  return summary;
}

}  // namespace

int cmd_optimize(const RunConfig& cfg, std::ostream& log) {
  validate_run_config(cfg);
  Run run("optimize", cfg);
  const std::vector<OptTrace> traces = optimize_all(cfg);
  const json summary = write_optimizations(run, cfg, traces, "", "", log);
  run.write("summary.json", summary.dump(2) + "\n");
  return run.finish(kExitOk);
}

int cmd_sweep_poisson(const RunConfig& cfg, std::ostream& log) {
  validate_run_config(cfg);
  Run run("sweep-poisson", cfg);
  const auto thetas = cfg.resolved_theta0();
  const int runs_per_nu = static_cast<int>(thetas.size());
  const int n = static_cast<int>(cfg.nu_list.size()) * runs_per_nu;
  std::vector<OptTrace> traces(n);
  parallel_for(n, cfg.jobs, [&](int k) {
    SimSettings sim = cfg.sim_settings();
    sim.material.nu = cfg.nu_list[k / runs_per_nu];
    const int i = k % runs_per_nu;
    traces[k] = optimize({cfg.space, thetas[i]}, sim, cfg.objective_config(), cfg.optimizer_config());
  });

  std::ostringstream best_csv, dist_csv;
  best_csv << std::setprecision(17) << "nu,run,best_index,best_d";
  for (Eigen::Index j = 0; j < thetas.front().size(); ++j) best_csv << ",theta" << j;
  best_csv << '\n';
  dist_csv << std::setprecision(17) << "run,nu_a,nu_b,normalized_distance\n";
  json per_nu = json::array();
  for (std::size_t a = 0; a < cfg.nu_list.size(); ++a) {
    const std::vector<OptTrace> slice(traces.begin() + a * runs_per_nu, traces.begin() + (a + 1) * runs_per_nu);
    const std::string tag = "nu_" + short_num(cfg.nu_list[a]) + "/";
    json s = write_optimizations(run, cfg, slice, tag, tag, log);
    s["nu"] = cfg.nu_list[a];
    per_nu.push_back(s);
    for (int i = 0; i < runs_per_nu; ++i) {
      const OptTrace& t = slice[i];
      best_csv << cfg.nu_list[a] << ',' << i << ',' << t.best_index << ',' << t.best().d;
      for (Eigen::Index j = 0; j < t.best().theta.size(); ++j) best_csv << ',' << t.best().theta[j];
      best_csv << '\n';
    }
  }
  for (int i = 0; i < runs_per_nu; ++i) {
    for (std::size_t a = 0; a < cfg.nu_list.size(); ++a) {
      for (std::size_t b = a + 1; b < cfg.nu_list.size(); ++b) {
        const double dist = normalized_distance(traces[a * runs_per_nu + i].best().theta,
                                                traces[b * runs_per_nu + i].best().theta);
        dist_csv << i << ',' << cfg.nu_list[a] << ',' << cfg.nu_list[b] << ',' << dist << '\n';
        log << "run " << i << ": nu " << cfg.nu_list[a] << " vs " << cfg.nu_list[b] << " normalized distance "
            << num(dist) << '\n';
      }
    }
  }
  run.write("poisson_best.csv", best_csv.str());
  run.write("poisson_distances.csv", dist_csv.str());
  run.write("summary.json", json({{"per_nu", per_nu}}).dump(2) + "\n");
  return run.finish(kExitOk);
}

int cmd_export_geometry(const RunConfig& cfg, std::ostream& log) {
  validate_run_config(cfg);
  Run run("export-geometry", cfg);
  const auto thetas = cfg.resolved_theta0();
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const std::string stem = thetas.size() == 1 ? "geometry" : "geometry_" + std::to_string(i);
    const JointGeometry g = build_geometry({cfg.space, thetas[i]});
    run.write(stem + ".svg", geometry_svg(g));
    run.write(stem + ".txt", polygon_text(g));
    log << "wrote " << stem << ".svg and " << stem << ".txt\n";
  }
  return run.finish(kExitOk);
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidParams:
    case ErrorKind::InvalidConfig:
    case ErrorKind::DomainError: return kExitInvalidInput;
    default: return kExitSolverFailure;
  }
}

int run_command(std::string_view name, const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  try {
    if (name == "simulate") return cmd_simulate(cfg, log);
    if (name == "grad-check") return cmd_grad_check(cfg, log);
    if (name == "optimize") return cmd_optimize(cfg, log);
    if (name == "sweep-poisson") return cmd_sweep_poisson(cfg, log);
    if (name == "export-geometry") return cmd_export_geometry(cfg, log);
    err << "unknown command '" << name << "'\n";
    return kExitInvalidInput;
  } catch (const InvalidParams& e) {
    err << "invalid parameters:\n";
    for (const auto& v : e.violations()) err << "  - " << v << '\n';
    return kExitInvalidInput;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << e.what() << '\n';
    return kExitInvalidInput;
  }
}

}  // namespace dovetail
