// Prints one PASS/FAIL line per acceptance criterion; exit status 1 if any fail.

#include "dovetail/errors.hpp"
#include "dovetail/workbench.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "json.hpp"

using namespace dovetail;
namespace fs = std::filesystem;

namespace {

// Published seeds for the random initial designs.
constexpr std::uint64_t kInitSeeds[2] = {1, 2};
constexpr DesignSpace kSpaces[] = {DesignSpace::SingleDovetail, DesignSpace::ComplexDovetail,
                                   DesignSpace::DoubleDovetail};

int g_failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& measured) {
  if (!pass) ++g_failures;
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << what << " [" << measured << "]"
            << std::endl;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::VectorXd random_field(int n, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u[i] = normal(rng);
  return u;
}

ShapeParams default_case(DesignSpace s) { return {s, default_theta(s)}; }

SimSettings default_settings(DesignSpace s) {
  SimSettings sim;
  sim.traction = default_traction(s);
  return sim;
}

void criterion1() {
  const ShapeParams p = default_case(DesignSpace::SingleDovetail);
  SimSettings sim = default_settings(p.space);
  sim.alternate.record_tape = true;
  bool pass = true;
  std::string measured;
  for (const auto& [h, budget] : {std::pair{1.0, 300.0}, std::pair{0.5, 1200.0}}) {
    const auto t0 = std::chrono::steady_clock::now();
    const JointModel model = build_model(p, h);
    const Evaluation e = evaluate(model, p.theta, sim);
    const ContactProblem problem = problem_for(e, sim);
    const MeshGradient g = displacement_metric_gradient(problem, e.state);
    const FDCheckReport r =
        check_mesh_gradient(problem, e.state, g, contact_coordinate_probes(e.left, e.right), 1e-4, 1);
    const double t = seconds_since(t0);
    pass = pass && r.mean_rel_diff <= 1e-3 && t <= budget;
    measured += (measured.empty() ? "" : "; ") + std::string("h=") + fmt(h) + ": mean rel diff " +
                fmt(r.mean_rel_diff) + " over " + std::to_string(r.fd.size()) + " coords, " + fmt(t) + " s";
  }
  report(1, pass, "adjoint vs central FD on contact vertex coords, mean rel diff <= 1e-3 (h=1 <= 5 min, h=0.5 <= 20 min)",
         measured);
}

void criterion2() {
  const ShapeParams p = default_case(DesignSpace::SingleDovetail);
  SimSettings sim = default_settings(p.space);
  sim.alternate.record_tape = true;
  const JointModel model = build_model(p, 1.0);
  const Evaluation e = evaluate(model, p.theta, sim);
  const MeshGradient g = displacement_metric_gradient(problem_for(e, sim), e.state);
  double interior = 0.0, boundary = 0.0;
  for (const auto& [mesh, grad] : {std::pair{&e.left, &g.left}, std::pair{&e.right, &g.right}}) {
    std::vector<bool> on_boundary(mesh->node_count(), false);
    for (const auto& be : mesh->boundary_edges) on_boundary[be.a] = on_boundary[be.b] = true;
    for (int i = 0; i < mesh->node_count(); ++i) {
      const double m = grad->segment<2>(2 * i).norm();
      double& slot = on_boundary[i] ? boundary : interior;
      slot = std::max(slot, m);
    }
  }
  const double ratio = interior / boundary;
  report(2, ratio <= 1e-6, "interior-node gradient <= 1e-6 x max boundary-node gradient",
         "ratio " + fmt(ratio) + ", max interior " + fmt(interior) + ", max boundary " + fmt(boundary));
}

void criterion3() {
  Polygon rect;
  rect.vertices = {{0, 0}, {30, 0}, {30, 10}, {0, 10}};
  rect.edge_tags = {EdgeTag::Free, EdgeTag::Traction, EdgeTag::Symmetry, EdgeTag::Free};
  rect.contact_index = {-1, -1, -1, -1};
  const double T = 0.001;
  double worst = 0.0;
  int elements = 0;
  for (double h : {1.0, 0.5}) {
    const TriMesh m = triangulate(rect, h);
    std::vector<int> pins;
    for (int i = 0; i < m.node_count(); ++i) {
      if (m.nodes[i].x() == 0.0) pins.push_back(2 * i);
    }
    const Eigen::VectorXd u = elastic_solve(m, Material{}, LoadCase{T}, pins);
    for (const auto& s : element_stresses(m, u, Material{})) {
      worst = std::max({worst, std::abs(s[0] - T) / T, std::abs(s[1]) / T, std::abs(s[2]) / T});
      ++elements;
    }
  }
  report(3, worst <= 1e-10, "uniform-traction rectangle gives sigma_xx = T in every element, rel err <= 1e-10",
         "max rel err " + fmt(worst) + " over " + std::to_string(elements) + " elements");
}

void criterion4() {
  const Material mat;
  const PenaltyConfig cfg;
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int states = 0, penetrating_states = 0;
  for (DesignSpace s : kSpaces) {
    const JointGeometry g = build_geometry(default_case(s));
    const TriMesh left = triangulate(g, Side::Left, 1.0);
    const TriMesh right = triangulate(g, Side::Right, 1.0);
    const LoadCase load = outward_load(Side::Left, default_traction(s));
    const auto lines = fit_contact_lines(right, random_field(right.dof_count(), rng, 0.02));
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd u = random_field(left.dof_count(), rng, 0.02);
      if (trial % 2) {
        for (int i = 0; i < left.node_count(); ++i) u[2 * i] += 0.05;
      }
      bool penetrating = false;
      for (const auto& e : left.boundary_edges) {
        const int k = left.polygon.contact_index[e.segment];
        if (k >= 0) penetrating = penetrating || signed_distance(left.nodes[e.a] + Vec2(u.segment<2>(2 * e.a)), lines[k]) < 0;
      }
      penetrating_states += penetrating;
      ++states;
      const Eigen::VectorXd v = random_field(left.dof_count(), rng, 1.0);
      const double h1 = 1e-7, h2 = 1e-6;
      const Eigen::VectorXd r = penalized_residual(left, u, mat, load, lines, cfg);
      const double fd_e = (penalized_energy(left, u + h1 * v, mat, load, lines, cfg) -
                           penalized_energy(left, u - h1 * v, mat, load, lines, cfg)) /
                          (2 * h1);
      worst = std::max(worst, std::abs(fd_e - r.dot(v)) / std::abs(r.dot(v)));
      const Eigen::VectorXd fd_r = (penalized_residual(left, u + h2 * v, mat, load, lines, cfg) -
                                    penalized_residual(left, u - h2 * v, mat, load, lines, cfg)) /
                                   (2 * h2);
      const Eigen::VectorXd Hv = penalized_tangent(left, u, mat, lines, cfg) * v;
      worst = std::max(worst, (fd_r - Hv).norm() / Hv.norm());
    }
  }
  report(4, worst <= 1e-5 && penetrating_states >= 15,
         "energy/residual/tangent FD chain, rel err <= 1e-5 on 10 states per space incl. penetration",
         "max rel err " + fmt(worst) + " over " + std::to_string(states) + " states (" +
             std::to_string(penetrating_states) + " penetrating)");
}

void criterion5() {
  bool pass = true;
  std::string measured;
  for (DesignSpace s : kSpaces) {
    const JointModel model = build_model(default_case(s), 0.5);
    const Evaluation e = evaluate(model, default_theta(s), default_settings(s));
    const auto& c = e.state.changes;
    bool monotone = true;
    for (std::size_t t = 2; t < c.size(); ++t) monotone = monotone && c[t] <= c[t - 1];
    const bool ok = e.state.converged && e.state.iterations <= 8 && c.back() <= 1e-6 && monotone;
    pass = pass && ok;
    measured += (measured.empty() ? "" : "; ") + std::string(to_string(s)) + ": " +
                std::to_string(e.state.iterations) + " it, last change " + fmt(c.back()) + " mm, " +
                (monotone ? "non-increasing" : "NOT monotone");
  }
  report(5, pass, "default cases converge (change <= 1e-6 mm) within 8 iterations, non-increasing after iteration 2",
         measured);
}

struct OptRun {
  Eigen::VectorXd theta0;
  OptTrace trace;
  double seconds = 0.0;
};

OptRun run_opt(DesignSpace s, const Eigen::VectorXd& theta0, double nu = 0.4) {
  SimSettings sim = default_settings(s);
  sim.material.nu = nu;
  const auto t0 = std::chrono::steady_clock::now();
  OptRun r{theta0, optimize({s, theta0}, sim, ObjectiveConfig{}, OptimizerConfig{}), 0.0};
  r.seconds = seconds_since(t0);
  return r;
}

void criteria6to8() {
  std::vector<std::vector<OptRun>> random_runs;
  for (DesignSpace s : kSpaces) {
    std::vector<OptRun> runs;
    for (std::uint64_t seed : kInitSeeds) runs.push_back(run_opt(s, random_feasible_theta(s, seed)));
    random_runs.push_back(std::move(runs));
  }
  const OptRun def = run_opt(DesignSpace::SingleDovetail, default_theta(DesignSpace::SingleDovetail));

  // 6
  bool dominance = true, timely = def.seconds <= 1200.0;
  double slowest = def.seconds;
  std::string measured;
  for (std::size_t k = 0; k < random_runs.size(); ++k) {
    for (const auto& r : random_runs[k]) {
      dominance = dominance && r.trace.best().d <= r.trace.entries.front().d;
      timely = timely && r.seconds <= 1200.0;
      slowest = std::max(slowest, r.seconds);
      measured += std::string(to_string(kSpaces[k])) + " " + fmt(r.trace.entries.front().d) + "->" +
                  fmt(r.trace.best().d) + "; ";
    }
  }
  const double reduction = 1.0 - def.trace.best().d / def.trace.entries.front().d;
  measured += "default single " + fmt(def.trace.entries.front().d) + "->" + fmt(def.trace.best().d) + " (-" +
              fmt(100 * reduction) + "%); slowest run " + fmt(slowest) + " s";
  report(6, dominance && reduction >= 0.2 && timely,
         "best d <= initial d for two seeded random starts per space, >= 20% lower on the single default, <= 20 min per run",
         measured);

  // 7
  bool closer = true;
  measured.clear();
  for (std::size_t k = 0; k < random_runs.size(); ++k) {
    const auto& r = random_runs[k];
    const double d0 = normalized_distance(r[0].theta0, r[1].theta0);
    const double d1 = normalized_distance(r[0].trace.best().theta, r[1].trace.best().theta);
    closer = closer && d1 < d0;
    measured += (measured.empty() ? "" : "; ") + std::string(to_string(kSpaces[k])) + " " + fmt(d0) + " -> " + fmt(d1);
  }
  report(7, closer, "optimized designs from two starts are closer than the starts (normalized distance)", measured);

  // 8
  const OptRun nu3 = run_opt(DesignSpace::SingleDovetail, default_theta(DesignSpace::SingleDovetail), 0.3);
  const double dist = normalized_distance(nu3.trace.best().theta, def.trace.best().theta);
  std::ostringstream th;
  th << "nu=0.3 best (" << nu3.trace.best().theta.transpose() << "), nu=0.4 best (" << def.trace.best().theta.transpose()
     << ")";
  report(8, dist <= 0.1, "optimized theta for nu = 0.3 vs 0.4 within normalized distance 0.1",
         "distance " + fmt(dist) + ", " + th.str());
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void criterion9() {
  const fs::path root = fs::temp_directory_path() / "dovetail_acceptance";
  fs::remove_all(root);
  struct Case {
    const char* command;
    RunConfig cfg;
  };
  std::vector<Case> cases;
  {
    RunConfig c;
    c.mesh_step = 1.0;
    c.dump_iterations = true;
    cases.push_back({"simulate", c});
    cases.push_back({"export-geometry", c});
    c.mesh_step = 2.0;
    cases.push_back({"grad-check", c});
    c.optimizer.steps = 2;
    c.theta0 = {Eigen::Vector3d(2, 3, 4), Eigen::Vector3d(3, 6, 7)};
    c.seed = 42;
    cases.push_back({"optimize", c});
    c.optimizer.steps = 1;
    c.theta0 = {};
    c.space = DesignSpace::DoubleDovetail;
    cases.push_back({"sweep-poisson", c});
  }
  bool pass = true;
  int files = 0;
  std::string measured;
  for (auto& [command, cfg] : cases) {
    cfg.out = (root / (std::string(command) + "_a")).string();
    std::ostringstream log, err;
    const int code = run_command(command, cfg, log, err);
    RunConfig again = load_run_config((fs::path(cfg.out) / "manifest.json").string());
    again.out = (root / (std::string(command) + "_b")).string();
    const int code2 = run_command(command, again, log, err);
    const auto manifest = nlohmann::json::parse(slurp(fs::path(cfg.out) / "manifest.json"));
    int mismatches = 0;
    for (const auto& a : manifest["artifacts"]) {
      const std::string rel = a.get<std::string>();
      ++files;
      if (slurp(fs::path(cfg.out) / rel) != slurp(fs::path(again.out) / rel)) ++mismatches;
    }
    const bool ok = code == code2 && mismatches == 0 && !manifest["artifacts"].empty();
    pass = pass && ok;
    if (!ok) measured += std::string(command) + " differs (" + std::to_string(mismatches) + " files); ";
  }
  measured += std::to_string(cases.size()) + " commands, " + std::to_string(files) + " artifacts compared";
  report(9, pass, "re-running each command from its manifest reproduces all artifacts bit-identically", measured);
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  auto guarded = [](std::initializer_list<int> ids, auto&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      for (int id : ids) report(id, false, "criterion raised an error", e.what());
    }
  };
  guarded({1}, criterion1);
  guarded({2}, criterion2);
  guarded({3}, criterion3);
  guarded({4}, criterion4);
  guarded({5}, criterion5);
  guarded({6, 7, 8}, criteria6to8);
  guarded({9}, criterion9);
  std::cout << g_failures << " criteria failed, total " << fmt(seconds_since(t0)) << " s" << std::endl;
  return g_failures == 0 ? 0 : 1;
}
