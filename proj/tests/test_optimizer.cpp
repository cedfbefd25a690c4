#include "doctest.h"

#include "dovetail/errors.hpp"
#include "dovetail/optimizer.hpp"

#include <cmath>

using namespace dovetail;

namespace {

const ShapeParams kSingle{DesignSpace::SingleDovetail, Eigen::Vector3d(2, 4, 5)};

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("regularizer values") {
  CHECK(regularizer_min_len({8.0, 5.39, 4.0}, 1.5) == 0.0);
  CHECK(regularizer_min_len({1.0, 2.0}, 1.5) == doctest::Approx(0.25));
  CHECK(regularizer_min_len({0.5, 1.0}, 1.5) == doctest::Approx(1.25));
  CHECK(regularizer_min_width(4.0, 3.5) == 0.0);
  CHECK(regularizer_min_width(3.0, 3.5) == doctest::Approx(0.25));
  CHECK(regularizer_min_width(3.5, 3.5) == 0.0);

  // (2,4,5): lengths 8, sqrt(29), 4 and width 4.
  CHECK(regularizer_min_len(kSingle, 1.5) == 0.0);
  CHECK(regularizer_min_width(kSingle, 3.5) == 0.0);
  CHECK(regularizer(kSingle, ObjectiveConfig{}) == 0.0);
  CHECK(regularizer_gradient(kSingle, ObjectiveConfig{}).norm() == 0.0);

  // (1.5,2,1): width 3, lengths 8, sqrt(1.25), 8.5.
  const ShapeParams tight{DesignSpace::SingleDovetail, Eigen::Vector3d(1.5, 2, 1)};
  CHECK(regularizer_min_width(tight, 3.5) == doctest::Approx(0.25));
  CHECK(regularizer_min_len(tight, 1.5) == doctest::Approx(std::pow(1.5 - std::sqrt(1.25), 2)));
}

TEST_CASE("regularizer gradients match finite differences") {
  ObjectiveConfig cfg;
  cfg.w_min_l = 2.0;
  cfg.w_min_w = 0.5;
  const ShapeParams cases[] = {
      {DesignSpace::SingleDovetail, Eigen::Vector3d(1.5, 2, 1)},
      {DesignSpace::SingleDovetail, Eigen::Vector3d(1.2, 1.6, 0.8)},
      {DesignSpace::ComplexDovetail, (Eigen::VectorXd(6) << -1, 3, 0, 1.5, 3, 1).finished()},
      {DesignSpace::DoubleDovetail, (Eigen::VectorXd(6) << -1, 0, 3, 1.5, 3, 1).finished()},
  };
  for (const auto& p : cases) {
    REQUIRE(validate_params(p).empty());
    const Eigen::VectorXd g = regularizer_gradient(p, cfg);
    CHECK(g.norm() > 0.0);
    const Eigen::VectorXd fd =
        fd_gradient([&](const Eigen::VectorXd& t) { return regularizer({p.space, t}, cfg); }, p.theta, 1e-6);
    CHECK((fd - g).norm() <= 1e-6 * g.norm());
  }
}

TEST_CASE("noise samples") {
  ObjectiveConfig cfg;
  cfg.rng_seed = 17;
  const auto a = noisy_samples(kSingle, cfg, 3);
  const auto b = noisy_samples(kSingle, cfg, 3);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].has_value());
    CHECK((*a[i] - *b[i]).norm() == 0.0);
    CHECK((*a[i] - kSingle.theta).norm() > 0.0);
    CHECK((*a[i] - kSingle.theta).cwiseAbs().maxCoeff() < 0.1);
  }
  CHECK((*a[0] - *a[1]).norm() > 0.0);
  CHECK((*noisy_samples(kSingle, cfg, 4)[0] - *a[0]).norm() > 0.0);
  cfg.rng_seed = 18;
  CHECK((*noisy_samples(kSingle, cfg, 3)[0] - *a[0]).norm() > 0.0);

  // At a = b half of the draws are infeasible; redraws recover them.
  const ShapeParams edge{DesignSpace::SingleDovetail, Eigen::Vector3d(2, 2, 5)};
  for (const auto& s : noisy_samples(edge, cfg, 0)) {
    REQUIRE(s.has_value());
    CHECK(validate_params({edge.space, *s}).empty());
  }

  cfg.noise_sigma = 0.0;
  const auto z = noisy_samples(kSingle, cfg, 0);
  REQUIRE(z.size() == 1);
  CHECK((*z[0] - kSingle.theta).norm() == 0.0);
}

TEST_CASE("objective") {
  const JointModel model = build_model(kSingle, 1.0);
  SimSettings sim;
  ObjectiveConfig cfg;
  cfg.rng_seed = 5;

  SUBCASE("zero noise equals the plain pipeline") {
    cfg.noise_sigma = 0.0;
    const ObjectiveValue v = Objective(model, sim, cfg)(kSingle.theta, 0, true);
    SimSettings taped = sim;
    taped.alternate.record_tape = true;
    const Evaluation e = evaluate(model, kSingle.theta, taped);
    CHECK(v.L == v.d);
    CHECK(v.d == e.d);
    CHECK((v.grad - d_gradient(model, e, taped)).norm() == 0.0);
    cfg.noise_samples = 7;
    const ObjectiveValue w = Objective(model, sim, cfg)(kSingle.theta, 0, true);
    CHECK(w.L == v.L);
    CHECK((w.grad - v.grad).norm() == 0.0);
  }

  SUBCASE("deterministic and averaged") {
    const Objective obj(model, sim, cfg);
    const ObjectiveValue a = obj(kSingle.theta, 2, false);
    const ObjectiveValue b = obj(kSingle.theta, 2, false);
    CHECK(a.L == b.L);
    CHECK(a.grad.size() == 0);
    double sum = 0.0;
    SimSettings s = sim;
    for (const auto& t : noisy_samples(kSingle, cfg, 2)) sum += evaluate(model, *t, s).d;
    CHECK(a.d == doctest::Approx(sum / 3.0).epsilon(1e-14));
  }

  SUBCASE("gradient matches finite differences with frozen noise") {
    sim.alternate.fixed_iterations = 8;
    const Objective obj(model, sim, cfg);
    const ObjectiveValue v = obj(kSingle.theta, 1, true);
    const Eigen::VectorXd fd =
        fd_gradient([&](const Eigen::VectorXd& t) { return obj(t, 1, false).L; }, kSingle.theta, 1e-4);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(fd[i] - v.grad[i]) <= 1e-3 * std::abs(fd[i]));
  }

  SUBCASE("failures give infinity") {
    const Objective obj(model, sim, cfg);
    const ObjectiveValue v = obj(Eigen::Vector3d(4, 2, 5), 0, true);
    CHECK(std::isinf(v.L));
    CHECK(v.failed_samples == 3);
    CHECK(!v.failure.empty());
  }
}

TEST_CASE("strong Wolfe line search") {
  // L = x^2 from x = 1 along p = -g = -2.
  auto quad = [](double a) {
    const double x = 1.0 - 2.0 * a;
    return LinePoint{x * x, 2.0 * x * -2.0};
  };
  const LinePoint start{1.0, -4.0};
  for (double a0 : {0.01, 0.25, 0.5, 0.9, 3.0}) {
    const LineSearchResult r = wolfe_line_search(quad, start, a0);
    const LinePoint direct = quad(r.alpha);
    CHECK(direct.phi <= start.phi + 1e-4 * r.alpha * start.dphi);
    CHECK(std::abs(direct.dphi) <= 0.9 * std::abs(start.dphi));
    CHECK(r.point.phi == direct.phi);
    CHECK(r.evaluations <= 20);
  }

  CHECK_THROWS_AS(wolfe_line_search(quad, {1.0, 4.0}, 0.5), Error);
  CHECK_THROWS_AS(wolfe_line_search(quad, {1.0, 0.0}, 0.5), Error);

  int calls = 0;
  auto wall = [&](double a) {
    ++calls;
    return LinePoint{a > 0 ? 1.0 + std::sin(1e3 * a) * 0.5 + 0.5 : 0.0, 1.0};
  };
  try {
    wolfe_line_search(wall, {0.0, -1.0}, 1.0);
    FAIL("expected LineSearchFailure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::LineSearchFailure);
  }
  CHECK(calls == 20);

  auto nan_wall = [](double a) {
    if (a > 1e-3) return LinePoint{std::nan(""), std::nan("")};
    return LinePoint{-a + a * a / 8e-4, -1.0 + a / 4e-4};
  };
  const LineSearchResult r = wolfe_line_search(nan_wall, {0.0, -1.0}, 1.0);
  CHECK(r.alpha <= 1e-3);
  CHECK(std::isfinite(r.point.phi));
}

TEST_CASE("optimize trace") {
  SimSettings sim;
  ObjectiveConfig cfg;
  cfg.rng_seed = 11;
  OptimizerConfig opt;
  opt.steps = 2;
  opt.mesh_step = 1.0;
  const ShapeParams start{DesignSpace::SingleDovetail, Eigen::Vector3d(2, 3, 4)};
  int callbacks = 0;
  const OptTrace t = optimize(start, sim, cfg, opt, [&](const TraceEntry&) { ++callbacks; });
  REQUIRE(t.entries.size() == 3);
  CHECK(callbacks == 3);
  CHECK(t.entries[0].kind == StepKind::Initial);
  CHECK((t.entries[0].theta - start.theta).norm() == 0.0);
  for (const auto& e : t.entries) {
    CHECK(t.best().d <= e.d);
    CHECK(e.L >= e.d);
  }
  CHECK(t.best().d < t.entries[0].d);
  CHECK(t.entries[1].kind != StepKind::Initial);

  const OptTrace again = optimize(start, sim, cfg, opt);
  CHECK(trace_csv(again) == trace_csv(t));
  const std::string csv = trace_csv(t);
  CHECK(csv.rfind("step,theta0,theta1,theta2,L,d,step_size,step_kind\n", 0) == 0);

  CHECK_THROWS_AS(optimize({DesignSpace::SingleDovetail, Eigen::Vector3d(4, 2, 5)}, sim, cfg, opt), InvalidParams);
}

TEST_CASE("helpers") {
  CHECK(normalized_distance(Eigen::Vector2d(3, 4), Eigen::Vector2d(3, 4)) == 0.0);
  CHECK(normalized_distance(Eigen::Vector2d(3, 4), Eigen::Vector2d(0, 0)) == doctest::Approx(2.0));
  for (DesignSpace s : {DesignSpace::SingleDovetail, DesignSpace::ComplexDovetail, DesignSpace::DoubleDovetail}) {
    const Eigen::VectorXd a = random_feasible_theta(s, 1);
    const Eigen::VectorXd b = random_feasible_theta(s, 2);
    CHECK(a.size() == parameter_count(s));
    CHECK(validate_params({s, a}).empty());
    CHECK(validate_params({s, b}).empty());
    CHECK((a - b).norm() > 0.0);
    CHECK((random_feasible_theta(s, 1) - a).norm() == 0.0);
  }
  CHECK(to_string(StepKind::RandomFallback) == "random_fallback");
}

}  // TEST_SUITE
