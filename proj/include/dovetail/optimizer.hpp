#pragma once

#include "dovetail/adjoint.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dovetail {

struct ObjectiveConfig {
  double w_min_l = 1.0;
  double w_min_w = 1.0;
  double min_len = 1.5;    // mm
  double min_width = 3.5;  // mm
  double noise_sigma = 0.01;
  int noise_samples = 3;
  std::uint64_t rng_seed = 0;
};

/// Sum over contact edges of max(min_len - l, 0)^2.
double regularizer_min_len(const std::vector<double>& lengths, double min_len);
double regularizer_min_len(const ShapeParams& params, double min_len);
Eigen::VectorXd regularizer_min_len_gradient(const ShapeParams& params, double min_len);

/// max(min_width - width, 0)^2.
double regularizer_min_width(double width, double min_width);
double regularizer_min_width(const ShapeParams& params, double min_width);
Eigen::VectorXd regularizer_min_width_gradient(const ShapeParams& params, double min_width);

/// Weighted sum of both regularizers and its gradient.
double regularizer(const ShapeParams& params, const ObjectiveConfig& cfg);
Eigen::VectorXd regularizer_gradient(const ShapeParams& params, const ObjectiveConfig& cfg);

/// Perturbed copies theta + eta, eta ~ N(0, sigma^2 I), from the stream
/// (rng_seed, step, sample). Infeasible draws are redrawn up to 5 times; an
/// entry stays empty when every draw was infeasible. With sigma = 0 the
/// single unperturbed theta is returned.
std::vector<std::optional<Eigen::VectorXd>> noisy_samples(const ShapeParams& params, const ObjectiveConfig& cfg,
                                                          int step);

struct ObjectiveValue {
  double L = std::numeric_limits<double>::infinity();
  double d = std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;  // empty unless requested and L is finite
  int failed_samples = 0;
  bool converged = true;  // every sample's alternation converged
  std::string failure;    // first failure message
};

/// L = d + regularizers averaged over the noise samples of one step, all
/// solved on the model's meshes morphed to the sample.
class Objective {
 public:
  Objective(const JointModel& model, SimSettings sim, ObjectiveConfig cfg);

  ObjectiveValue operator()(const Eigen::VectorXd& theta, int step, bool with_grad) const;

 private:
  const JointModel& model_;
  SimSettings sim_;
  ObjectiveConfig cfg_;
};

struct WolfeOptions {
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_evaluations = 20;
  /// Bracketing growth stops at alpha0 * max_growth.
  double max_growth = 16.0;
};

struct LinePoint {
  double phi = 0.0;
  double dphi = 0.0;
};

struct LineSearchResult {
  double alpha = 0.0;
  LinePoint point;
  int evaluations = 0;
};

/// Strong-Wolfe bracketing and zoom on phi(alpha) = L(theta + alpha p).
/// Requires dphi0 < 0 (DomainError otherwise); throws LineSearchFailure when
/// the evaluation budget runs out. Non-finite phi counts as too large.
LineSearchResult wolfe_line_search(const std::function<LinePoint(double)>& phi, LinePoint at_zero, double alpha0,
                                   const WolfeOptions& opts = {});

enum class StepKind { Initial, Wolfe, RandomFallback, NoMove };
std::string_view to_string(StepKind kind);

struct TraceEntry {
  int step = 0;
  Eigen::VectorXd theta;
  double L = 0.0;
  double d = 0.0;
  double step_size = 0.0;  // length of the move that produced theta
  StepKind kind = StepKind::Initial;
  int evaluations = 0;     // objective evaluations spent on that move
  bool converged = true;
  std::string note;
};

struct OptTrace {
  DesignSpace space = DesignSpace::SingleDovetail;
  std::vector<TraceEntry> entries;
  int best_index = 0;

  const TraceEntry& best() const { return entries[best_index]; }
};

struct OptimizerConfig {
  int steps = 15;
  double mesh_step = 0.5;
  double fallback_sigma = 0.5;  // mm along the unit negative gradient
  int fallback_retries = 3;
  /// Initial trial move length in mm.
  double initial_step = 0.5;
  WolfeOptions wolfe;
};

/// Gradient descent with remeshing at every accepted iterate.
OptTrace optimize(const ShapeParams& theta0, const SimSettings& sim, const ObjectiveConfig& obj,
                  const OptimizerConfig& opt = {},
                  const std::function<void(const TraceEntry&)>& on_step = nullptr);

/// step,theta0..,L,d,step_size,step_kind
std::string trace_csv(const OptTrace& trace);

/// |t1 - t2| / (0.5 (|t1| + |t2|)).
double normalized_distance(const Eigen::VectorXd& t1, const Eigen::VectorXd& t2);

/// Feasible theta drawn uniformly from a per-space box (rejection sampling).
Eigen::VectorXd random_feasible_theta(DesignSpace space, std::uint64_t seed, const SimDomain& domain = {});

}  // namespace dovetail
