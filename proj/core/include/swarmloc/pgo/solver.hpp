#pragma once

#include <vector>

#include "swarmloc/ad/ops.hpp"
#include "swarmloc/pgo/graph.hpp"

namespace swarmloc::pgo {

struct LMSettings {
  int max_iters = 20;
  double lambda0 = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.3;
  /// Converged when an accepted step lowers the cost by less than tol * cost.
  double tol = 1e-10;
  /// Accepted iterations kept on the gradient path in the differentiable mode.
  int unroll_depth = 3;
  double lambda_max = 1e12;

  void validate() const;
};

struct SolveResult {
  std::vector<Pose> poses;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  /// Linear solves attempted (accepted or not).
  int iterations = 0;
  int accepted = 0;
  bool converged = false;
  /// Cost after initialization and after every accepted step.
  std::vector<double> cost_trace;
};

/// Levenberg-Marquardt over tangent increments (translation added in the
/// reference frame, rotation right-multiplied). Throws SolverError if the
/// damped normal equations stay singular.
SolveResult lm_solve(const FactorGraph& graph, const LMSettings& settings);

/// Gauss-Newton system at `poses`: H = J^T W J and g = J^T W e over the
/// 6-dim tangent of every variable. The cost gradient is 2 g.
struct Linearization {
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
};
Linearization linearize(const FactorGraph& graph, const std::vector<Pose>& poses);
/// Applies tangent increments (translation added, rotation right-multiplied).
std::vector<Pose> retract(const FactorGraph& graph, const std::vector<Pose>& poses, const Eigen::VectorXd& dx);

/// Tape inputs replacing the graph's numeric mutual measurements/information
/// and prior translations/information. Rows follow graph.mutual and
/// graph.prior order.
struct DiffInputs {
  ad::Var mutual_measured;  // F x 3
  ad::Var mutual_info;      // F x 3
  ad::Var prior_t;          // V x 3
  ad::Var prior_info_t;     // V x 3
};

struct DiffOutput {
  /// Per robot, reference frame: translations (N x 3) and quaternions
  /// (N x 4, w x y z).
  ad::Var t;
  ad::Var q;
  SolveResult solve;
};

/// Same iterations as lm_solve, stopped after unroll_depth accepted steps,
/// with gradients flowing back to every DiffInputs tensor. Invalid DiffInputs
/// members are taken from the graph as constants.
DiffOutput lm_solve_differentiable(const FactorGraph& graph, const LMSettings& settings,
                                   ad::Tape& tape, const DiffInputs& inputs);

}  // namespace swarmloc::pgo
