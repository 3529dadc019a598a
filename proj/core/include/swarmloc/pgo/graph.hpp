#pragma once

#include <optional>
#include <string>
#include <vector>

#include "swarmloc/geom.hpp"

namespace swarmloc::pgo {

/// Position of robot j measured in robot i's body frame.
struct MutualFactor {
  int i = 0;
  int j = 0;
  Vec3 measured = Vec3::Zero();
  Vec3 info = Vec3::Ones();
};

struct PriorFactor {
  int robot = 0;
  Pose prior;
  Vec3 info_t = Vec3::Ones();
  Vec3 info_r = Vec3::Ones();
};

struct RangeFactor {
  int i = 0;
  int j = 0;
  double distance = 0.0;
  double info = 1.0;
};

/// Relative poses of every robot in the frame of `reference`, which is fixed
/// to identity. All other robots are variables.
struct FactorGraph {
  int n_robots = 0;
  int reference = 0;
  /// Initial pose per robot; the reference entry must be identity.
  std::vector<Pose> init;
  std::vector<MutualFactor> mutual;
  std::vector<PriorFactor> prior;
  std::vector<RangeFactor> range;

  int n_vars() const { return n_robots - 1; }
  /// Variable slot of a robot, or -1 for the reference.
  int var_index(int robot) const;
  /// Throws Error for dangling ids, non-positive/non-finite information or an
  /// empty graph.
  void validate() const;
  std::size_t n_factors() const { return mutual.size() + prior.size() + range.size(); }
};

struct GraphDefaults {
  double sigma_rot = 2.0 * 3.14159265358979323846 / 180.0;
  double sigma_range = 0.1;
  double prior_var_t = 4.0;
};

/// Priors-plus-ranges skeleton: one prior factor per variable from `priors`
/// (poses in the reference frame) and one range factor per available pair.
/// Variables are initialized from the priors.
FactorGraph make_graph(int reference, const std::vector<Pose>& priors,
                       const std::vector<std::vector<std::optional<double>>>& ranges,
                       const GraphDefaults& defaults = {});

/// Residuals at the graph's current `poses` (one per robot).
struct MutualResidual {
  Vec3 e;
  double cost;
};
struct PriorResidual {
  Eigen::Matrix<double, 6, 1> e;
  double cost;
};
struct RangeResidual {
  double e;
  double cost;
};

MutualResidual residual_mutual(const std::vector<Pose>& poses, const MutualFactor& f);
PriorResidual residual_prior(const std::vector<Pose>& poses, const PriorFactor& f);
RangeResidual residual_range(const std::vector<Pose>& poses, const RangeFactor& f);
double total_cost(const FactorGraph& g, const std::vector<Pose>& poses);

/// JSON debug dump (variables, factors, optional cost trace).
std::string graph_to_json(const FactorGraph& g, const std::vector<double>& cost_trace = {});

}  // namespace swarmloc::pgo
