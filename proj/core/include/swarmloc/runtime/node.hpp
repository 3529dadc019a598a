#pragma once

#include <optional>
#include <string>
#include <vector>

#include "swarmloc/eval/metrics.hpp"
#include "swarmloc/eval/simple_match.hpp"
#include "swarmloc/matchnet/params.hpp"
#include "swarmloc/pgo/solver.hpp"
#include "swarmloc/runtime/bus.hpp"
#include "swarmloc/sim/dataset.hpp"

namespace swarmloc::runtime {

/// The sensors of one robot at one frame; nothing else reaches a node.
struct NodeView {
  int robot = 0;
  int frame = 0;
  Pose pvo;
  std::vector<Bearing> det;
  /// Range to every robot (nullopt for self and for dropouts).
  std::vector<std::optional<double>> uwb;
};

NodeView make_view(const sim::SwarmFrame& frame, int frame_index, int robot);

struct NodeConfig {
  /// Learned front end when params are given, otherwise Simple Match.
  eval::SimpleMatchConfig simple;
  pgo::LMSettings lm;
  pgo::GraphDefaults graph;
  /// Variance assigned to a neighbor's broadcast estimate, m^2.
  double shared_var = 0.25;
  /// Growth of a prior's variance per PVO step, m^2.
  double process_var = 0.02;
  double initial_var = 0.01;
  /// Also enter neighbor estimates into the node's PGO as mutual factors.
  bool neighbor_factors = true;
  /// Inverse-variance fusion of neighbor estimates into the priors.
  bool fuse_priors = true;
  /// Blend rotations too (tangent space, same weight as the translation).
  bool fuse_rotation = false;

  void validate() const;
};

class Node {
 public:
  /// `initial[j]`: robot j in this robot's frame. `params` may be null.
  Node(int robot, std::vector<Pose> initial, const matchnet::NetworkParams* params, NodeConfig config);

  /// The message for `view.frame`: own PVO and the previous optimized poses.
  BusMessage message(const NodeView& view) const;
  /// Propagate priors, fuse neighbor estimates, run front end and PGO.
  void step(const NodeView& view, const std::vector<BusMessage>& inbox);

  int robot() const { return robot_; }
  const std::vector<Pose>& estimate() const { return estimate_; }
  const std::vector<double>& prior_var() const { return var_; }
  const matchnet::MatchResult& last_result() const { return result_; }
  int last_iterations() const { return iterations_; }

 private:
  void propagate(const NodeView& view);
  void fuse(int k, const Pose& est, double var_est);

  int robot_;
  int n_;
  const matchnet::NetworkParams* params_;
  NodeConfig config_;
  std::vector<Pose> estimate_;
  std::vector<double> var_;
  std::vector<Pose> last_inc_;
  matchnet::MatchResult result_;
  int iterations_ = 0;
  bool first_ = true;
};

struct MessageLogRow {
  int frame = 0;
  int robot = 0;
  int messages = 0;
  std::size_t bytes = 0;
};

struct RuntimeConfig {
  NodeConfig node;
  BusConfig bus;
  int first_frame = 0;
  int max_frames = 0;

  void validate() const;
};

struct DecentralizedReport {
  int n_robots = 0;
  int n_frames = 0;
  /// RPE of every node over its own row of pairs, in its own frame.
  std::vector<double> node_rpe;
  double rpe_rmse = 0.0;
  eval::PRF1 matching;
  std::vector<MessageLogRow> messages;
  /// node_frame_rpe[frame][robot]
  std::vector<std::vector<double>> node_frame_rpe;
};

/// One node per robot in lockstep rounds. Nodes start from the ground-truth
/// relative poses of the first evaluated frame.
DecentralizedReport run_decentralized(const sim::Dataset& data, const matchnet::NetworkParams* params,
                                      const RuntimeConfig& config);

std::string decentralized_to_json(const DecentralizedReport& r);
/// <prefix>.json, <prefix>_messages.csv and <prefix>_nodes.csv.
void write_decentralized(const DecentralizedReport& r, const std::string& prefix);

}  // namespace swarmloc::runtime
