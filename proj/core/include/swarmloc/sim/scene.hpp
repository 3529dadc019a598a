#pragma once

#include <cstdint>
#include <numbers>
#include <vector>

#include "swarmloc/geom.hpp"

namespace swarmloc::sim {

inline constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

/// Swarm scene parameters. Units: meters, seconds, radians unless a field
/// name or comment says otherwise.
struct SceneConfig {
  int n_robots = 4;
  Vec3 world{70.0, 30.0, 3.0};
  int n_trees = 60;
  double tree_radius_min = 0.1;
  double tree_radius_max = 0.5;
  double formation_radius = 5.0;
  double speed = 1.0;        // m/s, reduced when the path is too short for n_frames
  double frame_rate = 10.0;  // Hz
  int n_frames = 500;
  double fov_deg = 180.0;
  /// Azimuthal wedge (around the body -x axis) from which a robot's emitters
  /// can be seen.
  double emitter_wedge_deg = 270.0;
  double fake_prob = 0.4;
  double uwb_sigma = 0.1;
  double uwb_dropout = 0.02;
  double bearing_sigma = deg2rad(1.0);
  double pvo_t_sigma = 0.1;  // m per frame, per axis
  double pvo_r_sigma = 1.0;  // degrees per frame, per axis
  /// Maximum detections per robot per frame; 0 selects n_robots + 4.
  int max_detections = 0;
  double lateral_sway = 2.0;
  double vertical_sway = 0.5;
  double spin_rate = 0.1;  // formation rotation about its center, rad/s
  double yaw_sway = 0.5;   // per-robot heading oscillation amplitude, rad
  std::uint64_t seed = 7;

  int max_det() const { return max_detections > 0 ? max_detections : n_robots + 4; }
  double dt() const { return 1.0 / frame_rate; }
  /// Throws ConfigError for invalid or geometrically infeasible settings.
  void validate() const;
  /// Zeroes every noise source, fake detections and UWB dropout.
  SceneConfig noiseless() const;

  bool operator==(const SceneConfig&) const = default;
};

/// Vertical cylinder from z = 0 to `height`.
struct Tree {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;
  double height = 0.0;

  bool operator==(const Tree&) const = default;
};

struct Scene {
  SceneConfig config;
  std::vector<Tree> trees;
  /// trajectories[robot][frame], world frame.
  std::vector<std::vector<Pose>> trajectories;

  int n_robots() const { return config.n_robots; }
  int n_frames() const { return config.n_frames; }
  double time(int frame) const { return frame * config.dt(); }
  const Pose& pose(int robot, int frame) const { return trajectories[robot][frame]; }
};

/// Deterministic in (config, seed). Throws ConfigError if infeasible.
Scene generate_scene(const SceneConfig& config);

/// Whether `observer` can detect `target` at `frame`: target in the observer's
/// FOV cone, observer inside the target's emitter wedge, and no tree blocking
/// the line of sight.
bool visibility(const Scene& scene, int frame, int observer, int target);

bool in_fov(const Vec3& body_dir, double fov_deg);
bool in_emitter_wedge(const Pose& target, const Vec3& observer_pos, double wedge_deg);
/// Segment a-b against a vertical cylinder.
bool segment_hits_tree(const Vec3& a, const Vec3& b, const Tree& tree);
bool line_of_sight_clear(const Scene& scene, const Vec3& a, const Vec3& b);

}  // namespace swarmloc::sim
