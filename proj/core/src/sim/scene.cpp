#include "swarmloc/sim/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "swarmloc/error.hpp"

namespace swarmloc::sim {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLateralPeriod = 20.0;   // m of forward travel
constexpr double kVerticalPeriod = 15.0;  // m of forward travel
constexpr double kEdgeMargin = 1.0;
constexpr double kTreeClearance = 0.5;
constexpr double kHeightOffset = 0.3;
constexpr double kTilt = 0.08;  // roll/pitch oscillation amplitude, rad

struct Path {
  double x0 = 0.0;
  double v = 0.0;
  double y_mid = 0.0;
  double z_mid = 0.0;
};

Path make_path(const SceneConfig& c) {
  Path p;
  const double margin = c.formation_radius + kEdgeMargin;
  p.x0 = margin;
  const double length = c.world.x() - 2.0 * margin;
  const double duration = std::max(1, c.n_frames - 1) * c.dt();
  p.v = std::min(c.speed, length / duration);
  p.y_mid = 0.5 * c.world.y();
  p.z_mid = 0.5 * c.world.z();
  return p;
}

Pose robot_pose(const SceneConfig& c, const Path& p, int robot, double t) {
  const double s = p.v * t;
  const double wl = 2.0 * kPi / kLateralPeriod;
  const double wv = 2.0 * kPi / kVerticalPeriod;
  const Vec3 center(p.x0 + s, p.y_mid + c.lateral_sway * std::sin(wl * s),
                    p.z_mid + c.vertical_sway * std::sin(wv * s));
  const double heading = std::atan2(c.lateral_sway * wl * std::cos(wl * s), 1.0);

  const double phase = 2.0 * kPi * robot / c.n_robots;
  const double spin = c.spin_rate * t;
  const double a = heading + spin + phase;
  const double dz = kHeightOffset * std::sin(2.4 * robot + 0.3);
  const Vec3 pos = center +
                   Vec3(c.formation_radius * std::cos(a), c.formation_radius * std::sin(a), dz);

  const double yaw = heading + c.yaw_sway * std::sin(0.4 * t + 1.7 * robot);
  const double pitch = kTilt * std::sin(0.7 * t + robot);
  const double roll = kTilt * std::sin(0.9 * t + 2.0 * robot);
  return Pose::from_ypr(yaw, pitch, roll, pos);
}

// Spatial hash over trajectory samples, for tree rejection sampling.
class PointGrid {
 public:
  explicit PointGrid(double cell) : cell_(cell) {}

  void insert(double x, double y) { cells_[key(cell_index(x), cell_index(y))].emplace_back(x, y); }

  double nearest_within(double x, double y, double radius) const {
    double best = radius;
    const long cx = cell_index(x);
    const long cy = cell_index(y);
    const long span = static_cast<long>(std::ceil(radius / cell_));
    for (long i = cx - span; i <= cx + span; ++i) {
      for (long j = cy - span; j <= cy + span; ++j) {
        auto it = cells_.find(key(i, j));
        if (it == cells_.end()) continue;
        for (const auto& [px, py] : it->second) {
          best = std::min(best, std::hypot(px - x, py - y));
        }
      }
    }
    return best;
  }

 private:
  long cell_index(double v) const { return static_cast<long>(std::floor(v / cell_)); }
  static long long key(long i, long j) { return (static_cast<long long>(i) << 32) ^ (j & 0xffffffffL); }

  double cell_;
  std::unordered_map<long long, std::vector<std::pair<double, double>>> cells_;
};

}  // namespace

void SceneConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("scene: " + m); };
  if (n_robots < 2) fail("n_robots must be >= 2");
  if (n_frames < 1) fail("n_frames must be >= 1");
  if (n_trees < 0) fail("n_trees must be >= 0");
  if (!(fov_deg > 0.0 && fov_deg <= 360.0)) fail("fov_deg must be in (0, 360]");
  if (!(emitter_wedge_deg > 0.0 && emitter_wedge_deg <= 360.0)) {
    fail("emitter_wedge_deg must be in (0, 360]");
  }
  if (!(frame_rate > 0.0)) fail("frame_rate must be positive");
  if (!(speed > 0.0)) fail("speed must be positive");
  if (!(formation_radius > 0.0)) fail("formation_radius must be positive");
  for (double s : {uwb_sigma, bearing_sigma, pvo_t_sigma, pvo_r_sigma, lateral_sway, vertical_sway,
                   yaw_sway}) {
    if (!(s >= 0.0) || !std::isfinite(s)) fail("sigmas and sway amplitudes must be >= 0");
  }
  if (!(fake_prob >= 0.0 && fake_prob <= 1.0)) fail("fake_prob must be in [0, 1]");
  if (!(uwb_dropout >= 0.0 && uwb_dropout < 1.0)) fail("uwb_dropout must be in [0, 1)");
  if (!(tree_radius_min > 0.0 && tree_radius_max >= tree_radius_min)) {
    fail("tree radius range must satisfy 0 < min <= max");
  }
  if (max_detections < 0) fail("max_detections must be >= 0");
  if (max_detections > 0 && max_detections < n_robots - 1) {
    fail("max_detections must be >= n_robots - 1");
  }
  const double margin = formation_radius + kEdgeMargin;
  if (world.x() - 2.0 * margin <= 0.0) fail("formation does not fit along the world x axis");
  if (2.0 * (margin + lateral_sway) > world.y()) fail("formation does not fit along the world y axis");
  if (2.0 * (vertical_sway + kHeightOffset + 0.2) > world.z()) {
    fail("formation does not fit in the world height");
  }
}

SceneConfig SceneConfig::noiseless() const {
  SceneConfig c = *this;
  c.fake_prob = 0.0;
  c.uwb_sigma = 0.0;
  c.uwb_dropout = 0.0;
  c.bearing_sigma = 0.0;
  c.pvo_t_sigma = 0.0;
  c.pvo_r_sigma = 0.0;
  return c;
}

Scene generate_scene(const SceneConfig& config) {
  config.validate();
  Scene scene;
  scene.config = config;
  const Path path = make_path(config);

  scene.trajectories.resize(config.n_robots);
  PointGrid grid(1.0);
  for (int r = 0; r < config.n_robots; ++r) {
    auto& traj = scene.trajectories[r];
    traj.reserve(config.n_frames);
    for (int f = 0; f < config.n_frames; ++f) {
      traj.push_back(robot_pose(config, path, r, scene.time(f)));
      grid.insert(traj.back().t().x(), traj.back().t().y());
    }
  }

  std::mt19937_64 rng(config.seed ^ 0x7265ee5ull);
  std::uniform_real_distribution<double> ux(0.0, config.world.x());
  std::uniform_real_distribution<double> uy(0.0, config.world.y());
  std::uniform_real_distribution<double> ur(config.tree_radius_min, config.tree_radius_max);
  const long max_attempts = 200L * std::max(1, config.n_trees);
  for (long attempt = 0; attempt < max_attempts && static_cast<int>(scene.trees.size()) < config.n_trees;
       ++attempt) {
    Tree tree{ux(rng), uy(rng), ur(rng), config.world.z()};
    const double need = tree.radius + kTreeClearance;
    if (grid.nearest_within(tree.x, tree.y, need + 1e-9) < need) continue;
    scene.trees.push_back(tree);
  }
  if (static_cast<int>(scene.trees.size()) < config.n_trees) {
    throw ConfigError("scene: could not place " + std::to_string(config.n_trees) +
                      " trees clear of the formation path");
  }
  return scene;
}

bool in_fov(const Vec3& body_dir, double fov_deg) {
  if (fov_deg >= 360.0) return true;
  const double c = body_dir.x() / body_dir.norm();
  return c >= std::cos(deg2rad(0.5 * fov_deg)) - 1e-12;
}

bool in_emitter_wedge(const Pose& target, const Vec3& observer_pos, double wedge_deg) {
  if (wedge_deg >= 360.0) return true;
  const Vec3 w = target.q().conjugate() * (observer_pos - target.t());
  // Azimuth measured from the body front; the wedge is centered on the back.
  const double az = std::abs(std::atan2(w.y(), w.x()));
  return az >= kPi - deg2rad(0.5 * wedge_deg);
}

bool segment_hits_tree(const Vec3& a, const Vec3& b, const Tree& tree) {
  const double dx = b.x() - a.x();
  const double dy = b.y() - a.y();
  const double ox = a.x() - tree.x;
  const double oy = a.y() - tree.y;
  const double r2 = tree.radius * tree.radius;
  const double qa = dx * dx + dy * dy;
  const double qb = 2.0 * (ox * dx + oy * dy);
  const double qc = ox * ox + oy * oy - r2;
  double s0 = 0.0;
  double s1 = 1.0;
  if (qa < 1e-18) {
    if (qc >= 0.0) return false;
  } else {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc <= 0.0) return false;
    const double sq = std::sqrt(disc);
    s0 = std::max(0.0, (-qb - sq) / (2.0 * qa));
    s1 = std::min(1.0, (-qb + sq) / (2.0 * qa));
    if (s0 >= s1) return false;
  }
  const double z0 = a.z() + s0 * (b.z() - a.z());
  const double z1 = a.z() + s1 * (b.z() - a.z());
  return std::min(z0, z1) <= tree.height && std::max(z0, z1) >= 0.0;
}

bool line_of_sight_clear(const Scene& scene, const Vec3& a, const Vec3& b) {
  return std::none_of(scene.trees.begin(), scene.trees.end(),
                      [&](const Tree& t) { return segment_hits_tree(a, b, t); });
}

bool visibility(const Scene& scene, int frame, int observer, int target) {
  if (observer == target) return false;
  const Pose& po = scene.pose(observer, frame);
  const Pose& pt = scene.pose(target, frame);
  const Vec3 body = po.q().conjugate() * (pt.t() - po.t());
  if (!in_fov(body, scene.config.fov_deg)) return false;
  if (!in_emitter_wedge(pt, po.t(), scene.config.emitter_wedge_deg)) return false;
  return line_of_sight_clear(scene, po.t(), pt.t());
}

}  // namespace swarmloc::sim
