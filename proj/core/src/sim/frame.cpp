#include "swarmloc/sim/frame.hpp"

#include <algorithm>
#include <cmath>

namespace swarmloc::sim {
namespace {

double gauss(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  return sigma * n(rng);
}

double uniform(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

Vec3 perturb_bearing(const Vec3& u, double sigma, std::mt19937_64& rng) {
  Vec3 r(gauss(rng, 1.0), gauss(rng, 1.0), gauss(rng, 1.0));
  const double angle = std::abs(gauss(rng, sigma));
  Vec3 axis = u.cross(r);
  if (axis.norm() < 1e-9) axis = u.unitOrthogonal();
  axis.normalize();
  return (exp_so3(axis * angle) * u).normalized();
}

Vec3 random_in_fov(double fov_deg, std::mt19937_64& rng) {
  const double cmin = std::cos(deg2rad(0.5 * std::min(fov_deg, 360.0)));
  const double c = cmin + (1.0 - cmin) * uniform(rng);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const double phi = 2.0 * std::numbers::pi * uniform(rng);
  return Vec3(c, s * std::cos(phi), s * std::sin(phi));
}

}  // namespace

std::mt19937_64 frame_rng(std::uint64_t seed, int frame) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(frame) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  z ^= z >> 31;
  return std::mt19937_64(z);
}

SwarmFrame sample_frame(const Scene& scene, int frame, std::mt19937_64& rng) {
  const SceneConfig& c = scene.config;
  const int n = c.n_robots;
  SwarmFrame out;
  out.t = scene.time(frame);
  out.gt.reserve(n);
  for (int r = 0; r < n; ++r) out.gt.push_back(scene.pose(r, frame));

  out.uwb = RangeMatrix(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool drop = uniform(rng) < c.uwb_dropout;
      const double d = (out.gt[i].t() - out.gt[j].t()).norm() + gauss(rng, c.uwb_sigma);
      if (!drop) out.uwb.set(i, j, d);
    }
  }

  out.det.resize(n);
  out.src.resize(n);
  const int cap = c.max_det();
  for (int o = 0; o < n; ++o) {
    std::vector<std::pair<Vec3, int>> list;
    for (int tgt = 0; tgt < n; ++tgt) {
      if (!visibility(scene, frame, o, tgt)) continue;
      Vec3 u = bearing_to(out.gt[o], out.gt[tgt].t()).u;
      if (c.bearing_sigma > 0.0) {
        // Redraw noise that would push an edge bearing out of the FOV cone.
        for (int tries = 0; tries < 16; ++tries) {
          const Vec3 noisy = perturb_bearing(u, c.bearing_sigma, rng);
          if (in_fov(noisy, c.fov_deg)) {
            u = noisy;
            break;
          }
        }
      }
      list.emplace_back(u, tgt);
    }
    if (uniform(rng) < c.fake_prob) list.emplace_back(random_in_fov(c.fov_deg, rng), kFakeSource);
    std::shuffle(list.begin(), list.end(), rng);
    if (static_cast<int>(list.size()) > cap) list.resize(cap);
    for (const auto& [u, s] : list) {
      out.det[o].push_back(Bearing{u});
      out.src[o].push_back(s);
    }
  }

  out.pvo.reserve(n);
  for (int r = 0; r < n; ++r) {
    if (frame == 0) {
      out.pvo.push_back(Pose::identity());
      continue;
    }
    const Pose delta = relative(scene.pose(r, frame - 1), scene.pose(r, frame));
    const double rs = deg2rad(c.pvo_r_sigma);
    const Vec3 dr(gauss(rng, rs), gauss(rng, rs), gauss(rng, rs));
    const Vec3 dt(gauss(rng, c.pvo_t_sigma), gauss(rng, c.pvo_t_sigma), gauss(rng, c.pvo_t_sigma));
    out.pvo.push_back(compose(delta, Pose(exp_so3(dr), dt)));
  }
  return out;
}

std::vector<SwarmFrame> sample_frames(const Scene& scene) {
  std::vector<SwarmFrame> frames;
  frames.reserve(scene.n_frames());
  for (int f = 0; f < scene.n_frames(); ++f) {
    auto rng = frame_rng(scene.config.seed, f);
    frames.push_back(sample_frame(scene, f, rng));
  }
  return frames;
}

std::vector<int> gt_matches(const SwarmFrame& frame, int observer) {
  std::vector<int> m(frame.n_robots(), -1);
  const auto& src = frame.src[observer];
  for (std::size_t j = 0; j < src.size(); ++j) {
    if (src[j] >= 0) m[src[j]] = static_cast<int>(j);
  }
  return m;
}

}  // namespace swarmloc::sim
