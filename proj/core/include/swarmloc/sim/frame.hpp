#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "swarmloc/geom.hpp"
#include "swarmloc/sim/scene.hpp"

namespace swarmloc::sim {

/// Symmetric N x N range matrix with absent entries. The diagonal is never set.
class RangeMatrix {
 public:
  RangeMatrix() = default;
  explicit RangeMatrix(int n) : n_(n), values_(static_cast<std::size_t>(n) * n) {}

  int size() const { return n_; }
  std::optional<double> get(int i, int j) const { return values_[index(i, j)]; }
  /// Sets both (i, j) and (j, i).
  void set(int i, int j, std::optional<double> d) {
    values_[index(i, j)] = d;
    values_[index(j, i)] = d;
  }

  bool operator==(const RangeMatrix&) const = default;

 private:
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * n_ + j; }
  int n_ = 0;
  std::vector<std::optional<double>> values_;
};

inline constexpr int kFakeSource = -1;

struct SwarmFrame {
  double t = 0.0;
  std::vector<Pose> gt;
  /// Body-frame increments since the previous frame; identity at frame 0.
  std::vector<Pose> pvo;
  RangeMatrix uwb;
  /// detections[observer]: shuffled, identity-free bearing list.
  std::vector<std::vector<Bearing>> det;
  /// Simulator bookkeeping for supervision and scoring only: the robot that
  /// produced each detection, or kFakeSource. Never read by estimators.
  std::vector<std::vector<int>> src;

  int n_robots() const { return static_cast<int>(gt.size()); }
};

/// Per-frame RNG stream: seed mixed with the frame index.
std::mt19937_64 frame_rng(std::uint64_t seed, int frame);

SwarmFrame sample_frame(const Scene& scene, int frame, std::mt19937_64& rng);

/// All frames of the scene, each drawn from frame_rng(config.seed, f).
std::vector<SwarmFrame> sample_frames(const Scene& scene);

/// Ground-truth correspondence of one observer: gt_match[i] = detection index
/// originating from robot i, or -1.
std::vector<int> gt_matches(const SwarmFrame& frame, int observer);

}  // namespace swarmloc::sim
