#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swarmloc/geom.hpp"

namespace swarmloc::runtime {

/// What a robot broadcasts: its PVO increment and its optimized relative poses.
struct MessagePayload {
  Pose pvo;
  /// poses[j]: robot j in the sender's frame (identity at the sender's index).
  std::vector<Pose> poses;
};

struct BusMessage {
  int sender = 0;
  int frame = 0;
  MessagePayload payload;

  /// Wire format: sender, frame, pvo, pose count, poses (little-endian int32 /
  /// float64, poses as w x y z tx ty tz).
  std::vector<std::uint8_t> encode() const;
  static BusMessage decode(const std::vector<std::uint8_t>& bytes);
  std::size_t byte_size() const;
  std::string to_json() const;
};

struct BusConfig {
  int latency = 0;  // frames
  double drop = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Lockstep message bus. A message sent at frame f is readable by every other
/// robot at frame f + latency unless dropped; each (message, receiver) drop is
/// an independent draw seeded by (seed, frame, sender, receiver).
class Bus {
 public:
  Bus(int n_robots, BusConfig config);

  void send(BusMessage m);
  /// Messages for `receiver` arriving at `frame`, ordered by (sender, frame).
  std::vector<BusMessage> deliver(int receiver, int frame) const;
  /// Forget messages that can no longer arrive at or after `frame`.
  void prune(int frame);

  long sent() const { return sent_; }
  const BusConfig& config() const { return config_; }

 private:
  bool dropped(const BusMessage& m, int receiver) const;

  int n_;
  BusConfig config_;
  std::vector<BusMessage> queue_;
  long sent_ = 0;
};

}  // namespace swarmloc::runtime
