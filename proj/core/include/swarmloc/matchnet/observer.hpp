#pragma once

#include <optional>
#include <vector>

#include "swarmloc/matchnet/network.hpp"
#include "swarmloc/sim/frame.hpp"

namespace swarmloc::matchnet {

/// Observer-side prior slots skip the observer itself: slot p of observer o
/// holds robot other_robot(o, p).
inline int other_robot(int observer, int slot) { return slot < observer ? slot : slot + 1; }
inline int prior_slot(int observer, int robot) { return robot < observer ? robot : robot - 1; }

/// Range row of one robot as seen by its own UWB radio.
std::vector<std::optional<double>> uwb_row(const sim::RangeMatrix& uwb, int robot);

/// Match input of `observer`: priors are relative poses of every robot in the
/// observer's frame (the observer's own entry is ignored), detections and
/// `ranges` (indexed by robot) are the observer's own sensors.
MatchInput observer_input(int observer, const std::vector<Pose>& priors, const std::vector<Bearing>& detections,
                          const std::vector<std::optional<double>>& ranges);

/// Ground-truth assignment in slot order: detection index or -1.
std::vector<int> gt_assignment(const sim::SwarmFrame& frame, int observer);

}  // namespace swarmloc::matchnet
