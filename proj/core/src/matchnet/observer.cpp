#include "swarmloc/matchnet/observer.hpp"

#include "swarmloc/error.hpp"

namespace swarmloc::matchnet {

std::vector<std::optional<double>> uwb_row(const sim::RangeMatrix& uwb, int robot) {
  std::vector<std::optional<double>> row(uwb.size());
  for (int j = 0; j < uwb.size(); ++j) {
    if (j != robot) row[j] = uwb.get(robot, j);
  }
  return row;
}

MatchInput observer_input(int observer, const std::vector<Pose>& priors, const std::vector<Bearing>& detections,
                          const std::vector<std::optional<double>>& ranges) {
  const int n = static_cast<int>(priors.size());
  if (n < 2 || observer < 0 || observer >= n) throw ShapeError("observer_input: bad observer or prior count");
  if (static_cast<int>(ranges.size()) != n) throw ShapeError("observer_input: one range entry per robot");
  MatchInput in;
  in.det_bearings = detections;
  for (int p = 0; p < n - 1; ++p) {
    const int j = other_robot(observer, p);
    Vec3 t = priors[j].t();
    // A prior sitting on the observer has no bearing; nudge it forward.
    if (t.norm() < 1e-9) t = Vec3(1e-3, 0.0, 0.0);
    in.prior_positions.push_back(t);
    in.prior_bearings.push_back(Bearing::from_vector(t));
    in.uwb_ranges.push_back(ranges[j]);
  }
  in.validate();
  return in;
}

std::vector<int> gt_assignment(const sim::SwarmFrame& frame, int observer) {
  const std::vector<int> by_robot = sim::gt_matches(frame, observer);
  std::vector<int> slots(frame.n_robots() - 1, -1);
  for (int j = 0; j < frame.n_robots(); ++j) {
    if (j != observer) slots[prior_slot(observer, j)] = by_robot[j];
  }
  return slots;
}

}  // namespace swarmloc::matchnet
