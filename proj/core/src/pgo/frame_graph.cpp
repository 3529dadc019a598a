#include "swarmloc/pgo/frame_graph.hpp"

#include "swarmloc/error.hpp"
#include "swarmloc/matchnet/observer.hpp"

namespace swarmloc::pgo {

using matchnet::other_robot;
using matchnet::prior_slot;

RangeTable range_table(const sim::RangeMatrix& uwb) {
  const int n = uwb.size();
  RangeTable t(n, std::vector<std::optional<double>>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) t[i][j] = uwb.get(i, j);
    }
  }
  return t;
}

RangeTable range_table_row(const sim::RangeMatrix& uwb, int robot) {
  const int n = uwb.size();
  RangeTable t(n, std::vector<std::optional<double>>(n));
  for (int j = 0; j < n; ++j) {
    if (j == robot) continue;
    t[robot][j] = uwb.get(robot, j);
    t[j][robot] = t[robot][j];
  }
  return t;
}

FrameGraph build_frame_graph(int reference, const std::vector<Pose>& priors,
                             const std::vector<const matchnet::MatchResult*>& results, const RangeTable& ranges,
                             double var_unmatched, const GraphDefaults& defaults) {
  const int n = static_cast<int>(priors.size());
  if (static_cast<int>(results.size()) != n) throw ShapeError("build_frame_graph: one result slot per robot");
  FrameGraph out;
  out.graph = make_graph(reference, priors, ranges, defaults);
  FactorGraph& g = out.graph;

  const matchnet::MatchResult* ref = results[reference];
  for (PriorFactor& f : g.prior) {
    out.prior_src.emplace_back(reference, f.robot);
    if (!ref) {
      f.info_t = Vec3::Constant(1.0 / var_unmatched);
      continue;
    }
    const int s = prior_slot(reference, f.robot);
    f.prior = Pose(f.prior.q(), ref->position[s]);
    f.info_t = ref->variance[s].cwiseInverse();
    g.init[f.robot] = f.prior;
  }

  for (int i = 0; i < n; ++i) {
    if (i == reference || !results[i]) continue;
    const matchnet::MatchResult& r = *results[i];
    for (std::size_t s = 0; s < r.assignment.size(); ++s) {
      if (!r.refined[s]) continue;
      const int j = other_robot(i, static_cast<int>(s));
      g.mutual.push_back(MutualFactor{i, j, r.position[s], r.variance[s].cwiseInverse()});
      out.mutual_src.emplace_back(i, j);
    }
  }
  return out;
}

}  // namespace swarmloc::pgo
