#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "swarmloc/matchnet/network.hpp"
#include "swarmloc/pgo/graph.hpp"
#include "swarmloc/sim/frame.hpp"

namespace swarmloc::pgo {

using RangeTable = std::vector<std::vector<std::optional<double>>>;

RangeTable range_table(const sim::RangeMatrix& uwb);
/// Only the ranges measured by `robot`'s own radio.
RangeTable range_table_row(const sim::RangeMatrix& uwb, int robot);

/// Front-end outputs of one frame turned into a factor graph, with the
/// (observer, robot) pair behind each mutual and prior factor row.
struct FrameGraph {
  FactorGraph graph;
  std::vector<std::pair<int, int>> mutual_src;
  std::vector<std::pair<int, int>> prior_src;
};

/// `priors` are poses of every robot in the reference frame. results[o], when
/// present, is observer o's match result in slot order. The reference's
/// result supplies the prior translations (matched: head output and
/// covariance; otherwise prior and the unmatched variance); every other
/// observer contributes one mutual factor per refined match. Variables start at
/// the prior translations.
FrameGraph build_frame_graph(int reference, const std::vector<Pose>& priors,
                             const std::vector<const matchnet::MatchResult*>& results, const RangeTable& ranges,
                             double var_unmatched, const GraphDefaults& defaults = {});

}  // namespace swarmloc::pgo
