#include "swarmloc/pgo/graph.hpp"

#include <cmath>

#include "swarmloc/error.hpp"
#include "swarmloc/format.hpp"

namespace swarmloc::pgo {
namespace {

bool positive_finite(double v) { return v > 0.0 && std::isfinite(v); }
bool positive_finite(const Vec3& v) { return positive_finite(v.x()) && positive_finite(v.y()) && positive_finite(v.z()); }

std::string vec_json(const Vec3& v) {
  return "[" + format_double(v.x()) + "," + format_double(v.y()) + "," + format_double(v.z()) + "]";
}

std::string pose_json(const Pose& p) {
  return "{\"q\":[" + format_double(p.q().w()) + "," + format_double(p.q().x()) + "," +
         format_double(p.q().y()) + "," + format_double(p.q().z()) + "],\"t\":" + vec_json(p.t()) + "}";
}

}  // namespace

int FactorGraph::var_index(int robot) const {
  if (robot == reference) return -1;
  return robot < reference ? robot : robot - 1;
}

void FactorGraph::validate() const {
  if (n_robots < 2) throw Error("factor graph: at least two robots are required");
  if (reference < 0 || reference >= n_robots) throw Error("factor graph: reference out of range");
  if (static_cast<int>(init.size()) != n_robots) throw Error("factor graph: one initial pose per robot");
  if (init[reference].t().norm() > 1e-12 || std::abs(init[reference].q().w() - 1.0) > 1e-12) {
    throw Error("factor graph: reference pose must be identity");
  }
  if (n_factors() == 0) throw Error("factor graph: empty graph");
  auto check_id = [&](int r) {
    if (r < 0 || r >= n_robots) throw Error("factor graph: factor references unknown robot " + std::to_string(r));
  };
  for (const auto& f : mutual) {
    check_id(f.i);
    check_id(f.j);
    if (f.i == f.j) throw Error("factor graph: mutual factor with i == j");
    if (!positive_finite(f.info) || !f.measured.allFinite()) throw Error("factor graph: bad mutual factor");
  }
  for (const auto& f : prior) {
    check_id(f.robot);
    if (!positive_finite(f.info_t) || !positive_finite(f.info_r) || !f.prior.t().allFinite()) {
      throw Error("factor graph: bad prior factor");
    }
  }
  for (const auto& f : range) {
    check_id(f.i);
    check_id(f.j);
    if (f.i == f.j) throw Error("factor graph: range factor with i == j");
    if (!positive_finite(f.info) || !std::isfinite(f.distance)) throw Error("factor graph: bad range factor");
  }
}

FactorGraph make_graph(int reference, const std::vector<Pose>& priors,
                       const std::vector<std::vector<std::optional<double>>>& ranges,
                       const GraphDefaults& defaults) {
  FactorGraph g;
  g.n_robots = static_cast<int>(priors.size());
  g.reference = reference;
  g.init = priors;
  g.init[reference] = Pose::identity();
  const double info_r = 1.0 / (defaults.sigma_rot * defaults.sigma_rot);
  for (int r = 0; r < g.n_robots; ++r) {
    if (r == reference) continue;
    g.prior.push_back(PriorFactor{r, priors[r], Vec3::Constant(1.0 / defaults.prior_var_t),
                                  Vec3::Constant(info_r)});
  }
  const double info_d = 1.0 / (defaults.sigma_range * defaults.sigma_range);
  for (int i = 0; i < g.n_robots; ++i) {
    for (int j = i + 1; j < g.n_robots; ++j) {
      if (i < static_cast<int>(ranges.size()) && j < static_cast<int>(ranges[i].size()) && ranges[i][j]) {
        g.range.push_back(RangeFactor{i, j, *ranges[i][j], info_d});
      }
    }
  }
  return g;
}

MutualResidual residual_mutual(const std::vector<Pose>& poses, const MutualFactor& f) {
  const Pose& pi = poses[f.i];
  const Vec3 e = f.measured - pi.q().conjugate() * (poses[f.j].t() - pi.t());
  return {e, e.dot(f.info.cwiseProduct(e))};
}

PriorResidual residual_prior(const std::vector<Pose>& poses, const PriorFactor& f) {
  const Pose& p = poses[f.robot];
  PriorResidual r;
  r.e.head<3>() = f.prior.t() - p.t();
  r.e.tail<3>() = log_so3(f.prior.q().conjugate() * p.q());
  r.cost = r.e.head<3>().dot(f.info_t.cwiseProduct(r.e.head<3>())) +
           r.e.tail<3>().dot(f.info_r.cwiseProduct(r.e.tail<3>()));
  return r;
}

RangeResidual residual_range(const std::vector<Pose>& poses, const RangeFactor& f) {
  const double e = f.distance - (poses[f.i].t() - poses[f.j].t()).norm();
  return {e, f.info * e * e};
}

double total_cost(const FactorGraph& g, const std::vector<Pose>& poses) {
  double c = 0.0;
  for (const auto& f : g.mutual) c += residual_mutual(poses, f).cost;
  for (const auto& f : g.prior) c += residual_prior(poses, f).cost;
  for (const auto& f : g.range) c += residual_range(poses, f).cost;
  return c;
}

std::string graph_to_json(const FactorGraph& g, const std::vector<double>& cost_trace) {
  std::string s = "{\"n_robots\":" + std::to_string(g.n_robots) + ",\"reference\":" + std::to_string(g.reference);
  s += ",\"variables\":[";
  for (int r = 0; r < g.n_robots; ++r) {
    if (r) s += ",";
    s += "{\"robot\":" + std::to_string(r) + ",\"init\":" + pose_json(g.init[r]) + "}";
  }
  s += "],\"factors\":[";
  bool first = true;
  auto sep = [&]() {
    if (!first) s += ",";
    first = false;
  };
  for (const auto& f : g.mutual) {
    sep();
    s += "{\"kind\":\"mutual\",\"ids\":[" + std::to_string(f.i) + "," + std::to_string(f.j) +
         "],\"measurement\":" + vec_json(f.measured) + ",\"info\":" + vec_json(f.info) + "}";
  }
  for (const auto& f : g.prior) {
    sep();
    s += "{\"kind\":\"prior\",\"ids\":[" + std::to_string(f.robot) + "],\"measurement\":" + pose_json(f.prior) +
         ",\"info\":[" + vec_json(f.info_t) + "," + vec_json(f.info_r) + "]}";
  }
  for (const auto& f : g.range) {
    sep();
    s += "{\"kind\":\"range\",\"ids\":[" + std::to_string(f.i) + "," + std::to_string(f.j) +
         "],\"measurement\":" + format_double(f.distance) + ",\"info\":" + format_double(f.info) + "}";
  }
  s += "],\"cost\":[";
  for (std::size_t k = 0; k < cost_trace.size(); ++k) {
    if (k) s += ",";
    s += format_double(cost_trace[k]);
  }
  s += "]}";
  return s;
}

}  // namespace swarmloc::pgo
