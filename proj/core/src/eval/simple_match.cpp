#include "swarmloc/eval/simple_match.hpp"

#include <algorithm>
#include <tuple>

#include "swarmloc/error.hpp"

namespace swarmloc::eval {

void SimpleMatchConfig::validate() const {
  if (!(cos_threshold >= -1.0 && cos_threshold <= 1.0)) throw ConfigError("simple match: cos_threshold in [-1, 1]");
  if (!(sigma2_base > 0.0) || !(kappa >= 0.0) || !(var_unmatched > 0.0)) {
    throw ConfigError("simple match: sigma2_base and var_unmatched must be positive, kappa >= 0");
  }
}

matchnet::MatchResult simple_match(const matchnet::MatchInput& in, const SimpleMatchConfig& c) {
  in.validate();
  c.validate();
  const int n = in.n();
  const int m = in.m();
  matchnet::MatchResult r;
  r.assignment.assign(n, -1);
  r.prob.assign(n, 0.0);
  r.position = in.prior_positions;
  r.variance.assign(n, Vec3::Constant(c.var_unmatched));
  r.refined.assign(n, false);
  r.p_bar = Eigen::MatrixXd::Zero(n + 1, m + 1);

  std::vector<std::tuple<double, int, int>> pairs;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double cs = in.prior_bearings[i].u.dot(in.det_bearings[j].u);
      if (cs >= c.cos_threshold) pairs.emplace_back(cs, i, j);
    }
  }
  // Descending cosine, then lowest indices.
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  std::vector<bool> taken(m, false);
  for (const auto& [cs, i, j] : pairs) {
    if (r.assignment[i] >= 0 || (c.injective && taken[j])) continue;
    r.assignment[i] = j;
    r.prob[i] = cs;
    taken[j] = true;
    r.p_bar(i, j) = 1.0;
    if (!in.uwb_ranges[i]) continue;
    r.position[i] = *in.uwb_ranges[i] * in.det_bearings[j].u;
    r.variance[i] = Vec3::Constant(c.sigma2_base * (1.0 + c.kappa * (1.0 - cs)));
    r.refined[i] = true;
  }
  return r;
}

}  // namespace swarmloc::eval
