#pragma once

#include "swarmloc/matchnet/network.hpp"

namespace swarmloc::eval {

struct SimpleMatchConfig {
  double cos_threshold = 0.99;
  double sigma2_base = 0.04;  // m^2
  double kappa = 100.0;
  double var_unmatched = 4.0;
  /// false: every prior takes its nearest detection, even if another prior
  /// already took it.
  bool injective = true;

  void validate() const;
};

/// Nearest-bearing association. Injective mode assigns greedily by
/// descending cosine similarity. Matched pairs with a range get position d * b
/// and variance sigma2_base * (1 + kappa * (1 - cos)); prob holds the cosine.
matchnet::MatchResult simple_match(const matchnet::MatchInput& input, const SimpleMatchConfig& config);

}  // namespace swarmloc::eval
