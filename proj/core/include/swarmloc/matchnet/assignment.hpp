#pragma once

#include <vector>

#include <Eigen/Core>

namespace swarmloc::matchnet {

struct Matches {
  /// Per prior row: matched detection column or -1.
  std::vector<int> assignment;
  /// P_ij of each accepted pair, 0 for unmatched rows.
  std::vector<double> prob;
};

/// Mutual-argmax extraction over the non-dustbin block of an augmented
/// assignment matrix (last row and column are dustbins). Ties go to the lowest
/// index.
Matches extract_matches(const Eigen::MatrixXd& p_bar, double threshold);

/// Prescribed marginals of an (n+1) x (m+1) augmented matrix.
Eigen::VectorXd row_marginals(int n, int m);
Eigen::VectorXd col_marginals(int n, int m);

}  // namespace swarmloc::matchnet
