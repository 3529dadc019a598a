#include "swarmloc/matchnet/assignment.hpp"

#include "swarmloc/error.hpp"

namespace swarmloc::matchnet {

Matches extract_matches(const Eigen::MatrixXd& p_bar, double threshold) {
  if (p_bar.rows() < 1 || p_bar.cols() < 1) throw ShapeError("extract_matches: empty matrix");
  const int n = static_cast<int>(p_bar.rows()) - 1;
  const int m = static_cast<int>(p_bar.cols()) - 1;
  Matches out;
  out.assignment.assign(n, -1);
  out.prob.assign(n, 0.0);
  if (n == 0 || m == 0) return out;
  // First maximal index wins, so ties resolve to the lowest index.
  std::vector<int> row_best(n), col_best(m);
  for (int i = 0; i < n; ++i) {
    int b = 0;
    for (int j = 1; j < m; ++j) {
      if (p_bar(i, j) > p_bar(i, b)) b = j;
    }
    row_best[i] = b;
  }
  for (int j = 0; j < m; ++j) {
    int b = 0;
    for (int i = 1; i < n; ++i) {
      if (p_bar(i, j) > p_bar(b, j)) b = i;
    }
    col_best[j] = b;
  }
  for (int i = 0; i < n; ++i) {
    const int j = row_best[i];
    if (col_best[j] == i && p_bar(i, j) >= threshold) {
      out.assignment[i] = j;
      out.prob[i] = p_bar(i, j);
    }
  }
  return out;
}

Eigen::VectorXd row_marginals(int n, int m) {
  Eigen::VectorXd r = Eigen::VectorXd::Ones(n + 1);
  r[n] = m;
  return r;
}

Eigen::VectorXd col_marginals(int n, int m) {
  Eigen::VectorXd c = Eigen::VectorXd::Ones(m + 1);
  c[m] = n;
  return c;
}

}  // namespace swarmloc::matchnet
