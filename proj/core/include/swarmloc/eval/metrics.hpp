#pragma once

#include <vector>

#include <Eigen/Core>

#include "swarmloc/geom.hpp"

namespace swarmloc::eval {

/// Matching counts; an assignment lists, per prior slot, a detection index or -1.
struct PRF1 {
  long tp = 0;
  long fp = 0;
  long fn = 0;

  /// TP = predicted pair in gt, FP = predicted pair not in gt, FN = gt pair
  /// not predicted.
  void add(const std::vector<int>& predicted, const std::vector<int>& gt);
  PRF1& operator+=(const PRF1& o);

  /// 0 when nothing was predicted.
  double precision() const;
  double recall() const;
  /// 2PR / (P + R), or 0 when P + R = 0.
  double f1() const;
};

PRF1 match_prf1(const std::vector<std::vector<int>>& predicted, const std::vector<std::vector<int>>& gt);
double f1_score(double precision, double recall);

/// rel[i][j] = position of robot j in robot i's frame (diagonal unused).
using RelativePositions = std::vector<std::vector<Vec3>>;

RelativePositions relative_positions(const std::vector<Pose>& poses);

/// Squared-error accumulator over ordered pairs and frames.
class RpeAccumulator {
 public:
  explicit RpeAccumulator(int n_robots = 0);

  void add(const RelativePositions& estimate, const RelativePositions& gt);
  /// Single ordered pair (i observes j).
  void add_pair(int i, int j, const Vec3& estimate, const Vec3& gt);
  /// Restricts to pairs with i as the observer (per-node metrics).
  void add_row(int i, const RelativePositions& estimate, const RelativePositions& gt);

  int n_robots() const { return n_; }
  long count() const { return count_; }
  double rmse() const;
  /// Per-pair RMSE (heat-map data); zero on the diagonal and for unseen pairs.
  Eigen::MatrixXd pair_rmse() const;
  /// RMSE of everything added since the last call, then reset of that window.
  double take_window();

 private:
  int n_;
  double sum_ = 0.0;
  long count_ = 0;
  double window_sum_ = 0.0;
  long window_count_ = 0;
  Eigen::MatrixXd pair_sum_;
  Eigen::MatrixXi pair_count_;
};

}  // namespace swarmloc::eval
