#include "swarmloc/eval/metrics.hpp"

#include <cmath>

#include "swarmloc/error.hpp"

namespace swarmloc::eval {

void PRF1::add(const std::vector<int>& predicted, const std::vector<int>& gt) {
  if (predicted.size() != gt.size()) throw ShapeError("match_prf1: assignment sizes differ");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (predicted[i] >= 0) {
      if (predicted[i] == gt[i]) ++tp;
      else ++fp;
    }
    if (gt[i] >= 0 && predicted[i] != gt[i]) ++fn;
  }
}

PRF1& PRF1::operator+=(const PRF1& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

double PRF1::precision() const { return tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0; }
double PRF1::recall() const { return tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0; }
double PRF1::f1() const { return f1_score(precision(), recall()); }

double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

PRF1 match_prf1(const std::vector<std::vector<int>>& predicted, const std::vector<std::vector<int>>& gt) {
  if (predicted.size() != gt.size()) throw ShapeError("match_prf1: frame counts differ");
  PRF1 s;
  for (std::size_t f = 0; f < gt.size(); ++f) s.add(predicted[f], gt[f]);
  return s;
}

RelativePositions relative_positions(const std::vector<Pose>& poses) {
  const std::size_t n = poses.size();
  RelativePositions rel(n, std::vector<Vec3>(n, Vec3::Zero()));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) rel[i][j] = poses[i].q().conjugate() * (poses[j].t() - poses[i].t());
    }
  }
  return rel;
}

RpeAccumulator::RpeAccumulator(int n_robots)
    : n_(n_robots), pair_sum_(Eigen::MatrixXd::Zero(n_robots, n_robots)),
      pair_count_(Eigen::MatrixXi::Zero(n_robots, n_robots)) {}

void RpeAccumulator::add_pair(int i, int j, const Vec3& estimate, const Vec3& gt) {
  const double e2 = (estimate - gt).squaredNorm();
  sum_ += e2;
  window_sum_ += e2;
  ++count_;
  ++window_count_;
  pair_sum_(i, j) += e2;
  ++pair_count_(i, j);
}

void RpeAccumulator::add_row(int i, const RelativePositions& estimate, const RelativePositions& gt) {
  if (static_cast<int>(estimate.size()) != n_ || static_cast<int>(gt.size()) != n_) {
    throw ShapeError("rpe: estimate and gt must cover every robot");
  }
  for (int j = 0; j < n_; ++j) {
    if (j != i) add_pair(i, j, estimate[i][j], gt[i][j]);
  }
}

void RpeAccumulator::add(const RelativePositions& estimate, const RelativePositions& gt) {
  for (int i = 0; i < n_; ++i) add_row(i, estimate, gt);
}

double RpeAccumulator::rmse() const { return count_ > 0 ? std::sqrt(sum_ / count_) : 0.0; }

Eigen::MatrixXd RpeAccumulator::pair_rmse() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      if (pair_count_(i, j) > 0) m(i, j) = std::sqrt(pair_sum_(i, j) / pair_count_(i, j));
    }
  }
  return m;
}

double RpeAccumulator::take_window() {
  const double r = window_count_ > 0 ? std::sqrt(window_sum_ / window_count_) : 0.0;
  window_sum_ = 0.0;
  window_count_ = 0;
  return r;
}

}  // namespace swarmloc::eval
