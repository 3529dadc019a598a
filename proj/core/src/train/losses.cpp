#include "swarmloc/train/losses.hpp"

#include "swarmloc/error.hpp"

namespace swarmloc::train {

void LossWeights::validate() const {
  for (double w : {ml, pose, det, quat}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

ad::Var loss_match(const ad::Var& log_p, const std::vector<int>& gt) {
  const std::size_t rows = log_p.rows();
  const std::size_t cols = log_p.cols();
  if (gt.size() + 1 != rows) throw ShapeError("loss_match: one gt entry per prior row");
  std::vector<long> idx;
  idx.reserve(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] >= static_cast<int>(cols) - 1) throw ShapeError("loss_match: gt detection out of range");
    const std::size_t j = gt[i] >= 0 ? static_cast<std::size_t>(gt[i]) : cols - 1;
    idx.push_back(static_cast<long>(i * cols + j));
  }
  return ad::neg(ad::sum(ad::take(log_p, idx, idx.size(), 1)));
}

ad::Var loss_ml(const ad::Var& pos, const ad::Var& var, const ad::Tensor& gt, double lambda_det, int n_robots) {
  if (pos.rows() != gt.rows() || pos.cols() != 3 || gt.cols() != 3 || var.rows() != pos.rows()) {
    throw ShapeError("loss_ml: pos, var and gt must be K x 3");
  }
  if (n_robots < 2) throw ShapeError("loss_ml: needs at least two robots");
  ad::Tape& t = *pos.tape();
  const ad::Var e = ad::sub(t.constant(gt), pos);
  const ad::Var terms = ad::add(ad::scale(ad::log(var), lambda_det), ad::div(ad::square(e), var));
  return ad::scale(ad::sum(terms), 1.0 / (static_cast<double>(n_robots) * (n_robots + 1)));
}

ad::Var loss_pose(const ad::Var& t, const ad::Var& q, const std::vector<Pose>& gt, int reference, double lambda_q) {
  const std::size_t n = gt.size();
  if (t.rows() != n || q.rows() != n || t.cols() != 3 || q.cols() != 4) {
    throw ShapeError("loss_pose: t must be N x 3 and q N x 4");
  }
  if (n < 2) throw ShapeError("loss_pose: needs at least two robots");
  ad::Tape& tape = *t.tape();
  std::vector<long> trows;
  std::vector<long> qrows;
  ad::Tensor gt_t(n - 1, 3);
  ad::Tensor gt_q(n - 1, 4);
  std::size_t r = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(i) == reference) continue;
    for (int k = 0; k < 3; ++k) {
      trows.push_back(static_cast<long>(i * 3 + k));
      gt_t(r, k) = gt[i].t()[k];
    }
    const Quat& g = gt[i].q();
    const double c[4] = {g.w(), g.x(), g.y(), g.z()};
    double dot = 0.0;
    for (int k = 0; k < 4; ++k) dot += c[k] * q.value()(i, k);
    const double sign = dot < 0.0 ? -1.0 : 1.0;
    for (int k = 0; k < 4; ++k) {
      qrows.push_back(static_cast<long>(i * 4 + k));
      gt_q(r, k) = sign * c[k];
    }
    ++r;
  }
  const ad::Var et = ad::sub(ad::take(t, trows, n - 1, 3), tape.constant(std::move(gt_t)));
  const ad::Var eq = ad::sub(ad::take(q, qrows, n - 1, 4), tape.constant(std::move(gt_q)));
  const ad::Var sq = ad::add(ad::sum(ad::square(et)), ad::scale(ad::sum(ad::square(eq)), lambda_q));
  return ad::scale(sq, 1.0 / (static_cast<double>(n) * (n + 1)));
}

}  // namespace swarmloc::train
