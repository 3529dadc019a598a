#pragma once

#include <vector>

#include "swarmloc/ad/ops.hpp"
#include "swarmloc/geom.hpp"

namespace swarmloc::train {

struct LossWeights {
  double ml = 1.0;     // ML loss weight
  double pose = 10.0;  // pose loss weight
  double det = 1.0;    // log-det weight inside the ML loss
  double quat = 1.0;   // quaternion weight inside the pose loss

  void validate() const;
};

/// -sum log P over gt pairs and over dustbin entries of unobserved priors.
/// gt[i] is the detection index of prior row i, or -1.
ad::Var loss_match(const ad::Var& log_p, const std::vector<int>& gt);

/// Gaussian NLL of head outputs, each row one observed pair:
/// sum (lambda_det * log det S + e^T S^-1 e) / ((n_robots + 1) n_robots).
ad::Var loss_ml(const ad::Var& pos, const ad::Var& var, const ad::Tensor& gt, double lambda_det, int n_robots);

/// Pose loss of one reference's solve: t (N x 3) and q (N x 4, w x y z) per
/// robot, reference row excluded, gt quaternion sign aligned to the estimate:
/// sum (|t - t_gt|^2 + lambda_q |q - q_gt|^2) / ((n_robots + 1) n_robots).
ad::Var loss_pose(const ad::Var& t, const ad::Var& q, const std::vector<Pose>& gt, int reference,
                  double lambda_q);

}  // namespace swarmloc::train
