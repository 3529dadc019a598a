#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "swarmloc/ad/ops.hpp"
#include "swarmloc/geom.hpp"
#include "swarmloc/matchnet/assignment.hpp"
#include "swarmloc/matchnet/params.hpp"

namespace swarmloc::matchnet {

/// One observer's association problem, in the observer's body frame.
struct MatchInput {
  std::vector<Bearing> prior_bearings;
  std::vector<Vec3> prior_positions;
  std::vector<Bearing> det_bearings;
  /// Range to each prior's robot; absent entries force unmatched handling.
  std::vector<std::optional<double>> uwb_ranges;

  /// Derives prior bearings by normalizing the prior positions.
  static MatchInput from_priors(std::vector<Vec3> prior_positions, std::vector<Bearing> detections,
                                std::vector<std::optional<double>> ranges);
  int n() const { return static_cast<int>(prior_positions.size()); }
  int m() const { return static_cast<int>(det_bearings.size()); }
  void validate() const;
};

struct MatchResult {
  /// Per prior: matched detection index or -1.
  std::vector<int> assignment;
  std::vector<double> prob;
  std::vector<Vec3> position;
  /// Diagonal covariance, m^2.
  std::vector<Vec3> variance;
  /// Whether position/variance came from the heads (matched with a range).
  std::vector<bool> refined;
  /// Augmented assignment matrix, (n+1) x (m+1).
  Eigen::MatrixXd p_bar;

  int matched_count() const;
};

/// Differentiable outputs of one observer inside a batch.
struct ObserverOutput {
  /// log P, (n+1) x (m+1); invalid when the observer had no detections.
  ad::Var log_p;
  MatchResult result;
  /// Row of this prior in BatchOutput::pos/var, or -1 if it bypassed the heads.
  std::vector<int> head_row;
};

struct BatchOutput {
  std::vector<ObserverOutput> observers;
  /// Stacked head outputs (K x 3); invalid when no prior reached the heads.
  ad::Var pos;
  ad::Var var;
};

/// Shared encoder applied to unit bearings (count x 3 -> count x D).
ad::Var encode(const ParamVars& p, const ad::Var& bearings);

/// Per-observer row blocks of a stacked embedding matrix.
struct GnnBlock {
  std::size_t prior_begin = 0;
  std::size_t n = 0;
  std::size_t det_begin = 0;
  std::size_t m = 0;
};

/// L layers of self- then cross-attention with residual MLP updates over many
/// independent (prior set, detection set) pairs stacked in `x`.
ad::Var gnn_forward_stacked(const ParamVars& p, const MatchNetConfig& c, const ad::Var& x,
                            const std::vector<GnnBlock>& blocks);
/// Single observer convenience wrapper.
std::pair<ad::Var, ad::Var> gnn_forward(const ParamVars& p, const MatchNetConfig& c,
                                        const ad::Var& prior_emb, const ad::Var& det_emb);

/// Augmented score matrix: <fP_i, fD_j> / sqrt(D) with a dustbin row and
/// column filled with `z` (1x1).
ad::Var score(const ad::Var& f_prior, const ad::Var& f_det, const ad::Var& z);

/// Log-domain Sinkhorn to marginals (1.., m) on rows and (1.., n) on columns.
/// Returns log P.
ad::Var log_sinkhorn(const ad::Var& s_bar, int iters);
/// Non-differentiable convenience returning P.
Eigen::MatrixXd sinkhorn(const Eigen::MatrixXd& s_bar, int iters);

/// Head features of matched priors, one row each:
/// [d*b, prior_pos, score row, Var] with positions divided by pos_scale. The
/// score row holds the dustbin entry then the detection entries sorted
/// descending, zero-padded to M + 1; Var = 1 - P_ij.
struct HeadQuery {
  int prior = 0;
  int det = 0;
  double range = 0.0;
};
ad::Var build_features(const MatchNetConfig& c, const ad::Var& log_p, const MatchInput& in,
                       const std::vector<HeadQuery>& queries);

/// Position and diagonal covariance heads (K x F -> K x 3 each).
/// position = d*b + pos_scale * mlp(feat); variance = clamp(exp(mlp(feat))).
std::pair<ad::Var, ad::Var> predict(const ParamVars& p, const MatchNetConfig& c, const ad::Var& feat,
                                    const ad::Var& vr_pos);

/// Runs every observer of a frame through one batched GNN pass.
BatchOutput forward_batch(ad::Tape& tape, const ParamVars& p, const MatchNetConfig& c,
                          const std::vector<MatchInput>& inputs);

/// Inference without gradient tracking.
std::vector<MatchResult> forward(const NetworkParams& params, const std::vector<MatchInput>& inputs);
MatchResult forward(const NetworkParams& params, const MatchInput& input);

}  // namespace swarmloc::matchnet
