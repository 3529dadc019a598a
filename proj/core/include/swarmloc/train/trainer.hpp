#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "swarmloc/eval/metrics.hpp"
#include "swarmloc/matchnet/network.hpp"
#include "swarmloc/pgo/solver.hpp"
#include "swarmloc/sim/dataset.hpp"
#include "swarmloc/train/adamw.hpp"
#include "swarmloc/train/losses.hpp"

namespace swarmloc::train {

struct TrainConfig {
  AdamWConfig optim;
  /// Total epochs; the first pretrain_epochs use match + ML losses only.
  int epochs = 20;
  int pretrain_epochs = 10;
  int batch_size = 8;
  /// Per-axis noise on the previous-frame ground truth used as priors, m.
  double prior_sigma = 0.1;
  /// Per-axis std of a rotation shared by all priors of one observer, rad.
  /// Mimics heading drift of propagated priors; 0 disables it.
  double prior_rot_sigma = 0.0;
  std::uint64_t seed = 1;
  LossWeights weights;
  pgo::LMSettings lm;
  pgo::GraphDefaults graph;
  /// Also write epoch_<k>.ckpt every k epochs (0: only best and final).
  int checkpoint_every = 0;
  /// Validation frames per epoch, spread evenly over the validation set.
  int val_frames = 200;
  /// Held-out tail of the training set when no validation set is given.
  double val_fraction = 0.1;
  /// Cap on training frames per epoch (0: all).
  int max_train_frames = 0;
  /// Checkpoints and metrics.csv go here; empty disables file output.
  std::string out_dir;

  void validate() const;
};

/// One training frame: priors of every observer and its match problem.
struct FrameSample {
  int frame = 0;
  /// priors[o][j]: pose of robot j in observer o's frame (identity for j = o).
  std::vector<std::vector<Pose>> priors;
  std::vector<matchnet::MatchInput> inputs;
  std::vector<std::vector<int>> gt;
  /// Observers contributing to the losses: at least one detection and one range.
  std::vector<bool> used;

  int used_count() const;
};

/// Priors are the ground truth of frame - 1 with N(0, prior_sigma) added to
/// every translation axis, after rotating each observer's priors by a random
/// rotation of per-axis std `prior_rot_sigma`. Requires frame >= 1.
FrameSample make_sample(const sim::Dataset& data, int frame, double prior_sigma, std::mt19937_64& rng,
                        double prior_rot_sigma = 0.0);

struct FrameLoss {
  ad::Var total;
  double match = 0.0;
  double ml = 0.0;
  double pose = 0.0;
};

/// Loss of one frame on `tape`: match + w.ml * ML (+ w.pose * pose through an
/// unrolled solve per reference robot when `with_pose`).
FrameLoss frame_loss(ad::Tape& tape, const matchnet::ParamVars& p, const matchnet::MatchNetConfig& c,
                     const sim::SwarmFrame& frame, const FrameSample& sample, const TrainConfig& config,
                     bool with_pose);

struct EpochMetrics {
  int epoch = 0;
  std::string phase;
  double loss_match = 0.0;
  double loss_ml = 0.0;
  double loss_pose = 0.0;
  double total = 0.0;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double val_f1 = 0.0;
  double val_rpe = 0.0;
};

struct TrainStats {
  long instances_used = 0;
  long instances_skipped = 0;
  long frames_skipped = 0;
  long steps = 0;
  std::vector<EpochMetrics> history;
  int best_epoch = -1;
};

struct Validation {
  eval::PRF1 matching;
  /// Single-frame learned+pgo RPE with training-style priors.
  double rpe = 0.0;
};

Validation validate_frames(const matchnet::NetworkParams& params, const sim::Dataset& data,
                           const std::vector<int>& frames, const TrainConfig& config);

/// Trains `params` in place. Throws before the first step when the dataset
/// does not fit the network (detections beyond max_det, < 2 frames).
/// `log`, if given, receives one line per epoch.
TrainStats train(matchnet::NetworkParams& params, const sim::Dataset& train_set, const sim::Dataset* val_set,
                 const TrainConfig& config, std::ostream* log = nullptr);

inline constexpr const char* kMetricsHeader =
    "epoch,phase,loss_match,loss_ml,loss_pose,total,val_precision,val_recall,val_f1,val_rpe";

}  // namespace swarmloc::train
