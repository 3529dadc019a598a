#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "swarmloc/ad/gradcheck.hpp"
#include "swarmloc/error.hpp"
#include "swarmloc/format.hpp"
#include "swarmloc/matchnet/observer.hpp"
#include "swarmloc/train/trainer.hpp"
#include "gradcheck_suite.hpp"
#include "test_util.hpp"

using namespace swarmloc;
using namespace swarmloc::train;
using ad::Tape;
using ad::Tensor;
using ad::Var;

using test::pick_frame;
using test::randn;
using test::small_config;
using test::small_dataset;

TEST(LossMatch, PerfectScoresGiveZero) {
  Tape t;
  Tensor lp(3, 4, std::log(1e-3));
  lp(0, 1) = 0.0;
  lp(1, 3) = 0.0;  // dustbin
  const Var l = loss_match(t.constant(lp), {1, -1});
  EXPECT_NEAR(l.item(), 0.0, 1e-15);
}

TEST(LossMatch, UniformOverTwoIsCountTimesLog2) {
  Tape t;
  const Var l = loss_match(t.constant(Tensor(4, 5, std::log(0.5))), {0, -1, 2});
  EXPECT_NEAR(l.item(), 3.0 * std::log(2.0), 1e-12);
}

TEST(LossMatch, RejectsShapeMismatch) {
  Tape t;
  EXPECT_THROW(loss_match(t.constant(Tensor(3, 3)), {0}), ShapeError);
  EXPECT_THROW(loss_match(t.constant(Tensor(3, 3)), {0, 2}), ShapeError);
}

TEST(LossMl, Examples) {
  Tape t;
  const Tensor zero(1, 3, 0.0);
  EXPECT_NEAR(loss_ml(t.constant(zero), t.constant(Tensor(1, 3, 1.0)), zero, 1.0, 3).item(), 0.0, 1e-15);
  const Tensor e = Tensor::row({1.0, 0.0, 0.0});
  const double l = loss_ml(t.constant(zero), t.constant(Tensor(1, 3, 1.0)), e, 1.0, 3).item();
  EXPECT_NEAR(l, 1.0 / 12.0, 1e-15);
}

TEST(LossMl, IsotropicOptimumMatchesClosedForm) {
  const Tensor e = Tensor::row({0.3, -0.2, 0.5});
  const double sq = 0.09 + 0.04 + 0.25;
  for (double lambda : {0.5, 1.0, 2.0}) {
    // With S = s I the loss is 3 lambda log s + |e|^2 / s.
    const double best = sq / (3.0 * lambda);
    auto at = [&](double s) {
      Tape t;
      return loss_ml(t.constant(Tensor(1, 3, 0.0)), t.constant(Tensor(1, 3, s)), e, lambda, 2).item();
    };
    EXPECT_LT(at(best), at(best * 1.01));
    EXPECT_LT(at(best), at(best * 0.99));
  }
}

TEST(LossPose, Examples) {
  const std::vector<Pose> gt{Pose::identity(), Pose::from_translation(Vec3(2, 0, 0))};
  auto eval = [&](const Tensor& tt, const Tensor& qq) {
    Tape t;
    return loss_pose(t.constant(tt), t.constant(qq), gt, 0, 1.0).item();
  };
  Tensor tt(2, 3, 0.0);
  Tensor qq(2, 4, 0.0);
  qq(0, 0) = 1.0;
  qq(1, 0) = 1.0;
  tt(1, 0) = 2.0;
  EXPECT_NEAR(eval(tt, qq), 0.0, 1e-15);
  tt(1, 0) = 3.0;
  EXPECT_NEAR(eval(tt, qq), 1.0 / 6.0, 1e-15);
  tt(1, 0) = 2.0;
  qq(1, 0) = -1.0;  // same rotation
  EXPECT_NEAR(eval(tt, qq), 0.0, 1e-15);
  // The reference row never contributes.
  tt(0, 2) = 10.0;
  EXPECT_NEAR(eval(tt, qq), 0.0, 1e-15);
}

TEST(LossGradients, MatchMlPoseAgainstFiniteDifferences) {
  for (const test::CheckResult& r : test::loss_gradchecks(3)) EXPECT_TRUE(r.passed) << r.name << " " << r.max_rel_error;
}

TEST(LossWeights, RejectNegative) {
  LossWeights w;
  w.pose = -1.0;
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(AdamW, Examples) {
  ad::ParamMap p{{"w", Tensor::row({1.0, -2.0})}};
  AdamW plain({.lr = 0.1, .weight_decay = 0.0});
  plain.step(p, {{"w", Tensor(1, 2, 0.0)}});
  EXPECT_EQ(p.at("w")[0], 1.0);
  EXPECT_EQ(p.at("w")[1], -2.0);

  plain.step(p, {{"w", Tensor(1, 2, 0.0)}});
  AdamW fresh({.lr = 0.1, .weight_decay = 0.0});
  ad::ParamMap s{{"x", Tensor::scalar(3.0)}};
  fresh.step(s, {{"x", Tensor::scalar(1.0)}});
  EXPECT_NEAR(s.at("x").item(), 2.9, 1e-8);

  AdamW decay({.lr = 0.1, .weight_decay = 0.5});
  ad::ParamMap d{{"x", Tensor::scalar(2.0)}};
  decay.step(d, {});
  EXPECT_NEAR(d.at("x").item(), 2.0 * (1.0 - 0.05), 1e-15);
  EXPECT_EQ(decay.steps(), 1);
}

TEST(AdamW, RejectsBadConfig) {
  EXPECT_THROW(AdamW({.lr = -1.0}), ConfigError);
  EXPECT_THROW(AdamW({.lr = 1e-3, .weight_decay = 0.0, .beta1 = 1.0}), ConfigError);
}

TEST(Sample, PriorsAreNoisyPreviousGroundTruth) {
  const sim::Dataset d = small_dataset(3, 20, 4);
  std::mt19937_64 rng(1);
  const FrameSample zero = make_sample(d, 5, 0.0, rng);
  for (int o = 0; o < 3; ++o) {
    for (int j = 0; j < 3; ++j) {
      const Pose want = relative(d.frames[4].gt[o], d.frames[4].gt[j]);
      EXPECT_LT((zero.priors[o][j].t() - want.t()).norm(), 1e-12);
      EXPECT_LT(test::quat_distance(zero.priors[o][j].q(), want.q()), 1e-12);
    }
    EXPECT_EQ(zero.gt[o], matchnet::gt_assignment(d.frames[5], o));
  }
  EXPECT_THROW(make_sample(d, 0, 0.1, rng), Error);
}

TEST(Gradcheck, FullMatchnetMatchAndMl) {
  const auto report = test::matchnet_gradcheck(false);
  EXPECT_TRUE(report.passed) << report.worst()->tensor << "[" << report.worst()->index << "] analytic "
                             << report.worst()->analytic << " numeric " << report.worst()->numeric;
  EXPECT_GT(report.entries.size(), 50u);
}

TEST(Gradcheck, EndToEndThroughUnrolledPgo) {
  double pose = 0.0;
  const auto report = test::matchnet_gradcheck(true, &pose);
  EXPECT_GT(pose, 0.0);
  EXPECT_TRUE(report.passed) << report.worst()->tensor << "[" << report.worst()->index << "] analytic "
                             << report.worst()->analytic << " numeric " << report.worst()->numeric;
}

TEST(Train, OneEpochIsDeterministic) {
  const sim::Dataset d = small_dataset(3, 40, 8);
  TrainConfig tc;
  tc.epochs = 1;
  tc.pretrain_epochs = 1;
  tc.val_frames = 5;
  tc.batch_size = 4;
  const std::string path = test::tmp_path("determinism.ckpt");
  auto digest = [&](const matchnet::NetworkParams& p) {
    p.save(path);
    return file_digest(path);
  };
  auto run = [&] {
    auto p = matchnet::NetworkParams::init(small_config(d.config.max_det()), 9);
    train::train(p, d, nullptr, tc);
    return digest(p);
  };
  const std::string a = run();
  EXPECT_EQ(a, run());
  EXPECT_NE(a, digest(matchnet::NetworkParams::init(small_config(d.config.max_det()), 9)));
}

TEST(Train, CountsSkippedInstances) {
  sim::SceneConfig sc;
  sc.n_robots = 3;
  sc.n_frames = 30;
  sc.seed = 8;
  sc.uwb_dropout = 0.3;
  const sim::Dataset d = sim::generate_dataset(sc);
  TrainConfig tc;
  tc.epochs = 1;
  tc.pretrain_epochs = 1;
  tc.val_frames = 0;
  tc.val_fraction = 0.0;
  auto p = matchnet::NetworkParams::init(small_config(d.config.max_det()), 9);
  const TrainStats st = train::train(p, d, nullptr, tc);
  long used = 0;
  long skipped = 0;
  long empty_frames = 0;
  for (int f = 1; f < d.n_frames(); ++f) {
    int here = 0;
    for (int o = 0; o < 3; ++o) {
      bool range = false;
      for (int j = 0; j < 3; ++j) range = range || (j != o && d.frames[f].uwb.get(o, j).has_value());
      if (!d.frames[f].det[o].empty() && range) {
        ++used;
        ++here;
      } else {
        ++skipped;
      }
    }
    if (here == 0) ++empty_frames;
  }
  EXPECT_EQ(st.instances_used, used);
  EXPECT_EQ(st.instances_skipped, skipped);
  EXPECT_EQ(st.frames_skipped, empty_frames);
  EXPECT_EQ(st.history.size(), 1u);
}

TEST(Train, RejectsOversizedDataset) {
  const sim::Dataset d = small_dataset(4, 10, 1);
  auto p = matchnet::NetworkParams::init(small_config(4), 1);
  TrainConfig tc;
  tc.epochs = 1;
  tc.pretrain_epochs = 1;
  EXPECT_THROW(train::train(p, d, nullptr, tc), ShapeError);
}

TEST(Train, ConfigValidation) {
  TrainConfig tc;
  tc.pretrain_epochs = 51;
  tc.epochs = 60;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = {};
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
}

// Pretraining on zero-noise data: precise matches and small head errors.
TEST(Train, ZeroNoisePretrainingIsAccurate) {
  const sim::Dataset d = small_dataset(4, 250, 3, true);
  const sim::Dataset v = small_dataset(4, 60, 4, true);
  matchnet::MatchNetConfig mc;
  mc.dim = 32;
  mc.layers = 2;
  mc.max_det = d.config.max_det();
  auto p = matchnet::NetworkParams::init(mc, 1);
  TrainConfig tc;
  tc.epochs = 3;
  tc.pretrain_epochs = 3;
  tc.optim.lr = 1e-3;
  tc.val_frames = 50;
  const TrainStats st = train::train(p, d, &v, tc);
  ASSERT_EQ(st.history.size(), 3u);
  EXPECT_GE(st.history.back().val_precision, 0.99);
  EXPECT_LT(st.history.back().loss_match, st.history.front().loss_match);

  std::vector<double> err;
  std::mt19937_64 rng(5);
  for (int f = 1; f < v.n_frames(); ++f) {
    const FrameSample s = make_sample(v, f, 0.0, rng);
    const auto res = matchnet::forward(p, s.inputs);
    for (int o = 0; o < 4; ++o) {
      for (std::size_t k = 0; k < res[o].refined.size(); ++k) {
        if (!res[o].refined[k]) continue;
        const int j = matchnet::other_robot(o, static_cast<int>(k));
        err.push_back((res[o].position[k] - relative(v.frames[f].gt[o], v.frames[f].gt[j]).t()).norm());
      }
    }
  }
  ASSERT_FALSE(err.empty());
  std::nth_element(err.begin(), err.begin() + err.size() / 2, err.end());
  EXPECT_LT(err[err.size() / 2], 0.05);
}
