#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

#include "swarmloc/error.hpp"
#include "swarmloc/matchnet/network.hpp"
#include "test_util.hpp"

using namespace swarmloc;
using namespace swarmloc::matchnet;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

MatchNetConfig small_config() {
  MatchNetConfig c;
  c.dim = 16;
  c.layers = 2;
  c.head_hidden = 16;
  c.max_det = 8;
  return c;
}

Bearing random_bearing(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Bearing::from_vector(Vec3(n(rng), n(rng), n(rng)));
}

Tensor rows_of(const std::vector<Bearing>& b) {
  Tensor t(b.size(), 3);
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (int k = 0; k < 3; ++k) t(i, k) = b[i].u[k];
  }
  return t;
}

Tensor randn(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(r, c);
  for (double& v : t.data()) v = n(rng);
  return t;
}

MatchInput random_input(std::mt19937_64& rng, int n, int m) {
  std::normal_distribution<double> g(0.0, 3.0);
  std::vector<Vec3> priors;
  for (int i = 0; i < n; ++i) priors.emplace_back(g(rng) + 4.0, g(rng), g(rng));
  std::vector<Bearing> dets;
  for (int j = 0; j < m; ++j) {
    // Detections near the priors so matches occur.
    const Vec3 p = j < n ? priors[j] + Vec3(0.05 * g(rng), 0.05 * g(rng), 0.05 * g(rng)) : Vec3(g(rng), g(rng), g(rng));
    dets.push_back(Bearing::from_vector(p));
  }
  std::vector<std::optional<double>> ranges;
  for (int i = 0; i < n; ++i) ranges.push_back(priors[i].norm());
  return MatchInput::from_priors(priors, dets, ranges);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void zero_tensor(NetworkParams& p, const std::string& name) {
  for (double& v : p.tensors.at(name).data()) v = 0.0;
}

}  // namespace

TEST(Encode, IdenticalBearingsGiveIdenticalEmbeddings) {
  const auto params = NetworkParams::init(small_config(), 3);
  Tape t(false);
  const auto p = bind(t, params);
  const Bearing b = Bearing::from_vector(Vec3(1, 2, 3));
  const Var e = encode(p, t.constant(rows_of({b, b})));
  for (std::size_t k = 0; k < e.cols(); ++k) EXPECT_EQ(e.value()(0, k), e.value()(1, k));
}

TEST(Encode, ZeroFinalLayerMakesAllEmbeddingsEqual) {
  auto params = NetworkParams::init(small_config(), 3);
  zero_tensor(params, "enc.w1");
  Tape t(false);
  const auto p = bind(t, params);
  std::mt19937_64 rng(1);
  const Var e = encode(p, t.constant(rows_of({random_bearing(rng), random_bearing(rng), random_bearing(rng)})));
  for (std::size_t r = 1; r < e.rows(); ++r) {
    for (std::size_t k = 0; k < e.cols(); ++k) EXPECT_EQ(e.value()(r, k), e.value()(0, k));
  }
}

TEST(Encode, RotatedBearingChangesEmbedding) {
  const auto params = NetworkParams::init(small_config(), 5);
  Tape t(false);
  const auto p = bind(t, params);
  const Var e = encode(p, t.constant(rows_of({Bearing::from_vector(Vec3::UnitX()), Bearing::from_vector(Vec3::UnitY())})));
  double diff = 0.0;
  for (std::size_t k = 0; k < e.cols(); ++k) diff += std::abs(e.value()(0, k) - e.value()(1, k));
  EXPECT_GT(diff, 1e-3);
}

TEST(Gnn, NoDetectionsStillFinite) {
  const auto params = NetworkParams::init(small_config(), 2);
  Tape t(false);
  const auto p = bind(t, params);
  std::mt19937_64 rng(2);
  const Var ep = encode(p, t.constant(rows_of({random_bearing(rng), random_bearing(rng)})));
  const Var ed = t.constant(Tensor(0, params.config.dim));
  const auto [fp, fd] = gnn_forward(p, params.config, ep, ed);
  EXPECT_EQ(fp.rows(), 2u);
  EXPECT_EQ(fd.rows(), 0u);
  for (double v : fp.value().data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Gnn, ZeroWeightsAreIdentity) {
  auto params = NetworkParams::init(small_config(), 2);
  for (auto& [name, tensor] : params.tensors) {
    if (name.rfind("gnn.", 0) == 0) zero_tensor(params, name);
  }
  Tape t(false);
  const auto p = bind(t, params);
  std::mt19937_64 rng(9);
  const Tensor ep = randn(3, params.config.dim, rng);
  const Tensor ed = randn(4, params.config.dim, rng);
  const auto [fp, fd] = gnn_forward(p, params.config, t.constant(ep), t.constant(ed));
  EXPECT_EQ(values(fp.value()), values(ep));
  EXPECT_EQ(values(fd.value()), values(ed));
}

TEST(Gnn, DetectionPermutationIsEquivariant) {
  const auto params = NetworkParams::init(small_config(), 6);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor ep = randn(3, params.config.dim, rng);
    const Tensor ed = randn(5, params.config.dim, rng);
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor edp(5, params.config.dim);
    for (int j = 0; j < 5; ++j) {
      for (std::size_t k = 0; k < ed.cols(); ++k) edp(j, k) = ed(perm[j], k);
    }
    Tape t(false);
    const auto p = bind(t, params);
    const auto [fp, fd] = gnn_forward(p, params.config, t.constant(ep), t.constant(ed));
    const auto [fp2, fd2] = gnn_forward(p, params.config, t.constant(ep), t.constant(edp));
    for (std::size_t i = 0; i < fp.value().size(); ++i) EXPECT_NEAR(fp.value()[i], fp2.value()[i], 1e-9);
    for (int j = 0; j < 5; ++j) {
      for (std::size_t k = 0; k < ed.cols(); ++k) EXPECT_NEAR(fd2.value()(j, k), fd.value()(perm[j], k), 1e-9);
    }
  }
}

TEST(Score, OrthogonalRowsScoreZero) {
  Tape t(false);
  Tensor a(2, 4, 0.0);
  a(0, 0) = 1.0;
  a(1, 1) = 1.0;
  const Var s = score(t.constant(a), t.constant(a), t.constant(Tensor(1, 1, 0.7)));
  EXPECT_EQ(s.value()(0, 1), 0.0);
  EXPECT_EQ(s.value()(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(s.value()(0, 0), 0.5);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(s.value()(2, k), 0.7);
    EXPECT_EQ(s.value()(k, 2), 0.7);
  }
}

TEST(Score, SelfScoreDiagonalIsRowMaximalAndBilinear) {
  std::mt19937_64 rng(11);
  Tensor f = randn(4, 8, rng);
  // Equal-norm rows make Cauchy-Schwarz give a strict row maximum on the diagonal.
  for (std::size_t r = 0; r < 4; ++r) {
    double n = 0.0;
    for (std::size_t k = 0; k < 8; ++k) n += f(r, k) * f(r, k);
    for (std::size_t k = 0; k < 8; ++k) f(r, k) /= std::sqrt(n);
  }
  Tape t(false);
  const Var z = t.constant(Tensor(1, 1, 0.0));
  const Var s = score(t.constant(f), t.constant(f), z);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (i != j) EXPECT_GT(s.value()(i, i), s.value()(i, j));
    }
  }
  const Var f2 = ad::scale(t.constant(f), 2.0);
  const Var s2 = score(f2, f2, z);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(s2.value()(i, j), 4.0 * s.value()(i, j), 1e-12);
  }
}

TEST(Sinkhorn, EqualScoresGiveUniformBlock) {
  const Eigen::MatrixXd p = sinkhorn(Eigen::MatrixXd::Zero(3, 3), 100);
  EXPECT_NEAR(p(0, 0), p(0, 1), 1e-12);
  EXPECT_NEAR(p(0, 0), p(1, 0), 1e-12);
  EXPECT_NEAR(p(0, 0), p(1, 1), 1e-12);
}

TEST(Sinkhorn, DominantLogitMatchesLongRunOracle) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(4, 4);
  s(1, 2) = 20.0;
  const Eigen::MatrixXd p = sinkhorn(s, 100);
  const Eigen::MatrixXd oracle = sinkhorn(s, 10000);
  EXPECT_GT(p(1, 2), 0.95);
  EXPECT_GT(oracle(1, 2), 0.95);
  EXPECT_NEAR(p(1, 2), oracle(1, 2), 1e-2);
}

TEST(Sinkhorn, MarginalsHoldOnRandomInputs) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 16);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = trial == 0 ? 5 : size(rng);
    const int m = trial == 0 ? 7 : size(rng);
    Eigen::MatrixXd s(n + 1, m + 1);
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= m; ++j) s(i, j) = g(rng);
    }
    const Eigen::MatrixXd p = sinkhorn(s, 100);
    const Eigen::VectorXd rm = row_marginals(n, m);
    const Eigen::VectorXd cm = col_marginals(n, m);
    for (int i = 0; i <= n; ++i) EXPECT_NEAR(p.row(i).sum(), rm[i], 1e-6) << n << "x" << m;
    for (int j = 0; j <= m; ++j) EXPECT_NEAR(p.col(j).sum(), cm[j], 1e-6) << n << "x" << m;
  }
}

TEST(Sinkhorn, RejectsBadArguments) {
  Tape t(false);
  EXPECT_THROW(log_sinkhorn(t.constant(Tensor(3, 3, 0.0)), 0), Error);
  EXPECT_THROW(log_sinkhorn(t.constant(Tensor(1, 3, 0.0)), 10), ShapeError);
}

TEST(ExtractMatches, NearPermutationIsFullyAssigned) {
  Eigen::MatrixXd p(4, 4);
  p << 0.02, 0.9, 0.03, 0.05,
       0.9, 0.02, 0.03, 0.05,
       0.03, 0.03, 0.9, 0.04,
       0.05, 0.05, 0.04, 2.86;
  const Matches m = extract_matches(p, 0.2);
  EXPECT_EQ(m.assignment, (std::vector<int>{1, 0, 2}));
  EXPECT_DOUBLE_EQ(m.prob[0], 0.9);
}

TEST(ExtractMatches, DustbinMassGivesEmptyAssignment) {
  Eigen::MatrixXd p(3, 3);
  p << 0.01, 0.01, 0.98,
       0.01, 0.01, 0.98,
       0.98, 0.98, 0.04;
  const Matches m = extract_matches(p, 0.2);
  EXPECT_EQ(m.assignment, (std::vector<int>{-1, -1}));
}

TEST(ExtractMatches, NonMutualPairIsRejected) {
  Eigen::MatrixXd p(3, 3);
  p << 0.5, 0.3, 0.2,
       0.6, 0.1, 0.3,
       0.0, 0.0, 0.0;
  const Matches m = extract_matches(p, 0.2);
  EXPECT_EQ(m.assignment, (std::vector<int>{-1, 0}));
}

TEST(ExtractMatches, ThresholdAndTies) {
  Eigen::MatrixXd p(3, 3);
  p << 0.1, 0.05, 0.0,
       0.4, 0.4, 0.0,
       0.0, 0.0, 0.0;
  // Row 1 ties between columns; lowest index wins. Row 0 is below threshold.
  const Matches m = extract_matches(p, 0.2);
  EXPECT_EQ(m.assignment, (std::vector<int>{-1, 0}));
}

TEST(Features, LayoutAndValues) {
  const MatchNetConfig c = small_config();
  Eigen::MatrixXd p(3, 4);
  p << 1.0, 0.0, 0.0, 0.0,
       0.0, 0.3, 0.5, 0.2,
       0.0, 0.7, 0.5, 1.8;
  Tape t(false);
  const Var lp = t.constant(Tensor::from_matrix(p.array().max(1e-300).log().matrix()));
  MatchInput in = MatchInput::from_priors({Vec3(0, 0, 4), Vec3(1, 1, 1)},
                                          {Bearing::from_vector(Vec3(0, 0, 1)), Bearing::from_vector(Vec3(1, 1, 1)),
                                           Bearing::from_vector(Vec3(1, 0, 0))},
                                          {5.0, 2.0});
  const Var f = build_features(c, lp, in, {HeadQuery{0, 0, 5.0}, HeadQuery{1, 1, 2.0}});
  ASSERT_EQ(f.cols(), static_cast<std::size_t>(c.feature_width()));
  EXPECT_EQ(c.feature_width(), 3 + 3 + c.max_det + 1 + 1);
  EXPECT_NEAR(f.value()(0, 2) * c.pos_scale, 5.0, 1e-12);
  EXPECT_NEAR(f.value()(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(f.value()(0, 5) * c.pos_scale, 4.0, 1e-12);
  EXPECT_NEAR(f.value()(0, f.cols() - 1), 0.0, 1e-12);  // P = 1
  // Row 1: dustbin 0.2, then 0.5, 0.3, 0.0, then zero padding; Var = 0.7.
  EXPECT_NEAR(f.value()(1, 6), 0.2, 1e-12);
  EXPECT_NEAR(f.value()(1, 7), 0.5, 1e-12);
  EXPECT_NEAR(f.value()(1, 8), 0.3, 1e-12);
  EXPECT_NEAR(f.value()(1, 9), 0.0, 1e-12);
  EXPECT_EQ(f.value()(1, 10), 0.0);
  EXPECT_NEAR(f.value()(1, f.cols() - 1), 0.7, 1e-12);
}

TEST(Predict, CovarianceHeadZeroAndClamp) {
  auto params = NetworkParams::init(small_config(), 8);
  zero_tensor(params, "cov.w2");
  zero_tensor(params, "cov.b2");
  std::mt19937_64 rng(8);
  const Tensor feat = randn(2, params.config.feature_width(), rng);
  {
    Tape t(false);
    const auto p = bind(t, params);
    const auto [pos, var] = predict(p, params.config, t.constant(feat), t.constant(Tensor(2, 3, 1.0)));
    for (double v : var.value().data()) EXPECT_DOUBLE_EQ(v, 1.0);
    // Untrained position head is zero: prediction equals vrPos.
    for (double v : pos.value().data()) EXPECT_DOUBLE_EQ(v, 1.0);
  }
  for (double& v : params.tensors.at("cov.b2").data()) v = -100.0;
  Tape t(false);
  const auto p = bind(t, params);
  const auto [pos, var] = predict(p, params.config, t.constant(feat), t.constant(Tensor(2, 3, 1.0)));
  for (double v : var.value().data()) EXPECT_NEAR(v, params.config.var_min, 1e-15);
}

TEST(Forward, ZeroDetectionsLeavesPriors) {
  const auto params = NetworkParams::init(small_config(), 1);
  const MatchInput in = MatchInput::from_priors({Vec3(3, 0, 0), Vec3(0, 4, 1)}, {}, {3.0, std::nullopt});
  const MatchResult r = forward(params, in);
  EXPECT_EQ(r.assignment, (std::vector<int>{-1, -1}));
  EXPECT_EQ(r.position[0], Vec3(3, 0, 0));
  EXPECT_EQ(r.position[1], Vec3(0, 4, 1));
  EXPECT_EQ(r.variance[0], Vec3::Constant(params.config.var_unmatched));
}

TEST(Forward, AssignmentIsInjectiveAndVariancesBounded) {
  const auto params = NetworkParams::init(small_config(), 4);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const MatchInput in = random_input(rng, 1 + trial % 5, trial % 8);
    const MatchResult r = forward(params, in);
    std::vector<int> used;
    for (std::size_t i = 0; i < r.assignment.size(); ++i) {
      if (r.assignment[i] < 0) continue;
      used.push_back(r.assignment[i]);
      EXPECT_GE(r.prob[i], params.config.threshold);
    }
    std::sort(used.begin(), used.end());
    EXPECT_EQ(std::adjacent_find(used.begin(), used.end()), used.end());
    for (const Vec3& v : r.variance) EXPECT_GE(v.minCoeff(), params.config.var_min);
  }
}

TEST(Forward, DetectionPermutationPermutesAssignment) {
  const auto params = NetworkParams::init(small_config(), 12);
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const MatchInput in = random_input(rng, 4, 6);
    std::vector<int> perm(in.m());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MatchInput pin = in;
    for (int j = 0; j < in.m(); ++j) pin.det_bearings[j] = in.det_bearings[perm[j]];
    const MatchResult a = forward(params, in);
    const MatchResult b = forward(params, pin);
    for (int i = 0; i < in.n(); ++i) {
      const int expect = a.assignment[i] < 0 ? -1 : static_cast<int>(std::find(perm.begin(), perm.end(), a.assignment[i]) - perm.begin());
      EXPECT_EQ(b.assignment[i], expect);
      EXPECT_NEAR(a.prob[i], b.prob[i], 1e-9);
      for (int j = 0; j < in.m(); ++j) EXPECT_NEAR(b.p_bar(i, j), a.p_bar(i, perm[j]), 1e-9);
    }
  }
}

TEST(Forward, BatchEqualsPerObserver) {
  const auto params = NetworkParams::init(small_config(), 21);
  std::mt19937_64 rng(21);
  std::vector<MatchInput> inputs{random_input(rng, 3, 4), random_input(rng, 3, 0), random_input(rng, 2, 5)};
  const auto batch = forward(params, inputs);
  for (std::size_t o = 0; o < inputs.size(); ++o) {
    const MatchResult single = forward(params, inputs[o]);
    EXPECT_EQ(single.assignment, batch[o].assignment);
    EXPECT_LT((single.p_bar - batch[o].p_bar).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, RejectsTooManyDetections) {
  const auto params = NetworkParams::init(small_config(), 1);
  std::mt19937_64 rng(1);
  EXPECT_THROW(forward(params, random_input(rng, 2, 9)), ShapeError);
}

TEST(Params, CheckpointRoundTripWithSidecar) {
  const auto params = NetworkParams::init(small_config(), 77);
  const std::string path = test::tmp_path("matchnet.ckpt");
  params.save(path);
  const auto back = NetworkParams::load(path);
  EXPECT_EQ(back.config, params.config);
  EXPECT_EQ(back.checksum(), params.checksum());
  for (const auto& [name, t] : params.tensors) EXPECT_EQ(values(back.tensors.at(name)), values(t)) << name;
  std::remove((path + ".meta.json").c_str());
  EXPECT_THROW(NetworkParams::load(path), Error);
}

TEST(Params, InitIsDeterministicAndShaped) {
  const auto a = NetworkParams::init(small_config(), 5);
  const auto b = NetworkParams::init(small_config(), 5);
  const auto c = NetworkParams::init(small_config(), 6);
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_NE(a.checksum(), c.checksum());
  EXPECT_NO_THROW(a.validate());
  EXPECT_EQ(a.tensors.size(), param_shapes(a.config).size());
}
