#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "swarmloc/ad/checkpoint.hpp"
#include "swarmloc/ad/gradcheck.hpp"
#include "swarmloc/ad/ops.hpp"
#include "swarmloc/error.hpp"
#include "gradcheck_suite.hpp"
#include "test_util.hpp"

using namespace swarmloc;
using namespace swarmloc::ad;
using namespace swarmloc::test;

TEST(Autodiff, SpecExamples) {
  Tape t;
  const Var m = matmul(t.constant(Tensor(2, 3, 1.0)), t.constant(Tensor(3, 1, 1.0)));
  ASSERT_EQ(m.rows(), 2u);
  ASSERT_EQ(m.cols(), 1u);
  EXPECT_EQ(m.value()(0, 0), 3.0);
  EXPECT_EQ(m.value()(1, 0), 3.0);

  const Var r = relu(t.constant(Tensor::row({-1, 0, 2})));
  EXPECT_EQ(r.value().values(), (std::vector<double>{0, 0, 2}));

  const Var s = softmax_rows(t.constant(Tensor::row({0, 0})));
  EXPECT_DOUBLE_EQ(s.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(s.value()[1], 0.5);
}

TEST(Autodiff, ShapeMismatchThrows) {
  Tape t;
  const Var a = t.constant(Tensor(2, 3));
  const Var b = t.constant(Tensor(2, 2));
  EXPECT_THROW(matmul(a, b), ShapeError);
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(concat_cols({a, t.constant(Tensor(3, 1))}), ShapeError);
  EXPECT_THROW(slice(a, 1, 2, 0, 1), ShapeError);
}

TEST(Autodiff, BackwardExamples) {
  {
    Tape t;
    const Var x = t.parameter("x", Tensor(3, 4, 0.5));
    const Gradients g = t.backward(sum(x));
    for (double v : g.params.at("x").data()) EXPECT_EQ(v, 1.0);
  }
  {
    Tape t;
    const Var x = t.parameter("x", Tensor::row({1, 2}));
    const Var unused = t.parameter("unused", Tensor(2, 2, 3.0));
    (void)unused;
    const Gradients g = t.backward(sum(square(x)));
    EXPECT_DOUBLE_EQ(g.params.at("x")[0], 2.0);
    EXPECT_DOUBLE_EQ(g.params.at("x")[1], 4.0);
    for (double v : g.params.at("unused").data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Autodiff, NonScalarLossThrows) {
  Tape t;
  const Var x = t.parameter("x", Tensor(2, 1, 1.0));
  EXPECT_THROW(t.backward(x), ShapeError);
}

TEST(Autodiff, EveryPrimitivePassesGradcheckOverRandomShapes) {
  for (const CheckResult& r : primitive_gradchecks(100, 2024)) {
    EXPECT_TRUE(r.passed) << r.name << " rel " << r.max_rel_error;
    EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
  }
}

TEST(Autodiff, GradcheckOfSumPasses) {
  std::mt19937_64 rng(3);
  const auto report = gradcheck([](Tape&, const Var& x) { return sum(x); }, randn(4, 3, rng));
  EXPECT_TRUE(report.passed);
  EXPECT_EQ(report.entries.size(), 12u);
}

TEST(Autodiff, SoftmaxCrossEntropyGradcheck) {
  std::mt19937_64 rng(4);
  const Tensor logits = randn(5, 6, rng, 2.0);
  Tensor onehot(5, 6);
  for (std::size_t i = 0; i < 5; ++i) onehot(i, (i * 5) % 6) = 1.0;
  const auto report = gradcheck(
      [&](Tape& t, const Var& x) {
        const Var logp = sub(x, broadcast(logsumexp_rows(x), 5, 6));
        return neg(mean(mul(logp, t.constant(onehot))));
      },
      logits, 1e-6, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Autodiff, ThreeLayerMlpGradcheck) {
  std::mt19937_64 rng(5);
  NamedTensors p{{"w1", randn(4, 8, rng, 0.5)}, {"b1", randn(1, 8, rng, 0.1)},
                 {"w2", randn(8, 8, rng, 0.5)}, {"b2", randn(1, 8, rng, 0.1)},
                 {"w3", randn(8, 2, rng, 0.5)}, {"b3", randn(1, 2, rng, 0.1)}};
  const Tensor x = randn(6, 4, rng);
  const Tensor y = randn(6, 2, rng);
  auto f = [&](Tape& t, const std::map<std::string, Var>& v) {
    Var h = relu(add_row(matmul(t.constant(x), v.at("w1")), v.at("b1")));
    h = relu(add_row(matmul(h, v.at("w2")), v.at("b2")));
    const Var o = add_row(matmul(h, v.at("w3")), v.at("b3"));
    return mean(square(sub(o, t.constant(y))));
  };
  GradcheckOptions opt;
  opt.tol = 1e-5;
  const auto report = gradcheck(f, p, opt);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Autodiff, WrongBackwardFailsGradcheck) {
  std::mt19937_64 rng(6);
  auto bad_square = [](Tape&, const Var& x) {
    Tensor v = x.value();
    for (double& e : v.data()) e = e * e;
    const Tensor xv = x.value();
    // Deliberately missing the factor 2.
    const Var y = custom({x}, v, [xv](const Tensor& g, std::vector<Tensor*>& gi) {
      gi[0]->map().array() += g.map().array() * xv.map().array();
    });
    return sum(y);
  };
  const auto report = gradcheck(bad_square, away_from_zero(3, 3, rng, true));
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_rel_error, 0.4);
}

TEST(Autodiff, CustomWithCorrectBackwardPasses) {
  std::mt19937_64 rng(7);
  auto good_square = [](Tape&, const Var& x) {
    Tensor v = x.value();
    for (double& e : v.data()) e = e * e;
    const Tensor xv = x.value();
    return sum(custom({x}, v, [xv](const Tensor& g, std::vector<Tensor*>& gi) {
      gi[0]->map().array() += 2.0 * g.map().array() * xv.map().array();
    }));
  };
  EXPECT_TRUE(gradcheck(good_square, randn(2, 5, rng)).passed);
}

TEST(Autodiff, RepeatedPassesAreBitIdentical) {
  auto run = []() {
    std::mt19937_64 rng(99);
    Tape t;
    const Var w = t.parameter("w", randn(5, 7, rng));
    const Var x = t.constant(randn(3, 5, rng));
    const Var s = softmax_rows(matmul(x, w));
    const Var loss = sum(mul(log(add_scalar(s, 1e-3)), s));
    const Gradients g = t.backward(loss);
    return std::make_pair(loss.item(), g.params.at("w").values());
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Autodiff, GradTrackingDisabledRecordsNoBackward) {
  Tape t(false);
  const Var x = t.input(Tensor(2, 2, 1.0));
  const Var y = exp(x);
  EXPECT_FALSE(t.requires_grad(y));
  EXPECT_NEAR(y.value()[0], std::exp(1.0), 1e-15);
}

TEST(Autodiff, RangeAttentionEmptyRangeGivesZeros) {
  Tape t;
  std::mt19937_64 rng(8);
  const Var q = t.input(randn(2, 3, rng));
  const Var k = t.input(randn(4, 3, rng));
  const Var v = t.input(randn(4, 2, rng));
  const Var o = range_attention(q, k, v, {{0, 0}, {1, 3}}, 1.0);
  EXPECT_EQ(o.value()(0, 0), 0.0);
  EXPECT_EQ(o.value()(0, 1), 0.0);
  EXPECT_NE(o.value()(1, 0), 0.0);
  EXPECT_THROW(range_attention(q, k, v, {{0, 5}, {0, 1}}, 1.0), ShapeError);
}

TEST(Autodiff, LogsumexpIsStableForLargeInputs) {
  Tape t;
  const Var x = t.constant(Tensor::row({1000.0, 1000.0}));
  EXPECT_NEAR(logsumexp_rows(x).item(), 1000.0 + std::log(2.0), 1e-12);
  const Var y = t.constant(Tensor::row({-1e4, -1e4}));
  EXPECT_TRUE(softmax_rows(y).value().all_finite());
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 rng(10);
  ParamMap p{{"enc.w0", randn(3, 5, rng)}, {"z", Tensor::scalar(1.0 / 3.0)},
             {"head.b", randn(1, 4, rng, 1e-7)}};
  const std::string path = swarmloc::test::tmp_path("ckpt_roundtrip.json");
  save_params(p, path);
  const ParamMap q = load_params(path);
  ASSERT_EQ(q.size(), p.size());
  for (const auto& [name, t] : p) {
    ASSERT_TRUE(q.at(name).same_shape(t));
    EXPECT_EQ(q.at(name).values(), t.values()) << name;
  }
}

TEST(Checkpoint, RejectsWrongFormatAndShape) {
  EXPECT_THROW(params_from_json(R"({"format":"other","params":{}})"), Error);
  EXPECT_THROW(
      params_from_json(R"({"format":"swarmloc-params/1","params":{"a":{"shape":[2,2],"data":[1,2,3]}}})"),
      Error);
}
