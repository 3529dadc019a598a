#include <gtest/gtest.h>

#include <numbers>

#include "swarmloc/error.hpp"
#include "swarmloc/geom.hpp"
#include "test_util.hpp"

using namespace swarmloc;
using swarmloc::test::quat_distance;
using swarmloc::test::random_pose;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Matrix4d homogeneous(const Pose& p) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 3>(0, 0) = p.rotation();
  m.block<3, 1>(0, 3) = p.t();
  return m;
}

Pose yaw(double a, const Vec3& t = Vec3::Zero()) { return Pose::from_ypr(a, 0, 0, t); }

}  // namespace

TEST(Geom, ComposeIdentityIsNoop) {
  std::mt19937_64 rng(1);
  const Pose p = random_pose(rng);
  const Pose c = compose(Pose::identity(), p);
  EXPECT_LT(quat_distance(c.q(), p.q()), 1e-12);
  EXPECT_LT((c.t() - p.t()).norm(), 1e-12);
}

TEST(Geom, ComposePureTranslations) {
  const Pose c = compose(Pose::from_translation({1, 0, 0}), Pose::from_translation({0, 1, 0}));
  EXPECT_LT((c.t() - Vec3(1, 1, 0)).norm(), 1e-15);
  EXPECT_LT(quat_distance(c.q(), Quat::Identity()), 1e-15);
}

TEST(Geom, ComposeMatchesHomogeneousProduct) {
  const Pose c = compose(yaw(kPi / 2), Pose::from_translation({1, 0, 0}));
  EXPECT_LT((c.t() - Vec3(0, 1, 0)).norm(), 1e-12);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Eigen::Matrix4d m = homogeneous(a) * homogeneous(b);
    EXPECT_LT((homogeneous(compose(a, b)) - m).norm(), 1e-9);
  }
}

TEST(Geom, QuaternionIsUnitAndCanonical) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = random_pose(rng);
    EXPECT_NEAR(p.q().norm(), 1.0, 1e-9);
    EXPECT_GE(p.q().w(), 0.0);
  }
  EXPECT_THROW(Pose(Quat(0, 0, 0, 0), Vec3::Zero()), GeomError);
}

TEST(Geom, CanonicalIsIdempotentBitwise) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = random_pose(rng);
    const Pose again(p.q(), p.t());
    EXPECT_EQ(again.q().coeffs(), p.q().coeffs());
  }
}

TEST(Geom, InverseExamples) {
  const Pose i = inverse(Pose::identity());
  EXPECT_LT(i.t().norm(), 1e-15);
  EXPECT_LT(quat_distance(i.q(), Quat::Identity()), 1e-15);
  const Pose t = inverse(Pose::from_translation({1, 2, 3}));
  EXPECT_LT((t.t() - Vec3(-1, -2, -3)).norm(), 1e-15);
}

TEST(Geom, InverseRoundTripProperty) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = random_pose(rng);
    for (const Pose& c : {compose(p, inverse(p)), compose(inverse(p), p)}) {
      EXPECT_LT(quat_distance(c.q(), Quat::Identity()), 1e-9);
      EXPECT_LT(c.t().norm(), 1e-9);
    }
  }
}

TEST(Geom, ComposeIsAssociative) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 1000; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Pose c = random_pose(rng);
    const Pose l = compose(compose(a, b), c);
    const Pose r = compose(a, compose(b, c));
    EXPECT_LT(quat_distance(l.q(), r.q()), 1e-8);
    EXPECT_LT((l.t() - r.t()).norm(), 1e-8);
  }
}

TEST(Geom, RelativeExamples) {
  std::mt19937_64 rng(7);
  const Pose p = random_pose(rng);
  const Pose self = relative(p, p);
  EXPECT_LT(self.t().norm(), 1e-9);
  EXPECT_LT(quat_distance(self.q(), Quat::Identity()), 1e-9);

  const Pose r = relative(Pose::identity(), Pose::from_translation({1, 2, 3}));
  EXPECT_LT((r.t() - Vec3(1, 2, 3)).norm(), 1e-15);

  const Pose y = relative(yaw(kPi / 2), Pose::from_translation({0, 1, 0}));
  EXPECT_LT((y.t() - Vec3(1, 0, 0)).norm(), 1e-12);
}

TEST(Geom, RelativeEqualsComposeInverse) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Pose r = relative(a, b);
    const Pose c = compose(inverse(a), b);
    EXPECT_EQ(r.q().coeffs(), c.q().coeffs());
    EXPECT_EQ(r.t(), c.t());
    const Eigen::Matrix4d oracle = homogeneous(a).inverse() * homogeneous(b);
    EXPECT_LT((homogeneous(r) - oracle).norm(), 1e-9);
  }
}

TEST(Geom, BearingExamples) {
  EXPECT_LT((bearing_to(Pose::identity(), {0, 0, 5}).u - Vec3(0, 0, 1)).norm(), 1e-15);
  EXPECT_LT((bearing_to(Pose::from_translation({1, 0, 0}), {2, 0, 0}).u - Vec3(1, 0, 0)).norm(),
            1e-15);
  const Pose obs = yaw(kPi / 2, {1, 1, 0});
  const Vec3 target(0, 3, 1);
  const Vec3 oracle = (obs.rotation().transpose() * (target - obs.t())).normalized();
  const Vec3 u = bearing_to(obs, target).u;
  EXPECT_LT((u - oracle).norm(), 1e-12);
  // Target ahead-left of an observer facing +y lands in +x, +y of the body.
  EXPECT_GT(u.x(), 0.0);
  EXPECT_GT(u.y(), 0.0);
}

TEST(Geom, BearingIsUnitAndRejectsCoincidence) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = random_pose(rng);
    const Pose q = random_pose(rng);
    EXPECT_NEAR(bearing_to(p, q.t()).u.norm(), 1.0, 1e-9);
  }
  EXPECT_THROW(bearing_to(Pose::identity(), {0, 0, 1e-7}), GeomError);
  EXPECT_THROW(Bearing::from_vector(Vec3::Zero()), GeomError);
}

TEST(Geom, ExpLogRoundTrip) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    Vec3 phi(n(rng), n(rng), n(rng));
    if (phi.norm() > 3.0) phi *= 3.0 / phi.norm();
    EXPECT_LT((log_so3(exp_so3(phi)) - phi).norm(), 1e-9);
  }
  const Vec3 tiny(1e-10, -2e-10, 3e-10);
  EXPECT_LT((log_so3(exp_so3(tiny)) - tiny).norm(), 1e-18);
  EXPECT_NEAR(rotation_angle_between(yaw(0.0).q(), yaw(0.3).q()), 0.3, 1e-12);
}

TEST(Geom, SkewIsCrossProduct) {
  const Vec3 a(1, -2, 0.5);
  const Vec3 b(0.3, 0.7, -1.1);
  EXPECT_LT((skew(a) * b - a.cross(b)).norm(), 1e-15);
}
