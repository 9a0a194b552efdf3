#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "rwt/dataset_io.hpp"
#include "rwt/geometry.hpp"
#include "rwt/se3.hpp"
#include "support/oracles.hpp"

namespace rwt {
namespace {

using testing::random_rotation;

const CameraIntrinsics kK = tum_fr3_intrinsics();

Vector6d random_twist(Rng& rng, double max_angle) {
  Vector6d xi;
  Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  xi.head<3>() = Eigen::Vector3d(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
  xi.tail<3>() = rng.uniform(0.0, max_angle) * axis;
  return xi;
}

bool is_rotation(const Eigen::Matrix3d& R, double tol = 1e-9) {
  return (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < tol &&
         std::abs(R.determinant() - 1.0) < tol;
}

TEST(Se3, ExpOfZeroIsIdentity) {
  const auto T = se3_exp(Vector6d::Zero());
  EXPECT_TRUE(T.R.isIdentity(0.0));
  EXPECT_TRUE(T.t.isZero(0.0));
}

TEST(Se3, PureTranslation) {
  Vector6d xi;
  xi << 1, 2, 3, 0, 0, 0;
  const auto T = se3_exp(xi);
  EXPECT_TRUE(T.R.isIdentity(0.0));
  EXPECT_EQ(T.t, Eigen::Vector3d(1, 2, 3));
}

TEST(Se3, LogExpRoundTrip) {
  Rng rng(1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto xi = random_twist(rng, std::numbers::pi - 0.1);
    const auto T = se3_exp(xi);
    ASSERT_TRUE(is_rotation(T.R));
    worst = std::max(worst, (se3_log(T) - xi).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Se3, SmallAngleBranch) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    Vector6d xi = random_twist(rng, 1e-9);
    const auto T = se3_exp(xi);
    EXPECT_LT((se3_log(T) - xi).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Se3, LogNearPi) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    const double angle = std::numbers::pi - rng.uniform(0.0, 1e-7);
    const Eigen::Matrix3d R = so3_exp(angle * axis);
    const Eigen::Vector3d w = so3_log(R);
    EXPECT_NEAR(w.norm(), angle, 1e-6);
    EXPECT_LT((so3_exp(w) - R).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Se3, LongCompositionStaysOrthonormal) {
  Rng rng(4);
  SE3 T;
  for (int i = 0; i < 5000; ++i) {
    T = se3_exp(random_twist(rng, 0.5)) * T;
    if (i % 100 == 99) T.renormalize();
  }
  T.renormalize();
  EXPECT_TRUE(is_rotation(T.R, 1e-12));
}

TEST(Se3, InverseAndQuaternion) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto T = se3_exp(random_twist(rng, 3.0));
    const auto I = T * T.inverse();
    EXPECT_TRUE(I.R.isIdentity(1e-12));
    EXPECT_LT(I.t.norm(), 1e-12);
    const SE3 back(T.quaternion(), T.t);
    EXPECT_LT((back.R - T.R).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Backproject, PrincipalPoint) {
  const auto p = backproject(kK.cx, kK.cy, 5000, kK, 5000);
  EXPECT_EQ(p, Eigen::Vector3d(0, 0, 1.0));
}

TEST(Backproject, OffsetPixel) {
  const auto p = backproject(kK.cx + kK.fx, kK.cy, 10000, kK, 5000);
  EXPECT_NEAR(p.x(), 2.0, 1e-12);
  EXPECT_EQ(p.y(), 0.0);
  EXPECT_EQ(p.z(), 2.0);
}

TEST(Backproject, Errors) {
  const auto code = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::IoError;
  };
  EXPECT_EQ(code([] { backproject(100, 100, 0, kK, 5000); }), Errc::InvalidDepth);
  EXPECT_EQ(code([] { backproject(100, 100, std::nan(""), kK, 5000); }), Errc::InvalidDepth);
  EXPECT_EQ(code([] { backproject(100, 100, 100, kK, 5000); }), Errc::DepthOutOfRange);
  EXPECT_EQ(code([] { backproject(100, 100, 60000, kK, 5000); }), Errc::DepthOutOfRange);
  EXPECT_FALSE(try_backproject(100, 100, 0, kK, 5000).has_value());
  EXPECT_FALSE(try_backproject(700, 100, 5000, kK, 5000).has_value());
}

TEST(Backproject, InvertsProjection) {
  Rng rng(6);
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector3d p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 5));
    const Eigen::Vector2d uv = project(p, kK);
    if (!kK.contains(uv.x(), uv.y())) continue;
    const auto back = backproject(uv.x(), uv.y(), p.z() * 5000.0, kK, 5000.0);
    EXPECT_LT((back - p).norm(), 1e-12);
  }
}

std::vector<Eigen::Vector3d> random_cloud(Rng& rng, std::size_t n) {
  std::vector<Eigen::Vector3d> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
  return pts;
}

TEST(Umeyama, IdentityOnEqualSets) {
  Rng rng(7);
  const auto P = random_cloud(rng, 10);
  const auto s = umeyama_align(P, P, true);
  EXPECT_TRUE(s.R.isIdentity(1e-12));
  EXPECT_LT(s.t.norm(), 1e-12);
  EXPECT_NEAR(s.scale, 1.0, 1e-12);
}

TEST(Umeyama, RecoversRigidTransforms) {
  Rng rng(8);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Matrix3d R0 = random_rotation(rng);
    const Eigen::Vector3d t0(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    const auto P = random_cloud(rng, 3 + rng.index(30));
    std::vector<Eigen::Vector3d> Q;
    for (const auto& p : P) Q.push_back(R0 * p + t0);
    const auto s = umeyama_align(P, Q, false);
    worst = std::max({worst, (s.R - R0).cwiseAbs().maxCoeff(), (s.t - t0).cwiseAbs().maxCoeff()});
    ASSERT_EQ(s.scale, 1.0);
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Umeyama, RecoversScale) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Matrix3d R0 = random_rotation(rng);
    const Eigen::Vector3d t0(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double s0 = rng.uniform(0.1, 10.0);
    const auto P = random_cloud(rng, 20);
    std::vector<Eigen::Vector3d> Q;
    for (const auto& p : P) Q.push_back(s0 * (R0 * p) + t0);
    const auto s = umeyama_align(P, Q, true);
    EXPECT_NEAR(s.scale, s0, 1e-9 * s0);
    EXPECT_LT((s.R - R0).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Umeyama, ReflectionNotReturned) {
  Rng rng(10);
  const auto P = random_cloud(rng, 12);
  std::vector<Eigen::Vector3d> Q;
  for (const auto& p : P) Q.emplace_back(-p.x(), p.y(), p.z());
  const auto s = umeyama_align(P, Q, false);
  EXPECT_TRUE(is_rotation(s.R));
}

TEST(Umeyama, DegenerateInputs) {
  const std::vector<Eigen::Vector3d> two{{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(umeyama_align(two, two, false), Error);
  const std::vector<Eigen::Vector3d> line{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
  EXPECT_THROW(umeyama_align(line, line, false), Error);
  const std::vector<Eigen::Vector3d> same{{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
  EXPECT_THROW(umeyama_align(same, same, false), Error);
}

TEST(Umeyama, BeatsRandomTransforms) {
  Rng rng(11);
  const auto P = random_cloud(rng, 15);
  std::vector<Eigen::Vector3d> Q;
  for (const auto& p : P) Q.push_back(p + Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()));
  const auto s = umeyama_align(P, Q, false);
  const auto residual = [&](const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
    double r = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) r += (Q[i] - (R * P[i] + t)).squaredNorm();
    return r;
  };
  const double best = residual(s.R, s.t);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d t(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    ASSERT_LE(best, residual(random_rotation(rng), t) + 1e-12);
  }
}

struct Synthetic {
  SE3 T_cw;
  std::vector<Correspondence> corrs;
  std::vector<bool> is_outlier;
};

Synthetic synthetic_view(Rng& rng, std::size_t n, double outlier_fraction) {
  Synthetic s;
  s.T_cw = SE3(random_rotation(rng), Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
  const SE3 T_wc = s.T_cw.inverse();
  while (s.corrs.size() < n) {
    const Eigen::Vector3d pc(rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), rng.uniform(1.0, 8.0));
    const Eigen::Vector2d uv = project(pc, kK);
    if (!kK.contains(uv.x(), uv.y())) continue;
    Correspondence c;
    c.point = T_wc * pc;
    c.pixel = uv;
    const bool outlier = static_cast<double>(s.corrs.size()) < outlier_fraction * static_cast<double>(n);
    if (outlier) c.pixel = Eigen::Vector2d(rng.uniform(0, 640), rng.uniform(0, 480));
    s.corrs.push_back(c);
    s.is_outlier.push_back(outlier);
  }
  return s;
}

TEST(Pnp, NoiselessRecovery) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = synthetic_view(rng, 50, 0.0);
    const auto r = pnp_ransac(s.corrs, kK);
    EXPECT_LT(rotation_distance(r.pose.R, s.T_cw.R), 1e-6);
    EXPECT_LT((r.pose.t - s.T_cw.t).norm(), 1e-6);
    EXPECT_EQ(r.inlier_count, 50U);
  }
}

TEST(Pnp, ThirtyPercentOutliers) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = synthetic_view(rng, 100, 0.3);
    const auto r = pnp_ransac(s.corrs, kK);
    EXPECT_LT(rotation_distance(r.pose.R, s.T_cw.R), 1e-3);
    EXPECT_LT((r.pose.t - s.T_cw.t).norm(), 1e-3);
    for (std::size_t i = 0; i < s.corrs.size(); ++i) {
      if (!s.is_outlier[i]) {
        EXPECT_TRUE(r.inliers[i]);
      }
    }
  }
}

TEST(Pnp, TooFewCorrespondences) {
  Rng rng(14);
  auto s = synthetic_view(rng, 3, 0.0);
  try {
    pnp_ransac(s.corrs, kK);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateConfiguration);
  }
}

TEST(Pnp, AllOutliersNotEnoughInliers) {
  Rng rng(15);
  auto s = synthetic_view(rng, 40, 1.0);
  EXPECT_THROW(pnp_ransac(s.corrs, kK), Error);
}

TEST(Pnp, DeterministicForSeed) {
  Rng rng(16);
  const auto s = synthetic_view(rng, 80, 0.4);
  const auto a = pnp_ransac(s.corrs, kK);
  const auto b = pnp_ransac(s.corrs, kK);
  EXPECT_EQ(a.pose.R, b.pose.R);
  EXPECT_EQ(a.pose.t, b.pose.t);
  EXPECT_EQ(a.inliers, b.inliers);
}

TEST(P3p, ContainsTruePose) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = synthetic_view(rng, 3, 0.0);
    std::array<Eigen::Vector3d, 3> bearings;
    std::array<Eigen::Vector3d, 3> world;
    for (int k = 0; k < 3; ++k) {
      bearings[k] = detail::bearing(s.corrs[k].pixel, kK);
      world[k] = s.corrs[k].point;
    }
    const auto poses = p3p_grunert(bearings, world);
    double best = 1e9;
    for (const auto& T : poses) best = std::min(best, rotation_distance(T.R, s.T_cw.R) + (T.t - s.T_cw.t).norm());
    EXPECT_LT(best, 1e-6) << "trial " << trial << " with " << poses.size() << " solutions";
  }
}

// Central differences of the residual under exp(d) * T.
Eigen::Matrix<double, 2, 6> numeric_jacobian(const SE3& T, const Correspondence& c) {
  Eigen::Matrix<double, 2, 6> J;
  const double h = 1e-6;
  for (int k = 0; k < 6; ++k) {
    Vector6d d = Vector6d::Zero();
    d(k) = h;
    Eigen::Vector2d rp;
    Eigen::Vector2d rm;
    reprojection_residual(se3_exp(d) * T, c, kK, rp);
    reprojection_residual(se3_exp(-d) * T, c, kK, rm);
    J.col(k) = (rp - rm) / (2.0 * h);
  }
  return J;
}

TEST(Ba, JacobianMatchesFiniteDifferences) {
  Rng rng(18);
  for (int state = 0; state < 100; ++state) {
    const auto s = synthetic_view(rng, 1, 0.0);
    const SE3 T = se3_exp(random_twist(rng, 0.05) * 0.05) * s.T_cw;
    Eigen::Vector2d r;
    Eigen::Matrix<double, 2, 6> J;
    ASSERT_TRUE(reprojection_residual(T, s.corrs[0], kK, r, &J));
    const auto Jn = numeric_jacobian(T, s.corrs[0]);
    const double rel = (J - Jn).cwiseAbs().maxCoeff() / J.cwiseAbs().maxCoeff();
    ASSERT_LT(rel, 1e-4) << "state " << state;
  }
}

TEST(Ba, AlreadyOptimal) {
  Rng rng(19);
  const auto s = synthetic_view(rng, 40, 0.0);
  const auto r = motion_only_ba(s.T_cw, s.corrs, kK);
  ASSERT_FALSE(r.cost_history.empty());
  EXPECT_LT(r.cost_history.front(), 1e-18);
  EXPECT_LE(r.final_cost, r.cost_history.front() + 1e-18);
  EXPECT_LT((r.pose.t - s.T_cw.t).norm(), 1e-9);
  EXPECT_EQ(r.inlier_count, 40U);
}

TEST(Ba, RecoversPerturbedPose) {
  Rng rng(20);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = synthetic_view(rng, 60, 0.0);
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
    Vector6d d;
    d.head<3>() = 0.1 * dir.normalized();
    d.tail<3>() = (5.0 * std::numbers::pi / 180.0) * axis.normalized();
    const SE3 initial = se3_exp(d) * s.T_cw;
    const auto r = motion_only_ba(initial, s.corrs, kK);
    EXPECT_LT(rotation_distance(r.pose.R, s.T_cw.R), 1e-6);
    EXPECT_LT((r.pose.t - s.T_cw.t).norm(), 1e-6);
    for (std::size_t i = 1; i < r.cost_history.size(); ++i) ASSERT_LE(r.cost_history[i], r.cost_history[i - 1]);
  }
}

TEST(Ba, RejectsOutliersAndDoesNotIncreaseResidual) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = synthetic_view(rng, 80, 0.2);
    for (std::size_t i = 0; i < s.corrs.size(); ++i) {
      if (!s.is_outlier[i]) s.corrs[i].pixel += Eigen::Vector2d(0.5 * rng.normal(), 0.5 * rng.normal());
    }
    const SE3 initial = se3_exp(random_twist(rng, 0.02) * 0.01) * s.T_cw;
    const auto r = motion_only_ba(initial, s.corrs, kK);
    std::size_t false_inliers = 0;
    for (std::size_t i = 0; i < s.corrs.size(); ++i) false_inliers += (s.is_outlier[i] && r.inliers[i]) ? 1 : 0;
    EXPECT_LE(false_inliers, 1U);
    EXPECT_LT((r.pose.t - s.T_cw.t).norm(), 0.02);
    const double before = detail::robust_cost(initial, s.corrs, r.inliers, kK, 2.447);
    EXPECT_LE(r.final_cost, before + 1e-12);
  }
}

TEST(Ba, NonFiniteInitial) {
  Rng rng(22);
  const auto s = synthetic_view(rng, 10, 0.0);
  SE3 bad = s.T_cw;
  bad.t.x() = std::nan("");
  EXPECT_THROW(motion_only_ba(bad, s.corrs, kK), Error);
}

}  // namespace
}  // namespace rwt
