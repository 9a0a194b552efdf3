#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "rwt/types.hpp"

namespace rwt {

using Vector6d = Eigen::Matrix<double, 6, 1>;

inline Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(),  //
      w.z(), 0.0, -w.x(),   //
      -w.y(), w.x(), 0.0;
  return m;
}

/// Closest rotation in the Frobenius sense.
inline Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

inline Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d W = hat(w);
  double a;
  double b;
  if (theta < 1e-8) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Eigen::Matrix3d::Identity() + a * W + b * W * W;
}

inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& R) {
  const Eigen::Vector3d axis_sin(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const double s = 0.5 * axis_sin.norm();
  const double c = 0.5 * (R.trace() - 1.0);
  const double theta = std::atan2(s, c);
  if (theta < 1e-8) {
    return 0.5 * (1.0 + theta * theta / 6.0) * axis_sin;
  }
  if (std::numbers::pi - theta < 1e-6) {
    // Near pi the antisymmetric part vanishes; recover the axis from the symmetric part.
    const Eigen::Matrix3d B =
        (0.5 * (R + R.transpose()) - c * Eigen::Matrix3d::Identity()) / (1.0 - c);
    int k = 0;
    B.diagonal().maxCoeff(&k);
    Eigen::Vector3d axis = B.col(k) / std::sqrt(std::max(B(k, k), 1e-300));
    axis.normalize();
    if (axis.dot(axis_sin) < 0.0) axis = -axis;
    return theta * axis;
  }
  return theta / (2.0 * s) * axis_sin;
}

/// Rigid transform x -> R x + t. Used world-to-camera inside the optimizer and camera-to-world for
/// trajectories.
struct SE3 {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  SE3() = default;
  SE3(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : R(rotation), t(translation) {}
  SE3(const Eigen::Quaterniond& q, const Eigen::Vector3d& translation)
      : R(q.normalized().toRotationMatrix()), t(translation) {}

  static SE3 identity() { return {}; }

  SE3 inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return R * p + t; }

  SE3 operator*(const SE3& o) const { return {R * o.R, R * o.t + t}; }

  Eigen::Quaterniond quaternion() const {
    Eigen::Quaterniond q(R);
    q.normalize();
    return q;
  }

  void renormalize() { R = orthonormalize(R); }

  bool is_finite() const { return R.allFinite() && t.allFinite(); }
};

/// Twist layout: (rho, omega), translation part first.
inline SE3 se3_exp(const Vector6d& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d w = xi.tail<3>();
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d W = hat(w);
  double b;
  double c;
  if (theta < 1e-8) {
    b = 0.5 - theta2 / 24.0;
    c = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    b = (1.0 - std::cos(theta)) / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }
  const Eigen::Matrix3d V = Eigen::Matrix3d::Identity() + b * W + c * W * W;
  return {so3_exp(w), V * rho};
}

inline Vector6d se3_log(const SE3& T) {
  const Eigen::Vector3d w = so3_log(T.R);
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d W = hat(w);
  double d;
  if (theta < 1e-8) {
    d = 1.0 / 12.0 + theta2 / 720.0;
  } else {
    const double half = 0.5 * theta;
    d = (1.0 - half * std::cos(half) / std::sin(half)) / theta2;
  }
  const Eigen::Matrix3d V_inv = Eigen::Matrix3d::Identity() - 0.5 * W + d * W * W;
  Vector6d xi;
  xi.head<3>() = V_inv * T.t;
  xi.tail<3>() = w;
  return xi;
}

inline Pose to_pose(const SE3& T_wc, double timestamp) {
  Pose p;
  p.timestamp = timestamp;
  p.translation = T_wc.t;
  p.rotation = T_wc.quaternion();
  return p;
}

inline SE3 to_se3(const Pose& p) { return {p.rotation, p.translation}; }

/// Rotation angle of R_a^T R_b in radians.
inline double rotation_distance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return so3_log(a.transpose() * b).norm();
}

}  // namespace rwt
