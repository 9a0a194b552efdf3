#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "rwt/error.hpp"
#include "rwt/rng.hpp"
#include "rwt/se3.hpp"
#include "rwt/types.hpp"

namespace rwt {

inline constexpr double kDefaultDepthScale = 5000.0;

struct DepthRange {
  double min_m = 0.1;
  double max_m = 10.0;
};

/// 3D point with the observation it was created from.
struct Landmark3D {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::uint64_t frame_id = 0;
  std::size_t keypoint_index = 0;
};

/// Pinhole backprojection of a stored depth sample into the camera frame.
/// The pixel is not bounds-checked; that is the caller's job.
inline Eigen::Vector3d backproject(double u, double v, double depth_raw, const CameraIntrinsics& K,
                                   double depth_scale = kDefaultDepthScale, DepthRange range = {}) {
  if (!std::isfinite(depth_raw) || depth_raw <= 0.0) {
    throw Error(Errc::InvalidDepth, "depth sample is zero or not finite");
  }
  const double z = depth_raw / depth_scale;
  if (z < range.min_m || z > range.max_m) {
    throw Error(Errc::DepthOutOfRange, "depth " + std::to_string(z) + " m outside [" +
                                           std::to_string(range.min_m) + ", " +
                                           std::to_string(range.max_m) + "]");
  }
  return {(u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z};
}

/// Same as backproject but reports failure as nullopt.
inline std::optional<Eigen::Vector3d> try_backproject(double u, double v, double depth_raw,
                                                      const CameraIntrinsics& K, double depth_scale,
                                                      DepthRange range = {}) {
  if (!std::isfinite(depth_raw) || depth_raw <= 0.0 || !K.contains(u, v)) return std::nullopt;
  const double z = depth_raw / depth_scale;
  if (z < range.min_m || z > range.max_m) return std::nullopt;
  return Eigen::Vector3d((u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z);
}

inline Eigen::Vector2d project(const Eigen::Vector3d& p_cam, const CameraIntrinsics& K) {
  return {K.fx * p_cam.x() / p_cam.z() + K.cx, K.fy * p_cam.y() / p_cam.z() + K.cy};
}

struct Correspondence {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();  // world frame
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double weight = 1.0;
};

// ---------------------------------------------------------------------------
// Umeyama alignment

struct Similarity {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  double scale = 1.0;

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return scale * (R * p) + t; }
};

/// Least-squares (similarity or rigid) transform mapping P onto Q.
inline Similarity umeyama_align(std::span<const Eigen::Vector3d> P, std::span<const Eigen::Vector3d> Q,
                                bool with_scale) {
  if (P.size() != Q.size()) throw Error(Errc::DimensionMismatch, "point sets differ in size");
  if (P.size() < 3) throw Error(Errc::DegenerateInput, "need at least 3 point pairs");
  const double n = static_cast<double>(P.size());
  Eigen::Vector3d mu_p = Eigen::Vector3d::Zero();
  Eigen::Vector3d mu_q = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < P.size(); ++i) {
    mu_p += P[i];
    mu_q += Q[i];
  }
  mu_p /= n;
  mu_q /= n;
  Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d scatter_p = Eigen::Matrix3d::Zero();
  double var_p = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const Eigen::Vector3d dp = P[i] - mu_p;
    sigma += (Q[i] - mu_q) * dp.transpose();
    scatter_p += dp * dp.transpose();
    var_p += dp.squaredNorm();
  }
  sigma /= n;
  var_p /= n;

  const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3d>(scatter_p).singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    throw Error(Errc::DegenerateInput, "source points are coincident or collinear");
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) S(2, 2) = -1.0;
  Similarity out;
  out.R = svd.matrixU() * S * svd.matrixV().transpose();
  out.scale = with_scale ? (svd.singularValues().asDiagonal() * S).trace() / var_p : 1.0;
  out.t = mu_q - out.scale * out.R * mu_p;
  return out;
}

// ---------------------------------------------------------------------------
// Reprojection model

/// Residual pi(T * X) - uv and its Jacobian with respect to a left twist increment exp(d) * T.
/// Returns false when the point is not in front of the camera.
inline bool reprojection_residual(const SE3& T_cw, const Correspondence& c, const CameraIntrinsics& K,
                                  Eigen::Vector2d& residual,
                                  Eigen::Matrix<double, 2, 6>* jacobian = nullptr) {
  const Eigen::Vector3d pc = T_cw * c.point;
  if (!(pc.z() > 1e-9)) return false;
  const double inv_z = 1.0 / pc.z();
  residual = Eigen::Vector2d(K.fx * pc.x() * inv_z + K.cx, K.fy * pc.y() * inv_z + K.cy) - c.pixel;
  if (jacobian != nullptr) {
    Eigen::Matrix<double, 2, 3> dpi;
    dpi << K.fx * inv_z, 0.0, -K.fx * pc.x() * inv_z * inv_z,  //
        0.0, K.fy * inv_z, -K.fy * pc.y() * inv_z * inv_z;
    Eigen::Matrix<double, 3, 6> dp;
    dp.leftCols<3>() = Eigen::Matrix3d::Identity();
    dp.rightCols<3>() = -hat(pc);
    *jacobian = dpi * dp;
  }
  return true;
}

struct BaParams {
  double huber_delta_px = 2.447;  // sqrt(5.991)
  int max_iters = 20;
  int rounds = 2;  // outlier re-classification passes
};

struct BaResult {
  SE3 pose;
  double final_cost = 0.0;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
  int iterations = 0;
  bool converged = true;
  std::vector<double> cost_history;  // initial cost, then one entry per accepted step
};

namespace detail {

inline double huber(double sq, double delta) {
  const double d2 = delta * delta;
  return sq <= d2 ? sq : 2.0 * delta * std::sqrt(sq) - d2;
}

// Cost assigned to a point behind the camera: a fixed large Huber value.
inline double behind_camera_cost(double delta) { return huber(1e6, delta); }

inline double robust_cost(const SE3& T, std::span<const Correspondence> corrs,
                          const std::vector<bool>& active, const CameraIntrinsics& K, double delta) {
  double cost = 0.0;
  Eigen::Vector2d r;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (!active[i]) continue;
    if (reprojection_residual(T, corrs[i], K, r)) {
      cost += corrs[i].weight * huber(r.squaredNorm(), delta);
    } else {
      cost += corrs[i].weight * behind_camera_cost(delta);
    }
  }
  return cost;
}

struct LmOutcome {
  SE3 pose;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline LmOutcome levenberg_marquardt(const SE3& initial, std::span<const Correspondence> corrs,
                                     const std::vector<bool>& active, const CameraIntrinsics& K,
                                     double delta, int max_iters, std::vector<double>* history) {
  LmOutcome out{initial, robust_cost(initial, corrs, active, K, delta), 0, false};
  if (!std::isfinite(out.cost)) throw Error(Errc::NumericalFailure, "initial cost is not finite");
  if (history != nullptr) history->push_back(out.cost);
  double lambda = 1e-4;
  const double d2 = delta * delta;
  for (int it = 0; it < max_iters; ++it) {
    if (out.cost <= 1e-24) {
      out.converged = true;
      return out;
    }
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Vector6d g = Vector6d::Zero();
    Eigen::Vector2d r;
    Eigen::Matrix<double, 2, 6> J;
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      if (!active[i] || !reprojection_residual(out.pose, corrs[i], K, r, &J)) continue;
      const double sq = r.squaredNorm();
      const double w = corrs[i].weight * (sq <= d2 ? 1.0 : delta / std::sqrt(sq));
      H.noalias() += w * J.transpose() * J;
      g.noalias() += w * J.transpose() * r;
    }
    if (!H.allFinite() || !g.allFinite()) throw Error(Errc::NumericalFailure, "non-finite normal equations");
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) {
      out.converged = true;
      return out;
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
      Eigen::Matrix<double, 6, 6> A = H;
      A.diagonal() += lambda * H.diagonal().cwiseMax(1e-9);
      const Vector6d step = A.ldlt().solve(-g);
      if (!step.allFinite()) throw Error(Errc::NumericalFailure, "non-finite step");
      SE3 candidate = se3_exp(step) * out.pose;
      candidate.renormalize();
      const double cost = robust_cost(candidate, corrs, active, K, delta);
      if (!std::isfinite(cost)) throw Error(Errc::NumericalFailure, "non-finite cost");
      if (cost < out.cost) {
        const double decrease = out.cost - cost;
        out.pose = candidate;
        out.cost = cost;
        out.iterations = it + 1;
        if (history != nullptr) history->push_back(cost);
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        if (step.norm() < 1e-12 || decrease <= 1e-14 * (1.0 + cost)) {
          out.converged = true;
          return out;
        }
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) {
      // No descent direction improves the cost: at a minimum to numerical precision.
      out.converged = true;
      return out;
    }
  }
  return out;
}

}  // namespace detail

/// Refines a world-to-camera pose against fixed 3D points with a Huber-robustified reprojection
/// cost. Each round re-classifies outliers (squared error above delta^2) and optimizes over the
/// remaining inliers.
inline BaResult motion_only_ba(const SE3& initial, std::span<const Correspondence> corrs,
                               const CameraIntrinsics& K, const BaParams& params = {}) {
  if (!initial.is_finite()) throw Error(Errc::NumericalFailure, "initial pose is not finite");
  BaResult result;
  result.pose = initial;
  std::vector<bool> active(corrs.size(), true);
  const double d2 = params.huber_delta_px * params.huber_delta_px;
  const auto classify = [&](const SE3& T) {
    std::vector<bool> in(corrs.size(), false);
    Eigen::Vector2d r;
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      in[i] = reprojection_residual(T, corrs[i], K, r) && r.squaredNorm() <= d2;
    }
    return in;
  };
  result.converged = true;
  for (int round = 0; round < std::max(1, params.rounds); ++round) {
    std::vector<double>* history = round == 0 ? &result.cost_history : nullptr;
    const auto lm = detail::levenberg_marquardt(result.pose, corrs, active, K, params.huber_delta_px,
                                                params.max_iters, history);
    result.pose = lm.pose;
    result.iterations += lm.iterations;
    result.converged = lm.converged;
    const auto next = classify(result.pose);
    if (next == active || std::count(next.begin(), next.end(), true) < 3) break;
    active = next;
  }
  result.inliers = classify(result.pose);
  result.inlier_count = static_cast<std::size_t>(std::count(result.inliers.begin(), result.inliers.end(), true));
  result.final_cost = detail::robust_cost(result.pose, corrs, result.inliers, K, params.huber_delta_px);
  return result;
}

// ---------------------------------------------------------------------------
// Perspective-n-point

namespace detail {

/// Real roots of a4 x^4 + ... + a0 via companion-matrix eigenvalues.
inline std::vector<double> real_quartic_roots(double a4, double a3, double a2, double a1, double a0) {
  std::vector<double> roots;
  if (std::abs(a4) < 1e-14 * (std::abs(a3) + std::abs(a2) + std::abs(a1) + std::abs(a0))) return roots;
  Eigen::Matrix4d C = Eigen::Matrix4d::Zero();
  C(0, 0) = -a3 / a4;
  C(0, 1) = -a2 / a4;
  C(0, 2) = -a1 / a4;
  C(0, 3) = -a0 / a4;
  C(1, 0) = 1.0;
  C(2, 1) = 1.0;
  C(3, 2) = 1.0;
  Eigen::EigenSolver<Eigen::Matrix4d> es(C, false);
  if (es.info() != Eigen::Success) return roots;
  for (int i = 0; i < 4; ++i) {
    const std::complex<double> z = es.eigenvalues()(i);
    if (std::abs(z.imag()) <= 1e-6 * std::max(1.0, std::abs(z.real()))) {
      // One Newton step polishes the eigenvalue estimate.
      double x = z.real();
      const double f = (((a4 * x + a3) * x + a2) * x + a1) * x + a0;
      const double df = ((4.0 * a4 * x + 3.0 * a3) * x + 2.0 * a2) * x + a1;
      if (df != 0.0) x -= f / df;
      roots.push_back(x);
    }
  }
  return roots;
}

}  // namespace detail

/// Grunert's three-point solver. Bearings are unit rays in the camera frame; returns candidate
/// world-to-camera poses.
inline std::vector<SE3> p3p_grunert(const std::array<Eigen::Vector3d, 3>& bearings,
                                    const std::array<Eigen::Vector3d, 3>& world) {
  std::vector<SE3> poses;
  const double a2 = (world[1] - world[2]).squaredNorm();
  const double b2 = (world[0] - world[2]).squaredNorm();
  const double c2 = (world[0] - world[1]).squaredNorm();
  if (a2 < 1e-18 || b2 < 1e-18 || c2 < 1e-18) return poses;
  const double ca = bearings[1].dot(bearings[2]);
  const double cb = bearings[0].dot(bearings[2]);
  const double cg = bearings[0].dot(bearings[1]);

  const double k1 = (a2 - c2) / b2;
  const double k2 = (a2 + c2) / b2;
  const double A4 = (k1 - 1.0) * (k1 - 1.0) - 4.0 * c2 / b2 * ca * ca;
  const double A3 = 4.0 * (k1 * (1.0 - k1) * cb - (1.0 - k2) * ca * cg + 2.0 * c2 / b2 * ca * ca * cb);
  const double A2 = 2.0 * (k1 * k1 - 1.0 + 2.0 * k1 * k1 * cb * cb + 2.0 * (b2 - c2) / b2 * ca * ca -
                           4.0 * k2 * ca * cb * cg + 2.0 * (b2 - a2) / b2 * cg * cg);
  const double A1 = 4.0 * (-k1 * (1.0 + k1) * cb + 2.0 * a2 / b2 * cg * cg * cb - (1.0 - k2) * ca * cg);
  const double A0 = (1.0 + k1) * (1.0 + k1) - 4.0 * a2 / b2 * cg * cg;

  for (double v : detail::real_quartic_roots(A4, A3, A2, A1, A0)) {
    if (!(v > 0.0)) continue;
    const double den = 2.0 * (cg - v * ca);
    if (std::abs(den) < 1e-14) continue;
    const double u = ((-1.0 + k1) * v * v - 2.0 * k1 * cb * v + 1.0 + k1) / den;
    if (!(u > 0.0)) continue;
    const double s1_sq = b2 / (1.0 + v * v - 2.0 * v * cb);
    if (!(s1_sq > 0.0)) continue;
    const double s1 = std::sqrt(s1_sq);
    const std::array<Eigen::Vector3d, 3> cam = {s1 * bearings[0], u * s1 * bearings[1], v * s1 * bearings[2]};
    try {
      const auto sim = umeyama_align(world, cam, false);
      poses.emplace_back(sim.R, sim.t);
    } catch (const Error&) {
      // collinear triple
    }
  }
  return poses;
}

struct PnpParams {
  int iterations = 100;
  double reproj_thresh_px = 3.0;
  std::size_t min_inliers = 10;
  std::uint64_t seed = 42;
};

struct PnpResult {
  SE3 pose;  // world-to-camera
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
};

namespace detail {

inline std::vector<bool> reprojection_inliers(const SE3& T, std::span<const Correspondence> corrs,
                                              const CameraIntrinsics& K, double thresh,
                                              std::size_t& count) {
  std::vector<bool> in(corrs.size(), false);
  count = 0;
  const double t2 = thresh * thresh;
  Eigen::Vector2d r;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (reprojection_residual(T, corrs[i], K, r) && r.squaredNorm() <= t2) {
      in[i] = true;
      ++count;
    }
  }
  return in;
}

inline Eigen::Vector3d bearing(const Eigen::Vector2d& px, const CameraIntrinsics& K) {
  return Eigen::Vector3d((px.x() - K.cx) / K.fx, (px.y() - K.cy) / K.fy, 1.0).normalized();
}

}  // namespace detail

/// RANSAC over minimal P3P samples (three points solve, a fourth disambiguates), followed by
/// least-squares refinement on the consensus set. Deterministic for a fixed seed.
inline PnpResult pnp_ransac(std::span<const Correspondence> corrs, const CameraIntrinsics& K,
                            const PnpParams& params = {}) {
  if (corrs.size() < 4) {
    throw Error(Errc::DegenerateConfiguration,
                "PnP needs at least 4 correspondences, got " + std::to_string(corrs.size()));
  }
  Rng rng(params.seed);
  std::vector<Eigen::Vector3d> bearings;
  bearings.reserve(corrs.size());
  for (const auto& c : corrs) bearings.push_back(detail::bearing(c.pixel, K));

  bool any_hypothesis = false;
  std::size_t best_count = 0;
  SE3 best_pose;
  std::array<std::size_t, 4> sample{};
  for (int it = 0; it < params.iterations; ++it) {
    for (std::size_t k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        sample[k] = rng.index(corrs.size());
        fresh = std::find(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(k), sample[k]) ==
                sample.begin() + static_cast<std::ptrdiff_t>(k);
      }
    }
    const auto candidates = p3p_grunert({bearings[sample[0]], bearings[sample[1]], bearings[sample[2]]},
                                        {corrs[sample[0]].point, corrs[sample[1]].point, corrs[sample[2]].point});
    double best_check = std::numeric_limits<double>::infinity();
    const SE3* chosen = nullptr;
    for (const auto& T : candidates) {
      Eigen::Vector2d r;
      if (!reprojection_residual(T, corrs[sample[3]], K, r)) continue;
      if (r.squaredNorm() < best_check) {
        best_check = r.squaredNorm();
        chosen = &T;
      }
    }
    if (chosen == nullptr) continue;
    any_hypothesis = true;
    std::size_t count = 0;
    detail::reprojection_inliers(*chosen, corrs, K, params.reproj_thresh_px, count);
    if (count > best_count) {
      best_count = count;
      best_pose = *chosen;
    }
  }
  if (!any_hypothesis) {
    throw Error(Errc::DegenerateConfiguration, "no minimal sample produced a valid pose");
  }
  if (best_count < params.min_inliers) {
    throw Error(Errc::NotEnoughInliers, std::to_string(best_count) + " inliers, need " +
                                            std::to_string(params.min_inliers));
  }

  PnpResult result;
  result.pose = best_pose;
  std::size_t count = 0;
  result.inliers = detail::reprojection_inliers(best_pose, corrs, K, params.reproj_thresh_px, count);
  for (int pass = 0; pass < 2; ++pass) {
    const auto lm = detail::levenberg_marquardt(result.pose, corrs, result.inliers, K,
                                                params.reproj_thresh_px, 30, nullptr);
    std::size_t refined_count = 0;
    auto refined = detail::reprojection_inliers(lm.pose, corrs, K, params.reproj_thresh_px, refined_count);
    if (refined_count < count) break;
    result.pose = lm.pose;
    const bool same = refined == result.inliers;
    result.inliers = std::move(refined);
    count = refined_count;
    if (same) break;
  }
  result.inlier_count = count;
  if (result.inlier_count < params.min_inliers) {
    throw Error(Errc::NotEnoughInliers, std::to_string(result.inlier_count) + " inliers after refinement");
  }
  return result;
}

}  // namespace rwt
